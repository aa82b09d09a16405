import numpy as np

from crashsurrogate.autodiff import ops
from crashsurrogate.autodiff.tensor import Tensor, as_tensor
from crashsurrogate.helpers.errors import RolloutDivergedError, ShapeError
from crashsurrogate.mesh.graph import NodeRole, NodeState


def euler_step(state, accelerations, dt, roles, step=None):
    """
    Forward Euler update v' = v + dt a, x' = x + dt v' for FREE nodes. RIGID rows copy x and v.
    Non-finite accelerations raise RolloutDivergedError naming the step.
    """
    a = np.asarray(accelerations.values if isinstance(accelerations, Tensor) else accelerations, dtype=np.float64)
    step = state.time_index if step is None else step

    if a.shape != state.positions.shape:
        raise ShapeError(f'Accelerations {a.shape} do not match state {state.positions.shape}')
    if not np.isfinite(a).all():
        raise RolloutDivergedError(step, f'Non-finite accelerations predicted at rollout step {step}')

    free = (np.asarray(roles) == NodeRole.FREE)[:, None]
    v_next = np.where(free, state.velocities + dt * a, state.velocities)
    x_next = np.where(free, state.positions + dt * v_next, state.positions)

    if not (np.isfinite(v_next).all() and np.isfinite(x_next).all()):
        raise RolloutDivergedError(step)

    return NodeState(x_next, v_next, state.time_index + 1)


def euler_step_tensor(positions, velocities, accelerations, dt, free_mask):
    """Differentiable twin of `euler_step` used for training rollouts"""
    free = free_mask.astype(np.float64)[:, None]
    a = ops.mul(as_tensor(accelerations), free)
    velocities = ops.add(velocities, ops.mul(a, dt))
    positions = ops.add(positions, ops.mul(velocities, dt * free))

    return positions, velocities
