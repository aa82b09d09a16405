import logging
import time

import numpy as np

from dataclasses import dataclass, field
from typing import List

from crashsurrogate.autodiff.tensor import Tensor, no_grad
from crashsurrogate.contact.block import build_contacts
from crashsurrogate.helpers.errors import RolloutDivergedError, ShapeError
from crashsurrogate.mesh.features import estimate_velocity
from crashsurrogate.mesh.graph import NodeState, Trajectory
from crashsurrogate.rollout.integrate import euler_step, euler_step_tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RolloutResult:
    predicted: Trajectory
    per_step_contact_counts: List[int] = field(default_factory=list)
    wall_time: float = 0.0


def _contacts_for(model, graph, positions, params, built_at):
    if not model.contact_enabled:
        return None

    return build_contacts(graph, positions, params, built_at=built_at)


def _seed_states(initial, dt):
    if isinstance(initial, NodeState):
        return [initial]

    states = list(initial)
    if len(states) == 1:
        return states
    if len(states) != 2:
        raise ShapeError(f'Rollout needs (x_0, v_0) or the first two states, got {len(states)} states')

    x0, x1 = states
    v1 = estimate_velocity(x1.positions, x0.positions, dt)

    return [NodeState(x0.positions, x0.velocities, 0), NodeState(x1.positions, v1, 1)]


def predict_step(model, graph, state, stats, dt, params=None):
    """One step from the given `state`; returns (next state, ContactSet or None)"""
    if model.contact_enabled and params is None:
        params = model.contact_params(graph)

    contacts = _contacts_for(model, graph, state.positions, params, state.time_index)
    with no_grad():
        a = model.predict_accelerations(graph, state.positions, state.velocities, stats, contacts)

    return euler_step(state, a, dt, graph.node_role, step=state.time_index + 1), contacts


def rollout(model, graph, initial, T, dt, stats, design=None, survival_pair=(0, 0), sample_id=0, params=None):
    """
    Closed-loop rollout to horizon T. `initial` is either one NodeState (x_0 with its physical v_0)
    or the first two states, in which case v_1 follows the finite difference and T-1 steps remain.
    Contact-enabled models rebuild their ContactSet from the predicted geometry every step.
    """
    if T < 1:
        raise ShapeError(f'Rollout horizon should be >= 1, got {T}')

    start = time.perf_counter()
    states = _seed_states(initial, dt)
    if model.contact_enabled and params is None:
        params = model.contact_params(graph)

    counts = []
    while len(states) <= T:
        nxt, contacts = predict_step(model, graph, states[-1], stats, dt, params)
        counts.append(contacts.size if contacts is not None else 0)
        states.append(nxt)

    predicted = Trajectory(graph=graph, states=states, dt=dt, design=design, survival_pair=survival_pair, sample_id=sample_id)

    return RolloutResult(predicted, counts, time.perf_counter() - start)


def rollout_reference(model, reference, stats, params=None):
    """Rollout seeded from (x_0, v_0) of a reference trajectory over its full horizon"""
    return rollout(model, reference.graph, reference.states[0], reference.horizon, reference.dt, stats,
                   design=reference.design, survival_pair=reference.survival_pair, sample_id=reference.sample_id,
                   params=params)


def differentiable_rollout(model, graph, initial, T, dt, stats, truncation_window=None, params=None):
    """
    Closed-loop rollout that keeps the autodiff graph: returns the predicted position Tensors for
    t = 1..T. With `truncation_window` w the state is detached every w steps (truncated backprop).
    """
    if model.contact_enabled and params is None:
        params = model.contact_params(graph)

    x = Tensor(initial.positions)
    v = Tensor(initial.velocities)
    free = graph.free_mask

    predicted = []
    for t in range(1, T + 1):
        if truncation_window and t > 1 and (t - 1) % truncation_window == 0:
            x, v = x.detach(), v.detach()

        contacts = _contacts_for(model, graph, x.values, params, t - 1)
        a = model.predict_accelerations(graph, x, v, stats, contacts)
        if not np.isfinite(a.values).all():
            raise RolloutDivergedError(t)

        x, v = euler_step_tensor(x, v, a, dt, free)
        predicted.append(x)

    return predicted
