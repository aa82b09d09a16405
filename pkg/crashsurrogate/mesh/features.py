import numpy as np

from dataclasses import dataclass

from crashsurrogate.autodiff import ops
from crashsurrogate.autodiff.tensor import Tensor, as_tensor, is_deterministic, no_grad
from crashsurrogate.helpers.errors import NotFittedError, ShapeError
from crashsurrogate.mesh.graph import BASE_STATIC_FEATURES, ROLE_COLS, THICKNESS_COL

STD_FLOOR = 1e-8


def estimate_velocity(x_t, x_prev, dt):
    """Backward finite difference (x_t - x_prev) / dt"""
    x_t = np.asarray(x_t, dtype=np.float64)
    x_prev = np.asarray(x_prev, dtype=np.float64)

    if x_t.shape != x_prev.shape:
        raise ShapeError(f'estimate_velocity: shape mismatch {x_t.shape} vs {x_prev.shape}')

    if not dt > 0:
        raise ShapeError(f'estimate_velocity: dt should be positive, got {dt}')

    return (x_t - x_prev) / dt


def target_accelerations(trajectory):
    """Accelerations a_t, t = 0..T-1, that make the forward Euler update reproduce the trajectory"""
    v = trajectory.velocities

    return (v[1:] - v[:-1]) / trajectory.dt


@dataclass
class NormStats:
    accel_mean: np.ndarray = None
    accel_std: np.ndarray = None
    feature_mean: np.ndarray = None
    feature_std: np.ndarray = None
    position_scale: float = 1.0

    @property
    def fitted(self):
        return all(x is not None for x in (self.accel_mean, self.accel_std, self.feature_mean, self.feature_std))

    def require_fitted(self):
        if not self.fitted:
            raise NotFittedError('NormStats are not fitted, run fit_norm_stats on the training split first')

    def to_arrays(self):
        self.require_fitted()
        return {
            'accel_mean': self.accel_mean,
            'accel_std': self.accel_std,
            'feature_mean': self.feature_mean,
            'feature_std': self.feature_std,
            'position_scale': np.array([self.position_scale]),
        }

    @classmethod
    def from_arrays(cls, arrays):
        return cls(
            accel_mean=np.array(arrays['accel_mean'], dtype=np.float64),
            accel_std=np.array(arrays['accel_std'], dtype=np.float64),
            feature_mean=np.array(arrays['feature_mean'], dtype=np.float64),
            feature_std=np.array(arrays['feature_std'], dtype=np.float64),
            position_scale=float(np.asarray(arrays['position_scale']).reshape(-1)[0]),
        )


def _mean_std(samples, std_floor):
    if is_deterministic():
        # summing sorted columns makes the statistics independent of sample order
        samples = np.sort(samples, axis=0)

    mean = samples.mean(axis=0)
    std = np.sqrt(((samples - mean) ** 2).mean(axis=0))

    return mean, np.maximum(std, std_floor)


def fit_norm_stats(train_trajectories, std_floor=STD_FLOOR):
    """Acceleration and velocity-feature statistics over FREE nodes of the training split only"""
    train_trajectories = list(train_trajectories)
    if not train_trajectories:
        raise ShapeError('fit_norm_stats needs at least one training trajectory')

    accels, vels, disp = [], [], []
    for traj in train_trajectories:
        if traj.horizon < 2:
            raise ShapeError(f'Trajectory {traj.sample_id} has {traj.horizon} transitions, need at least 2')

        free = traj.graph.free_mask
        accels.append(target_accelerations(traj)[:, free].reshape(-1, traj.graph.dim))
        vels.append(traj.velocities[:, free].reshape(-1, traj.graph.dim))

        pos = traj.positions[:, free]
        disp.append(((pos - pos[0]) ** 2).sum(axis=-1).reshape(-1))

    accel_mean, accel_std = _mean_std(np.concatenate(accels), std_floor)
    feature_mean, feature_std = _mean_std(np.concatenate(vels), std_floor)

    disp = np.concatenate(disp)
    if is_deterministic():
        disp = np.sort(disp)
    position_scale = max(1.0, float(np.sqrt(disp.mean())))

    return NormStats(accel_mean, accel_std, feature_mean, feature_std, position_scale)


@dataclass(frozen=True)
class FeatureLayout:
    """
    Node-feature layout: velocity (dim) ++ role encoding ('onehot' -> 2, 'flag' -> 1) ++ thickness (1)
    ++ `extra_features` columns of reference-position encodings.
    """
    role_encoding: str = 'onehot'
    extra_features: int = 0

    def __post_init__(self):
        if self.role_encoding not in ('onehot', 'flag'):
            raise ValueError(f'role_encoding {self.role_encoding} invalid, choose one of: onehot, flag')
        if self.extra_features < 0:
            raise ValueError(f'extra_features should be >= 0, got {self.extra_features}')

    def node_dim(self, dim):
        return dim + (2 if self.role_encoding == 'onehot' else 1) + 1 + self.extra_features


def normalised_reference_positions(graph):
    """Min-max normalised reference coordinates in [0, 1]; a degenerate axis maps to 0"""
    p = graph.reference_positions
    lo = p.min(axis=0)
    span = p.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)

    return np.where(span > 0, (p - lo) / safe, 0.0)


def position_encodings(graph, count):
    if count == 0:
        return np.zeros((graph.node_count, 0))

    p = normalised_reference_positions(graph)
    enc = np.concatenate([p, np.sin(np.pi * p), np.cos(np.pi * p)], axis=1)
    if count > enc.shape[1]:
        enc = np.concatenate([enc, np.zeros((graph.node_count, count - enc.shape[1]))], axis=1)

    return enc[:, :count]


def static_feature_block(graph, layout):
    if graph.static_features.shape[1] < BASE_STATIC_FEATURES:
        raise ShapeError(f'static_features need at least {BASE_STATIC_FEATURES} columns (role one-hot, thickness)')

    phi = graph.static_features
    if layout.role_encoding == 'onehot':
        role = phi[:, list(ROLE_COLS)]
    else:
        role = phi[:, [ROLE_COLS[1]]]

    return np.concatenate([role, phi[:, [THICKNESS_COL]], position_encodings(graph, layout.extra_features)], axis=1)


def node_feature_tensor(graph, velocities, stats, layout=FeatureLayout()):
    """Differentiable feature assembly; `velocities` may be a Tensor carrying gradients"""
    if stats is None:
        raise NotFittedError('NormStats are missing, fit them on the training split first')
    stats.require_fitted()

    velocities = as_tensor(velocities)
    if velocities.shape != (graph.node_count, graph.dim):
        raise ShapeError(f'velocities {velocities.shape} do not match graph {(graph.node_count, graph.dim)}')

    v_norm = ops.div(ops.sub(velocities, stats.feature_mean.reshape(1, -1)), stats.feature_std.reshape(1, -1))

    return ops.concat([v_norm, Tensor(static_feature_block(graph, layout))], axis=1)


def assemble_node_features(graph, state, stats, layout=FeatureLayout()):
    with no_grad():
        return node_feature_tensor(graph, state.velocities, stats, layout).values


def edge_feature_tensor(graph, positions):
    """
    Per-edge [x_j - x_i, |x_j - x_i|, u_j - u_i, |u_j - u_i|] with u = x - reference position,
    differentiable in `positions`.
    """
    positions = as_tensor(positions)
    if positions.shape != (graph.node_count, graph.dim):
        raise ShapeError(f'positions {positions.shape} do not match graph {(graph.node_count, graph.dim)}')

    rel = ops.sub(ops.gather_rows(positions, graph.neighbours), ops.gather_rows(positions, graph.receivers))
    ref = graph.reference_positions
    rel_disp = ops.sub(rel, ref[graph.neighbours] - ref[graph.receivers])

    return ops.concat([rel, ops.row_norm(rel), rel_disp, ops.row_norm(rel_disp)], axis=1)


def build_edge_features(graph, state):
    with no_grad():
        return edge_feature_tensor(graph, state.positions).values
