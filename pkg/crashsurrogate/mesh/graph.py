import numpy as np

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Optional, Tuple

from crashsurrogate.helpers.errors import ShapeError

ROLE_COLS = (0, 1)
THICKNESS_COL = 2
BASE_STATIC_FEATURES = 3


class NodeRole(IntEnum):
    FREE = 0
    RIGID = 1


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)

    return a


def make_static_features(node_role, thickness, extra=None):
    """Static node features phi: role one-hot (free, rigid) ++ thickness ++ optional extra columns"""
    node_role = np.asarray(node_role)
    onehot = np.zeros((node_role.shape[0], 2))
    onehot[np.arange(node_role.shape[0]), node_role.astype(int)] = 1.0
    cols = [onehot, np.asarray(thickness, dtype=np.float64).reshape(-1, 1)]
    if extra is not None:
        cols.append(np.asarray(extra, dtype=np.float64).reshape(node_role.shape[0], -1))

    return np.concatenate(cols, axis=1)


def undirected_to_edges(pairs):
    """Both directions of every undirected pair, sorted, duplicates dropped"""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    both = np.concatenate([pairs, pairs[:, ::-1]], axis=0)

    return np.unique(both, axis=0)


@dataclass(frozen=True, eq=False)
class MeshGraph:
    """
    Static structural graph. Edge k = (i, j) carries the message from neighbour j into receiver i;
    every undirected connection is stored in both directions exactly once.
    """
    edges: np.ndarray
    node_role: np.ndarray
    static_features: np.ndarray
    reference_positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'edges', _frozen(np.asarray(self.edges).reshape(-1, 2), np.int64))
        object.__setattr__(self, 'node_role', _frozen(self.node_role, np.int8))
        object.__setattr__(self, 'static_features', _frozen(self.static_features, np.float64))
        object.__setattr__(self, 'reference_positions', _frozen(self.reference_positions, np.float64))
        self.validate()

    def validate(self):
        n = self.node_count
        if n < 1:
            raise ShapeError('A mesh graph needs at least one node')

        if self.static_features.ndim != 2 or self.static_features.shape[0] != n:
            raise ShapeError(f'static_features should be {n} x F, got {self.static_features.shape}')

        if self.reference_positions.ndim != 2 or self.reference_positions.shape[0] != n:
            raise ShapeError(f'reference_positions should be {n} x dim, got {self.reference_positions.shape}')

        if not np.isin(self.node_role, [NodeRole.FREE, NodeRole.RIGID]).all():
            raise ShapeError('node_role contains values other than FREE / RIGID')

        if not (self.node_role == NodeRole.FREE).any():
            raise ShapeError('A mesh graph needs at least one FREE node')

        e = self.edges
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise ShapeError(f'Edge index out of range for {n} nodes')
            if (e[:, 0] == e[:, 1]).any():
                raise ShapeError('Self-loops are not allowed in the mesh graph')

            keys = e[:, 0] * n + e[:, 1]
            if np.unique(keys).size != keys.size:
                raise ShapeError('Duplicate directed edges in the mesh graph')
            if not np.isin(e[:, 1] * n + e[:, 0], keys).all():
                raise ShapeError('Every edge (i, j) needs its reverse (j, i)')

    @property
    def node_count(self):
        return int(self.node_role.shape[0])

    @property
    def edge_count(self):
        return int(self.edges.shape[0])

    @property
    def dim(self):
        return int(self.reference_positions.shape[1])

    @property
    def receivers(self):
        return self.edges[:, 0]

    @property
    def neighbours(self):
        return self.edges[:, 1]

    @property
    def free_mask(self):
        return self.node_role == NodeRole.FREE

    @property
    def rigid_mask(self):
        return self.node_role == NodeRole.RIGID

    @property
    def thickness(self):
        return self.static_features[:, THICKNESS_COL]

    def edge_keys(self):
        return self.edges[:, 0] * self.node_count + self.edges[:, 1]

    def median_edge_length(self):
        if self.edge_count == 0:
            return 1.0

        d = self.reference_positions[self.neighbours] - self.reference_positions[self.receivers]
        return float(np.median(np.linalg.norm(d, axis=1)))

    def permuted(self, perm):
        """
        Relabel nodes: new node k is old node perm[k]. Edge order is kept, only indices change.
        """
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)

        return MeshGraph(inv[self.edges], self.node_role[perm], self.static_features[perm], self.reference_positions[perm])


@dataclass(frozen=True, eq=False)
class NodeState:
    positions: np.ndarray
    velocities: np.ndarray
    time_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'positions', _frozen(self.positions, np.float64))
        object.__setattr__(self, 'velocities', _frozen(self.velocities, np.float64))

        if self.positions.shape != self.velocities.shape or self.positions.ndim != 2:
            raise ShapeError(f'positions {self.positions.shape} and velocities {self.velocities.shape} should be equal N x dim')

        if self.time_index < 0:
            raise ShapeError(f'time_index should be non-negative, got {self.time_index}')

        if not (np.isfinite(self.positions).all() and np.isfinite(self.velocities).all()):
            raise ShapeError(f'Non-finite entries in node state at time index {self.time_index}')

    def permuted(self, perm):
        return NodeState(self.positions[perm], self.velocities[perm], self.time_index)


@dataclass(frozen=True, eq=False)
class Trajectory:
    graph: MeshGraph
    states: Tuple[NodeState, ...]
    dt: float
    design: Optional[Any] = None
    survival_pair: Tuple[int, int] = (0, 0)
    sample_id: int = 0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'states', tuple(self.states))
        object.__setattr__(self, 'survival_pair', tuple(int(x) for x in self.survival_pair))

        if not self.dt > 0:
            raise ShapeError(f'dt should be positive, got {self.dt}')

        if len(self.states) < 1:
            raise ShapeError('A trajectory needs at least one state')

        for k, state in enumerate(self.states):
            if state.time_index != k:
                raise ShapeError(f'State {k} has time_index {state.time_index}')
            if state.positions.shape != (self.graph.node_count, self.graph.dim):
                raise ShapeError(f'State {k} has shape {state.positions.shape}, graph expects {(self.graph.node_count, self.graph.dim)}')

        a, b = self.survival_pair
        if not (0 <= a < self.graph.node_count and 0 <= b < self.graph.node_count):
            raise ShapeError(f'survival_pair {self.survival_pair} out of range')

        if not self.rigid_nodes_fixed():
            raise ShapeError('RIGID nodes move within the trajectory')

    @classmethod
    def from_positions(cls, graph, positions, initial_velocity, dt, **kwargs):
        """
        Reference trajectory from T+1 position frames and the physical initial velocity; later
        velocities follow the finite difference (x_t - x_{t-1}) / dt.
        """
        from crashsurrogate.mesh.features import estimate_velocity

        positions = np.asarray(positions, dtype=np.float64)
        velocities = [np.asarray(initial_velocity, dtype=np.float64)]
        for t in range(1, positions.shape[0]):
            velocities.append(estimate_velocity(positions[t], positions[t - 1], dt))

        states = [NodeState(positions[t], velocities[t], t) for t in range(positions.shape[0])]

        return cls(graph=graph, states=states, dt=dt, **kwargs)

    @property
    def horizon(self):
        return len(self.states) - 1

    @property
    def positions(self):
        return np.stack([s.positions for s in self.states])

    @property
    def velocities(self):
        return np.stack([s.velocities for s in self.states])

    def rigid_nodes_fixed(self):
        rigid = self.graph.rigid_mask
        if not rigid.any():
            return True

        first = self.states[0].positions[rigid]
        return all(np.array_equal(s.positions[rigid], first) for s in self.states[1:])

    def permuted(self, perm):
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)

        return Trajectory(
            graph=self.graph.permuted(perm),
            states=[s.permuted(perm) for s in self.states],
            dt=self.dt,
            design=self.design,
            survival_pair=(int(inv[self.survival_pair[0]]), int(inv[self.survival_pair[1]])),
            sample_id=self.sample_id,
        )
