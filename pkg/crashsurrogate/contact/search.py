import itertools

import numpy as np

from collections import defaultdict
from dataclasses import dataclass

from crashsurrogate.helpers.errors import ShapeError


@dataclass(frozen=True, eq=False)
class Candidates:
    """Unordered proximity pairs, i < j, sorted lexicographically, with their distances"""
    pairs: np.ndarray
    distances: np.ndarray

    @property
    def size(self):
        return int(self.pairs.shape[0])

    def as_set(self):
        return {(int(i), int(j)) for i, j in self.pairs}


def pair_distances(positions, pairs):
    d = positions[pairs[:, 1]] - positions[pairs[:, 0]]
    return np.sqrt((d ** 2).sum(axis=1))


def _finalise(positions, pairs, radius, exclude_keys):
    n = positions.shape[0]
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if exclude_keys is not None and pairs.size:
        pairs = pairs[~np.isin(pairs[:, 0] * n + pairs[:, 1], exclude_keys)]

    dist = pair_distances(positions, pairs)
    keep = dist <= radius
    pairs, dist = pairs[keep], dist[keep]

    order = np.lexsort((pairs[:, 1], pairs[:, 0]))

    return Candidates(pairs[order], dist[order])


def _check(positions, radius):
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 2:
        raise ShapeError(f'positions should be N x dim, got {positions.shape}')
    if not radius > 0:
        raise ShapeError(f'Search radius should be positive, got {radius}')

    return positions


def mesh_exclusion_keys(graph):
    """Keys i * N + j of every mesh edge with i < j"""
    e = graph.edges[graph.edges[:, 0] < graph.edges[:, 1]]
    return e[:, 0] * graph.node_count + e[:, 1]


class SpatialHash:
    """Uniform grid of cell size `cell_size`; nodes are bucketed by their integer cell coordinates"""

    def __init__(self, cell_size):
        self.cell_size = cell_size
        self.hash_table = defaultdict(list)

    def _cell(self, x):
        return tuple(int(c) for c in np.floor(x / self.cell_size))

    def insert_all(self, positions):
        for idx, x in enumerate(positions):
            self.hash_table[self._cell(x)].append(idx)

    def candidate_pairs(self, dim):
        offsets = list(itertools.product((-1, 0, 1), repeat=dim))
        pairs = []
        for cell, members in self.hash_table.items():
            others = []
            for off in offsets:
                others.extend(self.hash_table.get(tuple(c + o for c, o in zip(cell, off)), ()))
            for i in members:
                pairs.extend((i, j) for j in others if i < j)

        return pairs

    def clear(self):
        self.hash_table.clear()


def radius_search(positions, radius, graph=None):
    """
    All unordered pairs with |x_i - x_j| <= radius, mesh edges of `graph` excluded. Any pair
    within the radius lies in the same or an adjacent cell of a grid with cell size = radius.
    """
    positions = _check(positions, radius)

    grid = SpatialHash(radius)
    grid.insert_all(positions)

    return _finalise(positions, grid.candidate_pairs(positions.shape[1]), radius,
                     mesh_exclusion_keys(graph) if graph is not None else None)


def brute_force_search(positions, radius, graph=None):
    positions = _check(positions, radius)
    i, j = np.triu_indices(positions.shape[0], k=1)

    return _finalise(positions, np.stack([i, j], axis=1), radius,
                     mesh_exclusion_keys(graph) if graph is not None else None)
