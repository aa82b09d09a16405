import numpy as np
import pandas as pd

from dataclasses import dataclass

from crashsurrogate.autodiff import ops
from crashsurrogate.autodiff.nn import Module
from crashsurrogate.autodiff.tensor import Parameter, Tensor
from crashsurrogate.contact.search import radius_search
from crashsurrogate.helpers.errors import ConfigError, ShapeError
from crashsurrogate.models.layers import MLP

DEFAULT_RADIUS_FACTOR = 3.0
DEFAULT_ALPHA_INIT = 1e-3


@dataclass(frozen=True)
class ContactParams:
    radius: float
    k: int = 32
    alpha_init: float = DEFAULT_ALPHA_INIT

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f'Contact radius should be positive, got {self.radius}')
        if self.k < 1:
            raise ConfigError(f'Contact k should be >= 1, got {self.k}')

    @classmethod
    def for_graph(cls, graph, k=32, alpha_init=DEFAULT_ALPHA_INIT, radius=None, radius_factor=DEFAULT_RADIUS_FACTOR):
        """Radius defaults to `radius_factor` x the median undeformed edge length"""
        if radius is None:
            radius = radius_factor * graph.median_edge_length()

        return cls(radius=float(radius), k=int(k), alpha_init=float(alpha_init))


@dataclass(frozen=True, eq=False)
class ContactSet:
    """
    Directed proximity pairs (source i, partner j) selected per source node, with the pair
    geometry at the time of construction. Geometry is plain data, no gradient flows through it.
    """
    pairs: np.ndarray
    distances: np.ndarray
    gaps: np.ndarray
    offsets: np.ndarray
    built_at: int = 0
    k: int = 1
    radius: float = 1.0

    @property
    def size(self):
        return int(self.pairs.shape[0])

    def per_node_counts(self, node_count):
        return np.bincount(self.pairs[:, 0], minlength=node_count) if self.size else np.zeros(node_count, dtype=np.int64)

    def unordered(self):
        """Indices of the directed pairs that represent each unordered pair once (i < j or reverse absent)"""
        if not self.size:
            return np.zeros(0, dtype=np.int64)

        lo = np.minimum(self.pairs[:, 0], self.pairs[:, 1])
        hi = np.maximum(self.pairs[:, 0], self.pairs[:, 1])
        _, first = np.unique(np.stack([lo, hi], axis=1), axis=0, return_index=True)

        return np.sort(first)

    def to_frame(self):
        return pd.DataFrame({
            'i': self.pairs[:, 0],
            'j': self.pairs[:, 1],
            'distance': self.distances,
            'gap': self.gaps,
        })

    def validate(self, graph):
        if self.size:
            if (self.pairs[:, 0] == self.pairs[:, 1]).any():
                raise ShapeError('ContactSet holds a self pair')
            if np.isin(self.pairs[:, 0] * graph.node_count + self.pairs[:, 1], graph.edge_keys()).any():
                raise ShapeError('ContactSet duplicates a mesh edge')
            if (self.distances > self.radius).any() or (self.gaps < 0).any():
                raise ShapeError('ContactSet pair outside the search radius or with negative gap')
        if (self.per_node_counts(graph.node_count) > self.k).any():
            raise ShapeError(f'ContactSet exceeds {self.k} pairs for some source node')

        return self


def empty_contact_set(dim, built_at=0, k=1, radius=1.0):
    return ContactSet(np.zeros((0, 2), dtype=np.int64), np.zeros(0), np.zeros(0), np.zeros((0, dim)), built_at, k, radius)


def filter_and_sparsify(candidates, graph, params, positions=None, built_at=0):
    """
    Thickness-aware gap and per-source top-k selection. Pairs closer than the mean thickness are
    kept with gap 0. Each node keeps its k nearest partners; ties go to the smaller distance,
    then to the smaller partner index.
    """
    positions = graph.reference_positions if positions is None else np.asarray(positions, dtype=np.float64)
    if not candidates.size:
        return empty_contact_set(graph.dim, built_at, params.k, params.radius)

    src = np.concatenate([candidates.pairs[:, 0], candidates.pairs[:, 1]])
    dst = np.concatenate([candidates.pairs[:, 1], candidates.pairs[:, 0]])
    dist = np.concatenate([candidates.distances, candidates.distances])

    order = np.lexsort((dst, dist, src))
    src, dst, dist = src[order], dst[order], dist[order]

    starts = np.flatnonzero(np.r_[True, src[1:] != src[:-1]])
    rank = np.arange(src.size) - np.repeat(starts, np.diff(np.r_[starts, src.size]))
    keep = rank < params.k
    src, dst, dist = src[keep], dst[keep], dist[keep]

    t = graph.thickness
    gap = np.maximum(0.0, dist - 0.5 * (t[src] + t[dst]))

    pairs = np.stack([src, dst], axis=1)
    delta = positions[dst] - positions[src]
    safe = np.where(dist > 0, dist, 1.0)[:, None]
    offsets = np.where(dist[:, None] > 0, delta / safe, 0.0)

    return ContactSet(pairs, dist, gap, offsets, built_at, params.k, params.radius)


def build_contacts(graph, positions, params, built_at=0):
    positions = np.asarray(positions, dtype=np.float64)
    candidates = radius_search(positions, params.radius, graph)

    return filter_and_sparsify(candidates, graph, params, positions=positions, built_at=built_at)


class ContactBlock(Module):
    """
    Bounded residual latent injection H~ = H + alpha * dH. One pair MLP maps
    (h_i, h_j, distance, gap, unit offset) to a message; every unordered pair sends it both ways
    with the offset sign flipped, and messages are summed per receiving node.
    """

    def __init__(self, d_h, dim, rng, alpha_init=DEFAULT_ALPHA_INIT):
        self.dim = dim
        self.pair_mlp = MLP(2 * d_h + 2 + dim, d_h, d_h, rng, activation='relu')
        self.alpha = Parameter(np.array([alpha_init]))

    def pair_features(self, contacts, idx, flip=False):
        scale = contacts.radius
        offsets = -contacts.offsets[idx] if flip else contacts.offsets[idx]

        return np.concatenate([
            contacts.distances[idx, None] / scale,
            contacts.gaps[idx, None] / scale,
            offsets,
        ], axis=1)

    def delta(self, h, contacts):
        n = h.shape[0]
        idx = contacts.unordered()
        i, j = contacts.pairs[idx, 0], contacts.pairs[idx, 1]

        h_i, h_j = ops.gather_rows(h, i), ops.gather_rows(h, j)
        forward = self.pair_mlp(ops.concat([h_i, h_j, Tensor(self.pair_features(contacts, idx))], axis=1))
        backward = self.pair_mlp(ops.concat([h_j, h_i, Tensor(self.pair_features(contacts, idx, flip=True))], axis=1))

        return ops.scatter_add_rows(ops.concat([forward, backward], axis=0), np.concatenate([i, j]), n)

    def forward(self, h, contacts):
        if contacts is None or contacts.size == 0:
            return h

        return ops.add(h, ops.mul(self.alpha, self.delta(h, contacts)))


def contact_residual(block, h, contacts, alpha=None):
    """Functional form of `ContactBlock.forward`; `alpha` overrides the learned gate when given"""
    if alpha is None:
        return block(h, contacts)

    if contacts is None or contacts.size == 0:
        return h

    return ops.add(h, ops.mul(alpha, block.delta(h, contacts)))
