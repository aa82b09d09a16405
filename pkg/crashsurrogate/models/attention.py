"""
Token-based global processors.

Nodes are softly assigned to M slices, each slice is pooled into a token, the tokens interact
(dense multi-head attention or a factorised routed interaction) and are scattered back to the
nodes through the same slice weights. The geometry-aware variant additionally conditions the
slice assignment on an embedding of the normalised reference coordinates.
"""
import numpy as np

from crashsurrogate.autodiff import ops
from crashsurrogate.autodiff.nn import Module
from crashsurrogate.autodiff.tensor import Parameter
from crashsurrogate.helpers.errors import ShapeError
from crashsurrogate.models.layers import LayerNorm, Linear, MLP

MIXERS = ('dense', 'factorised')


def _scaled_scores(q, k):
    return ops.mul(ops.matmul(q, ops.transpose(k)), 1.0 / np.sqrt(q.shape[1]))


def uniform_routes(rng, routes, d_h):
    return rng.uniform(-1.0, 1.0, size=(routes, d_h)) / np.sqrt(d_h)


class TokenSelfAttention(Module):
    """Dense multi-head self-attention over the M tokens"""

    def __init__(self, d_h, heads, rng):
        if d_h % heads:
            raise ShapeError(f'Hidden size {d_h} is not divisible by {heads} heads')

        self.heads = heads
        self.to_q = Linear(d_h, d_h, rng, bias=False)
        self.to_k = Linear(d_h, d_h, rng, bias=False)
        self.to_v = Linear(d_h, d_h, rng, bias=False)
        self.out = Linear(d_h, d_h, rng)

    def forward(self, tokens):
        q, k, v = self.to_q(tokens), self.to_k(tokens), self.to_v(tokens)
        width = q.shape[1] // self.heads

        outputs = []
        for head in range(self.heads):
            lo, hi = head * width, (head + 1) * width
            attn = ops.row_softmax(_scaled_scores(ops.slice_cols(q, lo, hi), ops.slice_cols(k, lo, hi)))
            outputs.append(ops.matmul(attn, ops.slice_cols(v, lo, hi)))

        return self.out(ops.concat(outputs, axis=1))


class FactorisedTokenMixer(Module):
    """
    Low-rank token interaction through r learned routes: the routes gather from the tokens,
    then every token reads back from the routes. Cost O(M r d) instead of O(M^2 d).
    """

    def __init__(self, d_h, routes, rng):
        if routes < 1:
            raise ShapeError(f'Factorised attention needs at least one route, got {routes}')

        self.routes = Parameter(uniform_routes(rng, routes, d_h))
        self.to_q = Linear(d_h, d_h, rng, bias=False)
        self.to_k = Linear(d_h, d_h, rng, bias=False)
        self.to_v = Linear(d_h, d_h, rng, bias=False)
        self.out = Linear(d_h, d_h, rng)

    def forward(self, tokens):
        q, k, v = self.to_q(tokens), self.to_k(tokens), self.to_v(tokens)

        gathered = ops.matmul(ops.row_softmax(_scaled_scores(self.routes, k)), v)
        broadcast = ops.matmul(ops.row_softmax(_scaled_scores(q, gathered)), gathered)

        return self.out(broadcast)


class PhysicsAttentionBlock(Module):
    """
    Slice, attend over tokens, deslice; followed by a node-wise feed-forward residual.

    `plusplus` divides the slice logits by a learnable per-slice temperature. `geo_dim` > 0 adds
    the geometry term gamma(p) W_g to the slice logits, computed as its own product so zero geometry
    weights leave the logits untouched. `mixer` picks dense or factorised token interaction.
    """

    def __init__(self, d_h, n_tokens, rng, heads=4, plusplus=False, geo_dim=0, mixer='dense', routes=None,
                 activation='gelu'):
        if n_tokens < 1:
            raise ShapeError(f'Physics attention needs at least one token, got {n_tokens}')
        if mixer not in MIXERS:
            raise ValueError(f'Token mixer {mixer} invalid, choose one of: {", ".join(MIXERS)}')

        self.n_tokens = n_tokens
        self.activation = activation

        self.norm_in = LayerNorm(d_h)
        self.slice_proj = Linear(d_h, n_tokens, rng)
        self.temperature = Parameter(np.ones((1, n_tokens))) if plusplus else None

        if geo_dim:
            self.geo_embed = MLP(geo_dim, d_h, d_h, rng, activation=activation)
            self.geo_proj = Linear(d_h, n_tokens, rng, bias=False)
        else:
            self.geo_embed = None
            self.geo_proj = None

        self.token_norm = LayerNorm(d_h)
        if mixer == 'dense':
            self.mixer = TokenSelfAttention(d_h, heads, rng)
        else:
            self.mixer = FactorisedTokenMixer(d_h, routes or max(1, n_tokens // 4), rng)

        self.token_ffn_norm = LayerNorm(d_h)
        self.token_ffn = MLP(d_h, 2 * d_h, d_h, rng, activation=activation)
        self.node_ffn_norm = LayerNorm(d_h)
        self.node_ffn = MLP(d_h, 2 * d_h, d_h, rng, activation=activation)

    @property
    def geometry_aware(self):
        return self.geo_embed is not None

    def slice_weights(self, h, geometry=None):
        """Row-stochastic N x M slice assignment of the (already normalised) latent field `h`"""
        logits = self.slice_proj(h)

        if self.geometry_aware:
            if geometry is None:
                raise ShapeError('Geometry-aware attention needs normalised reference positions')
            logits = ops.add(logits, self.geo_proj(self.geo_embed(geometry)))

        if self.temperature is not None:
            logits = ops.div(logits, self.temperature)

        return ops.row_softmax(logits)

    def mix_tokens(self, tokens):
        tokens = ops.add(tokens, self.mixer(self.token_norm(tokens)))
        return ops.add(tokens, self.token_ffn(self.token_ffn_norm(tokens)))

    def forward(self, h, geometry=None):
        x = self.norm_in(h)
        w = self.slice_weights(x, geometry)
        tokens = self.mix_tokens(ops.token_pool(w, x))

        h = ops.add(h, ops.matmul(w, tokens))
        return ops.add(h, self.node_ffn(self.node_ffn_norm(h)))
