import logging

import numpy as np

from dataclasses import dataclass

from crashsurrogate.autodiff import ops
from crashsurrogate.autodiff.nn import Module
from crashsurrogate.autodiff.tensor import Tensor, as_tensor
from crashsurrogate.contact.block import ContactBlock, ContactParams, build_contacts
from crashsurrogate.helpers.errors import ConfigError, ShapeError
from crashsurrogate.mesh.features import edge_feature_tensor, node_feature_tensor, normalised_reference_positions
from crashsurrogate.models.attention import PhysicsAttentionBlock
from crashsurrogate.models.layers import MLP
from crashsurrogate.models.mpnn import MPNNBlock

log = logging.getLogger(__name__)

STAGES = ('H0', 'H1', 'H1~', 'H2', 'H3')


@dataclass(frozen=True, eq=False)
class LatentField:
    stage: str
    values: np.ndarray


class HybridModel(Module):
    """
    encode -> L_pre MPNN blocks -> [contact residual] -> L_attn global blocks -> L_post MPNN blocks
    -> decode, for every family in the registry. Pure attention families skip the mesh stages,
    MGN skips the global stage.
    """

    def __init__(self, config):
        self.config = config
        cfg = config
        rng = np.random.default_rng(cfg.seed)

        self.encoder = MLP(cfg.d_node, cfg.d_h, cfg.d_h, rng, activation=cfg.mpnn_activation)
        self.edge_encoder = MLP(cfg.d_edge, cfg.d_h, cfg.d_h, rng, activation=cfg.mpnn_activation, layer_norm=True) if cfg.uses_mesh else None
        self.pre = [MPNNBlock(cfg.d_h, rng, cfg.mpnn_activation) for _ in range(cfg.l_pre)]
        self.global_blocks = [self._global_block(rng) for _ in range(cfg.l_attn)]
        self.post = [MPNNBlock(cfg.d_h, rng, cfg.mpnn_activation) for _ in range(cfg.l_post)]
        self.decoder = MLP(cfg.d_h, cfg.d_h, cfg.dim, rng, activation=cfg.mpnn_activation)

        # own stream, so a contact-enabled model shares every other weight with its contact-free twin
        if cfg.contact_enabled:
            self.contact = ContactBlock(cfg.d_h, cfg.dim, np.random.default_rng([cfg.seed, 1]), cfg.contact_alpha_init)
        else:
            self.contact = None

    def _global_block(self, rng):
        cfg = self.config
        geo = cfg.global_kind in ('geo', 'geo_flare')
        return PhysicsAttentionBlock(
            cfg.d_h, cfg.n_tokens, rng,
            heads=cfg.heads,
            plusplus=cfg.plusplus,
            geo_dim=cfg.dim if geo else 0,
            mixer='factorised' if cfg.global_kind == 'geo_flare' else 'dense',
            routes=cfg.routes or None,
            activation=cfg.attention_activation,
        )

    @property
    def contact_enabled(self):
        return self.contact is not None

    def contact_params(self, graph):
        cfg = self.config
        return ContactParams.for_graph(graph, k=cfg.contact_k, alpha_init=cfg.contact_alpha_init, radius=cfg.contact_radius)

    def encode(self, features):
        if features.shape[1] != self.config.d_node:
            raise ShapeError(f'{self.config.family} expects {self.config.d_node} node features, got {features.shape[1]}')

        return self.encoder(features)

    def encode_edges(self, graph, positions):
        scale = graph.median_edge_length() or 1.0
        return self.edge_encoder(ops.mul(edge_feature_tensor(graph, positions), 1.0 / scale))

    def forward(self, graph, positions, velocities, stats, contacts=None, trace=None):
        """
        Normalised accelerations for every node. `positions` and `velocities` may be Tensors that
        carry gradients. Contact-enabled families build their ContactSet from `positions` when
        none is given.
        """
        cfg = self.config
        positions = as_tensor(positions)

        if contacts is not None and not self.contact_enabled:
            raise ConfigError(f'{cfg.family} has no contact block, but a ContactSet was supplied')
        if graph.dim != cfg.dim:
            raise ShapeError(f'{cfg.family} was built for dim {cfg.dim}, graph has dim {graph.dim}')

        def record(stage, h):
            if trace is not None:
                trace.append(LatentField(stage, h.values.copy()))

        h = self.encode(node_feature_tensor(graph, velocities, stats, cfg.layout))
        record('H0', h)

        e = self.encode_edges(graph, positions) if cfg.uses_mesh else None
        for block in self.pre:
            h, e = block(h, e, graph)
        if self.pre:
            record('H1', h)

        if self.contact_enabled:
            if contacts is None:
                contacts = build_contacts(graph, positions.values, self.contact_params(graph))
            h = self.contact(h, contacts)
            record('H1~', h)

        if self.global_blocks:
            geometry = None
            if cfg.global_kind in ('geo', 'geo_flare'):
                geometry = Tensor(normalised_reference_positions(graph))
            for block in self.global_blocks:
                h = block(h, geometry)
            record('H2', h)

        for block in self.post:
            h, e = block(h, e, graph)
        if self.post:
            record('H3', h)

        return self.decoder(h)

    def predict_accelerations(self, graph, positions, velocities, stats, contacts=None):
        """Physical accelerations a = a_bar * std + mean"""
        a_bar = self.forward(graph, positions, velocities, stats, contacts)
        return ops.add(ops.mul(a_bar, stats.accel_std.reshape(1, -1)), stats.accel_mean.reshape(1, -1))


class DriftBaseline:
    """Zero acceleration for every node: pure inertial motion"""
    contact_enabled = False
    config = None

    def predict_accelerations(self, graph, positions, velocities, stats, contacts=None):
        return Tensor(np.zeros((graph.node_count, graph.dim)))

    def parameters(self):
        return []


def build_model(config):
    model = HybridModel(config)
    log.debug(f'Built {config.family} ({config.stages}, d_h={config.d_h}, M={config.n_tokens}) with {model.parameter_count()} parameters')

    return model


def hybrid_forward(model, graph, state, stats, contacts=None):
    """Normalised accelerations a_bar_t for `state`; callers zero RIGID rows downstream"""
    return model(graph, state.positions, state.velocities, stats, contacts)
