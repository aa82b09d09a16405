from crashsurrogate.autodiff import ops
from crashsurrogate.autodiff.nn import Module
from crashsurrogate.helpers.errors import ShapeError
from crashsurrogate.models.layers import MLP


class MPNNBlock(Module):
    """
    One round of mesh message passing: an edge update followed by a node update, both residual.

        e'_ij = e_ij + f_e(h_i, h_j, e_ij)
        h'_i  = h_i  + f_n(h_i, sum_j e'_ij)

    Messages flow from neighbour j into receiver i = edges[:, 0].
    """

    def __init__(self, d_h, rng, activation='relu'):
        self.d_h = d_h
        self.edge_mlp = MLP(3 * d_h, d_h, d_h, rng, activation=activation, layer_norm=True)
        self.node_mlp = MLP(2 * d_h, d_h, d_h, rng, activation=activation, layer_norm=True)

    def forward(self, h, e, graph):
        if h.shape[0] != graph.node_count:
            raise ShapeError(f'Latent field has {h.shape[0]} rows, graph has {graph.node_count} nodes')
        if e.shape[0] != graph.edge_count:
            raise ShapeError(f'Edge latents have {e.shape[0]} rows, graph has {graph.edge_count} edges')

        h_i = ops.gather_rows(h, graph.receivers)
        h_j = ops.gather_rows(h, graph.neighbours)
        e = ops.add(e, self.edge_mlp(ops.concat([h_i, h_j, e], axis=1)))

        agg = ops.scatter_add_rows(e, graph.receivers, graph.node_count)
        h = ops.add(h, self.node_mlp(ops.concat([h, agg], axis=1)))

        return h, e
