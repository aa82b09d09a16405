import numpy as np

from crashsurrogate.autodiff import ops
from crashsurrogate.autodiff.nn import Module
from crashsurrogate.autodiff.tensor import Parameter


def uniform_fan_in(rng, fan_in, shape, gain=1.0):
    bound = gain / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True, gain=1.0):
        self.n_in = n_in
        self.n_out = n_out
        self.weight = Parameter(uniform_fan_in(rng, n_in, (n_in, n_out), gain))
        self.bias = Parameter(np.zeros((1, n_out))) if bias else None

    def forward(self, x):
        out = ops.matmul(x, self.weight)
        if self.bias is not None:
            out = ops.add(out, self.bias)

        return out


class LayerNorm(Module):
    def __init__(self, d):
        self.gamma = Parameter(np.ones((1, d)))
        self.beta = Parameter(np.zeros((1, d)))

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta)


class MLP(Module):
    """Two linear layers with an activation in between, optionally closed by a LayerNorm"""

    def __init__(self, n_in, n_hidden, n_out, rng, activation='relu', layer_norm=False):
        if activation not in ops.ACTIVATIONS:
            raise ValueError(f'Activation {activation} invalid, choose one of: {", ".join(ops.ACTIVATIONS)}')

        self.activation = activation
        self.layers = [Linear(n_in, n_hidden, rng), Linear(n_hidden, n_out, rng)]
        self.norm = LayerNorm(n_out) if layer_norm else None

    def forward(self, x):
        x = ops.relu_or_gelu(self.layers[0](x), self.activation)
        x = self.layers[1](x)
        if self.norm is not None:
            x = self.norm(x)

        return x
