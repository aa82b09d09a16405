"""
Dense 64-bit tensors with reverse-mode gradient accumulation.

A `Tensor` produced by an op remembers its parents and a backward closure that maps the
upstream gradient to one gradient per parent. `Tensor.backward()` walks the graph in
reverse topological order and accumulates into the `.grad` of every leaf that requires it.
"""
import contextlib
import threading

import numpy as np

from crashsurrogate.helpers.config import config
from crashsurrogate.helpers.errors import ShapeError

DTYPE = np.float64

_grad_mode = threading.local()
_flags = {'deterministic': bool(config['deterministic'])}


def is_grad_enabled():
    return getattr(_grad_mode, 'enabled', True)


@contextlib.contextmanager
def no_grad():
    prev = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = prev


def set_deterministic(flag):
    prev = _flags['deterministic']
    _flags['deterministic'] = bool(flag)

    return prev


def is_deterministic():
    return _flags['deterministic']


@contextlib.contextmanager
def deterministic(flag=True):
    prev = set_deterministic(flag)
    try:
        yield
    finally:
        set_deterministic(prev)


class Tensor:
    __slots__ = ('values', 'requires_grad', 'grad', '_parents', '_backward', 'name')

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.asarray(values, dtype=DTYPE)
        if self.values.ndim == 0:
            self.values = self.values.reshape(1)

        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.values

    def item(self):
        if self.values.size != 1:
            raise ShapeError(f'item() needs a single-element tensor, got shape {self.shape}')

        return float(self.values.reshape(-1)[0])

    def detach(self):
        return Tensor(self.values)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE).reshape(self.shape)
        else:
            self.grad += g

    def _topological_order(self):
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        return order

    def backward(self, grad=None):
        if self.values.size != 1 and grad is None:
            raise ShapeError(f'backward() needs a scalar loss, got shape {self.shape}')

        if not self.requires_grad:
            return

        grads = {id(self): np.ones_like(self.values) if grad is None else np.asarray(grad, dtype=DTYPE)}

        for node in reversed(self._topological_order()):
            g = grads.pop(id(node), None)
            if g is None:
                continue

            if node._backward is None:
                node._accumulate(g)
                continue

            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    def __add__(self, other):
        from crashsurrogate.autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from crashsurrogate.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from crashsurrogate.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from crashsurrogate.autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from crashsurrogate.autodiff import ops
        return ops.div(self, other)

    def __neg__(self):
        from crashsurrogate.autodiff import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from crashsurrogate.autodiff import ops
        return ops.matmul(self, other)

    def __repr__(self):
        return f'Tensor(shape={self.shape}, requires_grad={self.requires_grad})'


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, values, name=None):
        super().__init__(np.array(values, dtype=DTYPE), requires_grad=True, name=name)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x

    return Tensor(x)
