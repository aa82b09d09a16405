"""
Differentiable operations. Each op computes its forward value with numpy and registers a
backward closure returning one gradient per parent (None for non-differentiable inputs).
"""
import numpy as np

from crashsurrogate.autodiff.tensor import DTYPE, Tensor, as_tensor, is_deterministic, is_grad_enabled
from crashsurrogate.helpers.errors import ShapeError

GELU_C = np.sqrt(2.0 / np.pi)
TOKEN_EPS = 1e-5


def _make(values, parents, backward):
    requires_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(values, requires_grad=requires_grad)
    if requires_grad:
        out._parents = tuple(parents)
        out._backward = backward

    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)

    return g


def _check_broadcast(a, b, opname):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f'{opname}: shapes {a.shape} and {b.shape} do not broadcast')


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'add')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.values + b.values, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'sub')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.values - b.values, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'mul')

    def backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _make(a.values * b.values, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, 'div')
    out = a.values / b.values

    def backward(g):
        return _unbroadcast(g / b.values, a.shape), _unbroadcast(-g * out / b.values, b.shape)

    return _make(out, (a, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f'matmul: cannot multiply {a.shape} by {b.shape}')

    def backward(g):
        return g @ b.values.T, a.values.T @ g

    if is_deterministic():
        # einsum without BLAS accumulates every output row in the same order wherever the row sits
        out = np.einsum('ik,kj->ij', a.values, b.values, optimize=False)
    else:
        out = a.values @ b.values

    return _make(out, (a, b), backward)


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f'transpose needs a matrix, got shape {a.shape}')

    def backward(g):
        return (g.T,)

    return _make(a.values.T.copy(), (a,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError('concat needs at least one tensor')

    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f'concat: incompatible shapes {[t.shape for t in tensors]}') from e

    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, backward)


def slice_cols(a, start, stop):
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.values)
        full[..., start:stop] = g
        return (full,)

    return _make(a.values[..., start:stop].copy(), (a,), backward)


def _check_index(idx, n, opname):
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f'{opname}: index out of range for {n} rows (min {idx.min()}, max {idx.max()})')

    return idx


def _scatter_sum(values, idx, n_rows):
    """
    Row-wise scatter-add. In deterministic mode contributions to every destination row are summed
    in value-sorted order per column, which makes the result independent of contribution order.
    """
    out = np.zeros((n_rows,) + values.shape[1:], dtype=DTYPE)
    if idx.size == 0:
        return out

    if not is_deterministic():
        np.add.at(out, idx, values)
        return out

    flat = values.reshape(values.shape[0], -1)
    keys_idx = np.broadcast_to(idx[:, None], flat.shape)
    order = np.lexsort((flat, keys_idx), axis=0)
    sorted_vals = np.take_along_axis(flat, order, axis=0)
    sorted_idx = np.sort(idx, kind='stable')
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    sums = np.add.reduceat(sorted_vals, starts, axis=0)
    out.reshape(n_rows, -1)[sorted_idx[starts]] = sums

    return out


def gather_rows(a, idx):
    a = as_tensor(a)
    idx = _check_index(idx, a.shape[0], 'gather_rows')

    def backward(g):
        full = np.zeros_like(a.values)
        np.add.at(full, idx, g)
        return (full,)

    return _make(a.values[idx], (a,), backward)


def scatter_add_rows(a, idx, n_rows):
    a = as_tensor(a)
    idx = _check_index(idx, n_rows, 'scatter_add_rows')
    if idx.size != a.shape[0]:
        raise ShapeError(f'scatter_add_rows: {idx.size} indices for {a.shape[0]} rows')

    def backward(g):
        return (g[idx],)

    return _make(_scatter_sum(a.values, idx, n_rows), (a,), backward)


def row_softmax(a):
    a = as_tensor(a)
    if a.shape[-1] == 0:
        raise ShapeError('row_softmax over an empty row')

    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (a,), backward)


def layer_norm(a, gamma=None, beta=None, eps=1e-5):
    a = as_tensor(a)
    parents = [a]
    if gamma is not None:
        gamma = as_tensor(gamma)
        parents.append(gamma)
    if beta is not None:
        beta = as_tensor(beta)
        parents.append(beta)

    mu = a.values.mean(axis=-1, keepdims=True)
    centred = a.values - mu
    inv_std = 1.0 / np.sqrt((centred ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centred * inv_std

    out = xhat
    if gamma is not None:
        out = out * gamma.values
    if beta is not None:
        out = out + beta.values

    def backward(g):
        dxhat = g * gamma.values if gamma is not None else g
        da = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        retval = [da]
        if gamma is not None:
            retval.append(_unbroadcast(g * xhat, gamma.shape))
        if beta is not None:
            retval.append(_unbroadcast(g, beta.shape))
        return tuple(retval)

    return _make(out, parents, backward)


def relu(a):
    a = as_tensor(a)
    mask = a.values > 0

    def backward(g):
        return (g * mask,)

    return _make(np.where(mask, a.values, 0.0), (a,), backward)


def gelu(a):
    """tanh approximation of GELU"""
    a = as_tensor(a)
    x = a.values
    inner = GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)

    def backward(g):
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * d,)

    return _make(0.5 * x * (1.0 + t), (a,), backward)


ACTIVATIONS = {
    'relu': relu,
    'gelu': gelu,
}


def relu_or_gelu(a, activation='relu'):
    if activation not in ACTIVATIONS:
        raise ValueError(f'Activation {activation} invalid, choose one of: {", ".join(ACTIVATIONS)}')

    return ACTIVATIONS[activation](a)


def tsum(a):
    a = as_tensor(a)

    def backward(g):
        return (np.broadcast_to(g.reshape(-1)[0], a.shape).copy(),)

    return _make(np.array([a.values.sum()]), (a,), backward)


def mean(a):
    a = as_tensor(a)
    return mul(tsum(a), 1.0 / a.size)


def mse(a, b):
    """Mean of squared differences over every element"""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f'mse: shape mismatch {a.shape} vs {b.shape}')

    diff = a.values - b.values
    n = diff.size

    def backward(g):
        ga = g.reshape(-1)[0] * 2.0 * diff / n
        return ga, -ga

    return _make(np.array([(diff ** 2).sum() / n]), (a, b), backward)


def row_norm(a):
    """Euclidean norm of every row as an (n, 1) column; the gradient at a zero row is taken as 0"""
    a = as_tensor(a)
    norm = np.sqrt((a.values ** 2).sum(axis=-1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)

    def backward(g):
        return (np.where(norm > 0, g * a.values / safe, 0.0),)

    return _make(norm, (a,), backward)


def pool_rows(w, h):
    """
    Token pooling W^T H over the node axis. Deterministic mode sums the per-node products in sorted
    order so that relabelling the nodes leaves the result bit-identical.
    """
    w, h = as_tensor(w), as_tensor(h)
    if w.ndim != 2 or h.ndim != 2 or w.shape[0] != h.shape[0]:
        raise ShapeError(f'pool_rows: weights {w.shape} and rows {h.shape} disagree on the row count')

    if is_deterministic():
        contrib = w.values[:, :, None] * h.values[:, None, :]
        out = np.sort(contrib, axis=0).sum(axis=0)
    else:
        out = w.values.T @ h.values

    def backward(g):
        return h.values @ g.T, w.values @ g

    return _make(out, (w, h), backward)


def token_pool(w, h):
    """Slice tokens normalised by their slice mass"""
    w = as_tensor(w)
    mass = pool_rows(w, np.ones((w.shape[0], 1), dtype=DTYPE))

    return div(pool_rows(w, h), add(mass, TOKEN_EPS))
