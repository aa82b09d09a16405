import numpy as np

from crashsurrogate.autodiff import ops
from crashsurrogate.helpers.errors import ShapeError
from crashsurrogate.mesh.graph import NodeRole


def _free_index(roles):
    free = np.flatnonzero(np.asarray(roles) == NodeRole.FREE)
    if free.size == 0:
        raise ShapeError('Position loss needs at least one FREE node')

    return free


def position_loss(pred, ref, roles=None):
    """Mean over FREE nodes and steps t = 1..T of |x_pred - x_ref|^2, in mm^2"""
    roles = ref.graph.node_role if roles is None else roles
    free = _free_index(roles)

    xp, xr = pred.positions, ref.positions
    if xp.shape != xr.shape:
        raise ShapeError(f'Trajectory shapes differ: predicted {xp.shape}, reference {xr.shape}')

    diff = xp[1:, free] - xr[1:, free]
    return float((diff ** 2).sum(axis=-1).mean())


def position_loss_tensor(predicted, reference_positions, roles, scale=1.0):
    """
    Differentiable position loss for predicted position Tensors of t = 1..T against the
    (T+1) x N x dim reference, expressed in units of `scale` (mm^2 / scale^2).
    """
    free = _free_index(roles)
    reference_positions = np.asarray(reference_positions)
    if len(predicted) != reference_positions.shape[0] - 1:
        raise ShapeError(f'{len(predicted)} predicted steps for a reference with {reference_positions.shape[0] - 1} transitions')

    total = None
    for t, x in enumerate(predicted, start=1):
        diff = ops.mul(ops.sub(ops.gather_rows(x, free), reference_positions[t, free]), 1.0 / scale)
        sq = ops.tsum(ops.mul(diff, diff))
        total = sq if total is None else ops.add(total, sq)

    return ops.mul(total, 1.0 / (len(predicted) * free.size))
