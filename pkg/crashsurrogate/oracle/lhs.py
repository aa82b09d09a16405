import numpy as np

from scipy.stats import qmc

from crashsurrogate.helpers.errors import ConfigError
from crashsurrogate.oracle.design import DesignBounds, DesignSample


def lhs_unit(n, dim, seed):
    """n x dim Latin hypercube in [0, 1): one point per stratum [k/n, (k+1)/n) in every column"""
    if n < 1:
        raise ConfigError(f'LHS needs n >= 1, got {n}')
    if dim < 1:
        raise ConfigError(f'LHS needs at least one dimension, got {dim}')

    return qmc.LatinHypercube(d=dim, seed=np.random.default_rng(seed)).random(n)


def lhs_sample(n, bounds=DesignBounds(), seed=0, first_id=0):
    """n DesignSamples stratified per design variable, reproducible from `seed`"""
    if not isinstance(bounds, DesignBounds):
        bounds = DesignBounds.from_mapping(bounds)

    unit = lhs_unit(n, bounds.dim, seed)
    values = qmc.scale(unit, bounds.low, bounds.high)
    # scaling can round a value onto the upper bound, never past it
    values = np.clip(values, bounds.low, bounds.high)

    return [DesignSample(first_id + k, bounds.names, tuple(row)) for k, row in enumerate(values)]


def stratum_occupancy(values, low, high, n=None):
    """Per-dimension count of samples in each of the n equal strata; all-ones for a Latin hypercube"""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n = values.shape[0] if n is None else n
    unit = (values - np.asarray(low)) / (np.asarray(high) - np.asarray(low))
    strata = np.minimum((unit * n).astype(int), n - 1)

    return np.stack([np.bincount(strata[:, k], minlength=n) for k in range(values.shape[1])], axis=1)
