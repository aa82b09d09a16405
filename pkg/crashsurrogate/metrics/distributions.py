import numpy as np

from scipy.stats import ks_2samp, wasserstein_distance

from crashsurrogate.helpers.errors import ShapeError


def _check(a, b, name):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ShapeError(f'{name} needs two non-empty samples, got sizes {a.size} and {b.size}')

    return a, b


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|"""
    a, b = _check(a, b, 'ks_statistic')
    return float(ks_2samp(a, b, method='asymp').statistic)


def wasserstein1(a, b):
    """1-D Wasserstein-1 distance, the integral of |F_a - F_b|; sizes may differ"""
    a, b = _check(a, b, 'wasserstein1')
    return float(wasserstein_distance(a, b))
