import numpy as np

from dataclasses import dataclass

from crashsurrogate.helpers.errors import ShapeError


def survival_distance(trajectory):
    """d_t = |x_A,t - x_B,t| for the trajectory's survival pair, t = 0..T"""
    a, b = trajectory.survival_pair
    x = trajectory.positions

    return np.sqrt(((x[:, a] - x[:, b]) ** 2).sum(axis=-1))


@dataclass(frozen=True, eq=False)
class SurvivalSeries:
    sample_id: int
    d_pred: np.ndarray
    d_ref: np.ndarray

    @property
    def error(self):
        """e_surv_t = d_pred,t - d_ref,t; positive means the surrogate leaves more survival space"""
        return self.d_pred - self.d_ref

    @property
    def final_error(self):
        return float(self.error[-1])


def survival_space(pred, ref):
    if tuple(pred.survival_pair) != tuple(ref.survival_pair):
        raise ShapeError(f'Survival pairs differ: predicted {pred.survival_pair}, reference {ref.survival_pair}')
    if pred.horizon != ref.horizon:
        raise ShapeError(f'Horizon mismatch: predicted T={pred.horizon}, reference T={ref.horizon}')

    return SurvivalSeries(ref.sample_id, survival_distance(pred), survival_distance(ref))


def survival_summary(series):
    """Mean and standard deviation of the final-step survival error over a set of samples"""
    finals = np.array([s.final_error for s in series])
    if finals.size == 0:
        raise ShapeError('survival_summary needs at least one sample')

    return {'e_surv_final_mean': float(finals.mean()), 'e_surv_final_std': float(finals.std())}
