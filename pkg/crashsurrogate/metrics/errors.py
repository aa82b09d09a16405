import logging

import numpy as np
import pandas as pd

from dataclasses import dataclass, field
from pathlib import Path

from crashsurrogate.helpers.errors import ShapeError
from crashsurrogate.helpers.io import write_json
from crashsurrogate.metrics.survival import survival_space, survival_summary

log = logging.getLogger(__name__)

REL_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class RmseSeries:
    sample_id: int
    per_step: np.ndarray
    rel_rmse: float

    @property
    def rmse_mu(self):
        return float(self.per_step.mean())

    @property
    def rmse_final(self):
        return float(self.per_step[-1])


def _check_pair(pred, ref):
    if pred.positions.shape != ref.positions.shape:
        raise ShapeError(f'Trajectory shapes differ: predicted {pred.positions.shape}, reference {ref.positions.shape}')
    if pred.dt != ref.dt:
        raise ShapeError(f'dt differs: predicted {pred.dt}, reference {ref.dt}')


def rmse_series(pred, ref):
    """
    RMSE_t = sqrt(mean_i |u_pred,i,t - u_ref,i,t|^2) for t = 1..T over displacements from frame 0,
    and Rel. RMSE = RMSE_T / RMS of the reference displacement at T (0 when both vanish).
    """
    _check_pair(pred, ref)

    xp, xr = pred.positions, ref.positions
    up, ur = xp - xp[0], xr - xr[0]
    per_step = np.sqrt(((up - ur) ** 2).sum(axis=-1).mean(axis=-1))[1:]

    scale = float(np.sqrt((ur[-1] ** 2).sum(axis=-1).mean()))
    final = float(per_step[-1]) if per_step.size else 0.0
    rel = 0.0 if final == 0.0 else final / max(scale, REL_FLOOR)

    return RmseSeries(ref.sample_id, per_step, rel)


@dataclass
class EvalReport:
    steps: pd.DataFrame
    samples: pd.DataFrame
    label: str = ''
    extra: dict = field(default_factory=dict)

    @property
    def rmse_mu(self):
        return float(self.samples['rmse_mu'].mean())

    def summary(self):
        s = self.samples
        retval = {
            'label': self.label,
            'n_samples': int(len(s)),
            'rmse_mu': self.rmse_mu,
            'rmse_final_mean': float(s['rmse_final'].mean()),
            'rmse_final_std': float(s['rmse_final'].std(ddof=0)),
            'rel_rmse_mean': float(s['rel_rmse'].mean()),
            'e_surv_final_mean': float(s['e_surv_final'].mean()),
            'e_surv_final_std': float(s['e_surv_final'].std(ddof=0)),
        }
        retval.update(self.extra)

        return retval

    def write(self, out_dir, prefix='eval'):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        paths = [out_dir / f'{prefix}_steps.csv', out_dir / f'{prefix}_samples.csv']
        self.steps.to_csv(paths[0], index=False, float_format='%.17g')
        self.samples.to_csv(paths[1], index=False, float_format='%.17g')
        paths.append(write_json(self.summary(), out_dir / f'{prefix}_summary.json'))

        return paths


def evaluate(preds, refs, label=''):
    """EvalReport over matched predicted / reference trajectories"""
    preds, refs = list(preds), list(refs)
    if len(preds) != len(refs) or not refs:
        raise ShapeError(f'evaluate needs matching non-empty lists, got {len(preds)} predictions and {len(refs)} references')

    step_rows, sample_rows, series = [], [], []
    for pred, ref in zip(preds, refs):
        rmse = rmse_series(pred, ref)
        surv = survival_space(pred, ref)
        series.append(surv)

        for t, value in enumerate(rmse.per_step, start=1):
            step_rows.append((ref.sample_id, t, t * ref.dt, value, surv.d_pred[t], surv.d_ref[t], surv.error[t]))
        sample_rows.append((ref.sample_id, rmse.rmse_mu, rmse.rmse_final, rmse.rel_rmse, surv.final_error))

    steps = pd.DataFrame(step_rows, columns=['sample_id', 't', 'time_ms', 'rmse', 'd_pred', 'd_ref', 'e_surv'])
    samples = pd.DataFrame(sample_rows, columns=['sample_id', 'rmse_mu', 'rmse_final', 'rel_rmse', 'e_surv_final'])

    report = EvalReport(steps, samples, label)
    summary = survival_summary(series)
    if not np.isfinite(list(summary.values()) + [report.rmse_mu]).all():
        raise ShapeError('Evaluation produced non-finite metrics')

    return report
