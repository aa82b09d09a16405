import logging

from functools import partial

from crashsurrogate.helpers.joblib import parallel_map
from crashsurrogate.metrics.errors import evaluate
from crashsurrogate.rollout.rollout import rollout_reference

log = logging.getLogger(__name__)


def _rollout_one(reference, model, stats):
    return rollout_reference(model, reference, stats)


def rollout_all(model, references, stats, n_jobs=None, desc='rollouts'):
    return parallel_map(partial(_rollout_one, model=model, stats=stats), references, n_jobs=n_jobs, desc=desc)


def evaluate_model(model, references, stats, label='', n_jobs=None):
    """Closed-loop rollouts of every reference followed by the full EvalReport; returns (report, results)"""
    references = list(references)
    results = rollout_all(model, references, stats, n_jobs=n_jobs)
    report = evaluate([r.predicted for r in results], references, label=label)
    report.extra['rollout_wall_time_mean_s'] = sum(r.wall_time for r in results) / len(results)

    log.info(f'{label or "model"}: RMSE_mu {report.rmse_mu:.4g} mm over {len(references)} samples')

    return report, results
