import itertools
import logging

import numpy as np
import pandas as pd

from dataclasses import dataclass, field
from pathlib import Path

from crashsurrogate.helpers.errors import ConfigError, SplitError
from crashsurrogate.helpers.io import read_json, write_json
from crashsurrogate.metrics.distributions import ks_statistic, wasserstein1

log = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')
DEFAULT_RATIOS = (0.6, 0.2, 0.2)
FULL_SCALE_RATIOS = (0.75, 0.125, 0.125)
DEFAULT_KS_THRESHOLD = 0.35


@dataclass
class SplitReport:
    assignment: dict
    diagnostics: pd.DataFrame
    ks_threshold: float = DEFAULT_KS_THRESHOLD
    seed: int = 0
    attempts: int = 1
    ranked_variable: str = ''
    extra: dict = field(default_factory=dict)

    @property
    def max_ks(self):
        return float(self.diagnostics['ks'].max()) if len(self.diagnostics) else 0.0

    @property
    def passed(self):
        return self.max_ks <= self.ks_threshold

    def ids(self, split):
        if split not in SPLITS:
            raise ValueError(f'Split {split} invalid, choose one of: {", ".join(SPLITS)}')

        return sorted(sid for sid, s in self.assignment.items() if s == split)

    def counts(self):
        return {s: len(self.ids(s)) for s in SPLITS}

    def to_dict(self):
        return {
            'assignment': {str(k): v for k, v in sorted(self.assignment.items())},
            'counts': self.counts(),
            'ks_threshold': self.ks_threshold,
            'max_ks': self.max_ks,
            'passed': self.passed,
            'seed': self.seed,
            'attempts': self.attempts,
            'ranked_variable': self.ranked_variable,
            'diagnostics': self.diagnostics.to_dict(orient='records'),
            **self.extra,
        }

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        paths = [write_json(self.to_dict(), out_dir / 'split.json')]

        self.diagnostics.to_csv(out_dir / 'split_diagnostics.csv', index=False, float_format='%.17g')
        paths.append(out_dir / 'split_diagnostics.csv')

        pd.DataFrame(sorted(self.assignment.items()), columns=['sample_id', 'split']).to_csv(out_dir / 'split_assignment.csv', index=False)
        paths.append(out_dir / 'split_assignment.csv')

        return paths

    @classmethod
    def from_dict(cls, values):
        return cls(
            assignment={int(k): v for k, v in values['assignment'].items()},
            diagnostics=pd.DataFrame(values.get('diagnostics', []), columns=['variable', 'split_a', 'split_b', 'ks', 'wasserstein1']),
            ks_threshold=values.get('ks_threshold', DEFAULT_KS_THRESHOLD),
            seed=values.get('seed', 0),
            attempts=values.get('attempts', 1),
            ranked_variable=values.get('ranked_variable', ''),
        )


def load_split(path):
    path = Path(path)
    return SplitReport.from_dict(read_json(path / 'split.json' if path.is_dir() else path))


def split_counts(n, ratios):
    """Largest-remainder rounding of n * ratios; ties go to the earlier split"""
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (len(SPLITS),):
        raise ConfigError(f'Expected {len(SPLITS)} split ratios, got {ratios.tolist()}')
    if (ratios <= 0).any() or abs(ratios.sum() - 1.0) > 1e-9:
        raise ConfigError(f'Split ratios should be positive and sum to 1, got {ratios.tolist()}')
    if n < len(SPLITS):
        raise ConfigError(f'Need at least {len(SPLITS)} samples to split, got {n}')

    raw = ratios * n
    counts = np.floor(raw).astype(int)
    order = sorted(range(len(SPLITS)), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:n - counts.sum()]:
        counts[k] += 1

    # every split gets at least one sample
    for k in range(len(SPLITS)):
        if counts[k] == 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[k] += 1

    return counts


def deal_pattern(counts):
    """
    Split label per rank: at every position the split furthest behind its quota gets the next
    rank, so each split's ranks interleave across the whole range.
    """
    n = int(sum(counts))
    dealt = np.zeros(len(counts))
    pattern = []
    for k in range(n):
        deficit = np.asarray(counts) * (k + 1) / n - dealt
        deficit[dealt >= counts] = -np.inf
        s = int(np.argmax(deficit))
        pattern.append(s)
        dealt[s] += 1

    return np.array(pattern)


def split_diagnostics(values, labels, names):
    rows = []
    for a, b in itertools.combinations(range(len(SPLITS)), 2):
        for k, name in enumerate(names):
            va, vb = values[labels == a, k], values[labels == b, k]
            rows.append((name, SPLITS[a], SPLITS[b], ks_statistic(va, vb), wasserstein1(va, vb)))

    return pd.DataFrame(rows, columns=['variable', 'split_a', 'split_b', 'ks', 'wasserstein1'])


def _objective(values, labels):
    ks = []
    for a, b in itertools.combinations(range(len(SPLITS)), 2):
        for k in range(values.shape[1]):
            ks.append(ks_statistic(values[labels == a, k], values[labels == b, k]))

    return max(ks), sum(ks)


def _swap_descent(values, labels, rng, threshold, iterations, candidates):
    """Greedy label swaps between samples of different splits while the (max KS, sum KS) objective drops"""
    best = _objective(values, labels)
    for _ in range(iterations):
        if best[0] <= threshold:
            break

        improved = False
        i_idx = rng.integers(0, labels.size, size=candidates)
        j_idx = rng.integers(0, labels.size, size=candidates)
        for i, j in zip(i_idx, j_idx):
            if labels[i] == labels[j]:
                continue
            labels[i], labels[j] = labels[j], labels[i]
            score = _objective(values, labels)
            if score < best:
                best = score
                improved = True
                break
            labels[i], labels[j] = labels[j], labels[i]

        if not improved:
            break

    return labels, best


def _design_matrix(samples):
    designs = [getattr(s, 'design', None) or s for s in samples]
    names = designs[0].names
    for d in designs:
        if d.names != names:
            raise ConfigError(f'Sample {d.sample_id} has design variables {d.names}, expected {names}')

    return np.array([d.vector() for d in designs]), names, [d.sample_id for d in designs]


def make_split(samples, ratios=DEFAULT_RATIOS, seed=0, ks_threshold=DEFAULT_KS_THRESHOLD, max_retries=20,
               swap_iterations=200, swap_candidates=32, allow_best=False):
    """
    DOE-aware train / val / test split of DesignSamples (or Trajectories carrying one).

    Samples are ranked along one design variable picked from the seed and dealt over the splits
    in proportion to `ratios`; label swaps then lower the worst pairwise KS statistic. A split
    whose max KS exceeds `ks_threshold` is retried with the next seed, up to `max_retries`
    attempts. Raises SplitError carrying the best report unless `allow_best` is set.
    """
    values, names, ids = _design_matrix(list(samples))
    counts = split_counts(len(ids), ratios)
    pattern = deal_pattern(counts)

    best = None
    for attempt in range(max_retries):
        attempt_seed = seed + attempt
        rng = np.random.default_rng(attempt_seed)
        var = int(rng.integers(0, len(names)))

        labels = np.empty(len(ids), dtype=int)
        labels[np.argsort(values[:, var], kind='stable')] = pattern
        labels, score = _swap_descent(values, labels, rng, ks_threshold, swap_iterations, swap_candidates)

        if best is None or score < best[0]:
            best = (score, labels.copy(), attempt_seed, var, attempt + 1)

        log.debug(f'Split attempt {attempt + 1} (seed {attempt_seed}, ranked on {names[var]}): max KS {score[0]:.3f}')
        if score[0] <= ks_threshold:
            break

    score, labels, used_seed, var, attempts = best
    report = SplitReport(
        assignment={int(sid): SPLITS[label] for sid, label in zip(ids, labels)},
        diagnostics=split_diagnostics(values, labels, names),
        ks_threshold=ks_threshold,
        seed=used_seed,
        attempts=attempts,
        ranked_variable=names[var],
    )

    if not report.passed and not allow_best:
        raise SplitError(f'No split met the KS threshold {ks_threshold} after {max_retries} attempts, best max KS {report.max_ks:.3f}', report)

    return report
