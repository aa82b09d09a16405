"""
Pipeline steps behind the command line: generate -> split -> train -> rollout -> evaluate ->
report, plus the inference benchmark. Every step works on a dataset directory (container,
design table and manifest written by `generate_dataset`) and returns plain objects; writing
run manifests is left to the caller.
"""
import logging
import time

import pandas as pd

from pathlib import Path

from crashsurrogate.autodiff.checkpoint import load_checkpoint
from crashsurrogate.contact.block import ContactParams, build_contacts
from crashsurrogate.helpers.config import load_yaml
from crashsurrogate.helpers.errors import ConfigError, ShapeError
from crashsurrogate.mesh.container import write_container
from crashsurrogate.metrics.errors import evaluate, rmse_series
from crashsurrogate.metrics.evaluate import evaluate_model, rollout_all
from crashsurrogate.metrics.plots import write_report_plots
from crashsurrogate.metrics.splits import DEFAULT_RATIOS, SPLITS, load_split, make_split
from crashsurrogate.models.families import families
from crashsurrogate.models.hybrid import DriftBaseline, build_model
from crashsurrogate.oracle.dataset import generate_dataset, load_dataset, load_manifest
from crashsurrogate.oracle.design import DesignBounds
from crashsurrogate.oracle.lattice import OracleConfig, simulate
from crashsurrogate.rollout.rollout import rollout_reference
from crashsurrogate.training.config import load_train_config
from crashsurrogate.training.train import train

log = logging.getLogger(__name__)

DRIFT = 'drift'
SPLIT_NAME = 'split.json'
PREDICTIONS_NAME = 'predictions.cstr'


def list_model_families():
    return {name: f'{layout["l_pre"]}+{layout["l_attn"]}+{layout["l_post"]}' for name, layout in families.items()}


def load_generate_config(path=None):
    """
    Oracle and design-space settings from a YAML file with optional `oracle:` (OracleConfig keys)
    and `bounds:` (name: [low, high] or name: {low, high, nominal}) sections.
    """
    values = load_yaml(path) if path is not None else {}
    unknown = sorted(set(values) - {'oracle', 'bounds'})
    if unknown:
        raise ConfigError(f'Unknown generate config sections: {", ".join(unknown)}; valid sections are: bounds, oracle')

    oracle = values.get('oracle') or {}
    known = set(OracleConfig.__dataclass_fields__)
    if set(oracle) - known:
        raise ConfigError(f'Unknown OracleConfig keys: {", ".join(sorted(set(oracle) - known))}')

    return DesignBounds.from_mapping(values.get('bounds')), OracleConfig(**oracle)


def generate(out_dir, n=20, seed=0, config_path=None, n_jobs=None):
    bounds, cfg = load_generate_config(config_path)
    return generate_dataset(out_dir, n=n, bounds=bounds, cfg=cfg, seed=seed, n_jobs=n_jobs)


def parse_ratios(text):
    if text is None:
        return DEFAULT_RATIOS

    try:
        ratios = tuple(float(x) for x in str(text).split(','))
    except ValueError:
        raise ConfigError(f'Cannot parse split ratios {text!r}, expected three comma separated numbers')

    if len(ratios) != 3:
        raise ConfigError(f'Expected train,val,test ratios, got {text!r}')

    return ratios


def split_dataset(dataset, ratios=DEFAULT_RATIOS, seed=0, **kwargs):
    trajectories = load_dataset(dataset)
    return make_split([t.design for t in trajectories], ratios=ratios, seed=seed, **kwargs)


def default_split_path(dataset):
    dataset = Path(dataset)
    return (dataset if dataset.is_dir() else dataset.parent) / SPLIT_NAME


def select(trajectories, split_path=None, subset=None, sample_ids=None):
    """
    Trajectories of one split subset and/or an explicit list of sample ids, in container order.
    Without a subset and ids, everything is returned.
    """
    trajectories = list(trajectories)
    keep = None

    if subset is not None:
        if subset not in SPLITS:
            raise ConfigError(f'Split {subset} invalid, choose one of: {", ".join(SPLITS)}')
        keep = set(load_split(split_path).ids(subset))

    if sample_ids is not None:
        wanted = set(int(s) for s in sample_ids)
        missing = wanted - {t.sample_id for t in trajectories}
        if missing:
            raise ConfigError(f'Sample ids {sorted(missing)} not in the dataset')
        keep = wanted if keep is None else keep & wanted

    if keep is None:
        return trajectories

    retval = [t for t in trajectories if t.sample_id in keep]
    if not retval:
        raise ConfigError(f'No samples selected (subset {subset}, ids {sample_ids})')

    return retval


def parse_ids(text):
    if text is None or str(text).strip() == '':
        return None

    try:
        return [int(x) for x in str(text).split(',')]
    except ValueError:
        raise ConfigError(f'Cannot parse sample ids {text!r}, expected comma separated integers')


def train_family(dataset, out_dir, split_path=None, config_path=None, **overrides):
    """
    Train one family on the train split of `dataset` with early stopping on the val split.
    `overrides` are TrainConfig keys; contact_* keys go into the model config.
    """
    model_keys = ('contact_radius', 'contact_k', 'contact_alpha_init')
    model_overrides = {k: overrides.pop(k, None) for k in model_keys}
    model_overrides = {k: v for k, v in model_overrides.items() if v is not None}

    cfg = load_train_config(config_path, **overrides)
    if model_overrides:
        cfg.model = {**cfg.model, **model_overrides}

    split_path = split_path or default_split_path(dataset)
    trajectories = load_dataset(dataset)
    train_set = select(trajectories, split_path, 'train')
    val_set = select(trajectories, split_path, 'val')

    model = build_model(cfg.model_config(dim=trajectories[0].graph.dim))
    log.info(f'Training {cfg.family} ({model.config.stages}, {model.parameter_count()} parameters) on '
             f'{len(train_set)} train / {len(val_set)} val samples')

    return train(model, train_set, val_set, cfg, out_dir=out_dir)


def load_predictor(checkpoint):
    """(model, NormStats) from a checkpoint path, or the drift baseline for `drift`"""
    if str(checkpoint).lower() == DRIFT:
        return DriftBaseline(), None

    model, stats, _ = load_checkpoint(checkpoint)
    if stats is None:
        raise ConfigError(f'Checkpoint {checkpoint} carries no normalisation statistics')

    return model, stats


def predictor_label(checkpoint):
    if str(checkpoint).lower() == DRIFT:
        return DRIFT

    return Path(checkpoint).stem


def rollout_samples(checkpoint, references, n_jobs=None):
    """Closed-loop rollouts plus a per-step RMSE table; returns (RolloutResults, DataFrame)"""
    model, stats = load_predictor(checkpoint)
    results = rollout_all(model, references, stats, n_jobs=n_jobs)

    rows = []
    for r, ref in zip(results, references):
        series = rmse_series(r.predicted, ref)
        for t, value in enumerate(series.per_step, start=1):
            rows.append((ref.sample_id, t, t * ref.dt, value, r.per_step_contact_counts[t - 1]))

    return results, pd.DataFrame(rows, columns=['sample_id', 't', 'time_ms', 'rmse', 'contacts'])


def write_predictions(results, out_dir):
    return write_container(Path(out_dir) / PREDICTIONS_NAME, [r.predicted for r in results])


def match_predictions(predictions, references):
    by_id = {t.sample_id: t for t in predictions}
    missing = [r.sample_id for r in references if r.sample_id not in by_id]
    if missing:
        raise ShapeError(f'Predictions lack sample ids {missing}')

    return [by_id[r.sample_id] for r in references]


def evaluate_samples(references, checkpoint=None, predictions=None, label=None, n_jobs=None):
    """EvalReport of stored predictions, or of fresh rollouts of `checkpoint`, against `references`"""
    if (checkpoint is None) == (predictions is None):
        raise ConfigError('Evaluate either a checkpoint or a predictions container, not both or neither')

    if predictions is not None:
        preds = match_predictions(load_dataset(predictions), references)
        return evaluate(preds, references, label=label or Path(predictions).stem)

    model, stats = load_predictor(checkpoint)
    report, _ = evaluate_model(model, references, stats, label=label or predictor_label(checkpoint), n_jobs=n_jobs)

    return report


def report_plots(eval_dir, out_dir=None, prefix='eval'):
    eval_dir = Path(eval_dir)
    steps_file = eval_dir / f'{prefix}_steps.csv'
    if not steps_file.is_file():
        raise FileNotFoundError(f'Evaluation table {steps_file.absolute()} does not exist')

    out_dir = Path(out_dir) if out_dir is not None else eval_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    return steps_file, write_report_plots(pd.read_csv(steps_file), out_dir, prefix=prefix)


def _time_rollout(reference, model, stats, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        rollout_reference(model, reference, stats)
        times.append(time.perf_counter() - start)

    return min(times)


def _time_oracle(reference, cfg, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        # bypass the simulation cache
        simulate.__wrapped__(reference.design, cfg)
        times.append(time.perf_counter() - start)

    return min(times)


def bench(dataset, checkpoints=(), references=None, repeats=1, oracle=True):
    """
    Wall time of one full closed-loop rollout per design for the drift baseline and every
    checkpoint, next to the oracle's time for the same design. Rollouts run in-process one at a
    time so the timings are comparable. Returns (per-sample table, per-predictor summary).
    """
    if repeats < 1:
        raise ConfigError(f'repeats should be >= 1, got {repeats}')

    references = list(references if references is not None else load_dataset(dataset))
    rows = []

    if oracle:
        cfg = OracleConfig(**load_manifest(dataset)['oracle_config'])
        for ref in references:
            rows.append(('oracle', ref.sample_id, ref.graph.node_count, ref.horizon, _time_oracle(ref, cfg, repeats)))

    for checkpoint in (DRIFT, *checkpoints):
        model, stats = load_predictor(checkpoint)
        label = predictor_label(checkpoint)
        for ref in references:
            rows.append((label, ref.sample_id, ref.graph.node_count, ref.horizon, _time_rollout(ref, model, stats, repeats)))

    table = pd.DataFrame(rows, columns=['predictor', 'sample_id', 'nodes', 'T', 'wall_time_s'])
    table['per_step_ms'] = 1e3 * table['wall_time_s'] / table['T']

    summary = table.groupby('predictor', sort=False)['wall_time_s'].agg(['mean', 'std', 'min', 'max']).reset_index()
    summary = summary.rename(columns={'mean': 'time_per_design_s', 'std': 'std_s', 'min': 'min_s', 'max': 'max_s'})
    summary['std_s'] = summary['std_s'].fillna(0.0)
    if oracle:
        oracle_time = float(summary.loc[summary['predictor'] == 'oracle', 'time_per_design_s'].iloc[0])
        summary['speedup_vs_oracle'] = oracle_time / summary['time_per_design_s']

    return table, summary


def contact_dump(dataset, sample_id, step=0, checkpoint=None, radius=None, k=None):
    """
    ContactSet at `step` as a DataFrame. With a checkpoint the geometry is the model's own
    rollout and its contact parameters apply; otherwise the reference geometry is used.
    """
    reference = select(load_dataset(dataset), sample_ids=[sample_id])[0]
    if not 0 <= step <= reference.horizon:
        raise ConfigError(f'Step {step} outside 0..{reference.horizon}')

    graph = reference.graph
    positions = reference.states[step].positions
    params = ContactParams.for_graph(graph, k=k or 32, radius=radius)

    if checkpoint is not None:
        model, stats = load_predictor(checkpoint)
        if getattr(model, 'contact_enabled', False):
            params = model.contact_params(graph)
            params = ContactParams(radius=radius or params.radius, k=k or params.k, alpha_init=params.alpha_init)
        if step > 0:
            positions = rollout_reference(model, reference, stats).predicted.states[step].positions

    return build_contacts(graph, positions, params, built_at=step).to_frame()

