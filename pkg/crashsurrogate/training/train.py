import logging
import time

import numpy as np
import pandas as pd

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from tqdm.auto import tqdm

from crashsurrogate.autodiff.checkpoint import save_checkpoint
from crashsurrogate.autodiff.optim import CosineSchedule, OptimState, adamw_step, clip_grad_norm
from crashsurrogate.helpers.config import dump_yaml
from crashsurrogate.helpers.errors import RolloutDivergedError, ShapeError, TrainingDivergedError
from crashsurrogate.mesh.features import fit_norm_stats
from crashsurrogate.metrics.evaluate import rollout_all
from crashsurrogate.rollout.rollout import differentiable_rollout
from crashsurrogate.training.loss import position_loss, position_loss_tensor

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ['epoch', 'train_loss', 'val_loss', 'lr', 'grad_norm', 'wall_time_s']


@dataclass
class TrainResult:
    model: object
    stats: object
    history: pd.DataFrame
    best_epoch: int
    best_val_loss: float
    checkpoint: Optional[Path] = None
    stopped_early: bool = False
    artifacts: list = field(default_factory=list)


def validation_loss(model, trajectories, stats, n_jobs=1):
    """Mean full-rollout position loss (mm^2) over `trajectories`; inf when a rollout diverges"""
    try:
        results = rollout_all(model, trajectories, stats, n_jobs=n_jobs, desc='val rollouts')
    except RolloutDivergedError as e:
        log.warning(f'Validation rollout diverged at step {e.step}')
        return float('inf')

    return float(np.mean([position_loss(r.predicted, ref) for r, ref in zip(results, trajectories)]))


def _fill_missing_grads(params):
    # parameters outside this step's graph (e.g. a contact block without pairs) get a zero gradient
    for p in params.values():
        if p.grad is None:
            p.grad = np.zeros_like(p.values)


def train_step(model, trajectory, stats, opt, params, cfg):
    """One optimisation step on one full closed-loop rollout; returns (loss in mm^2, grad norm before clipping)"""
    model.zero_grad()

    graph = trajectory.graph
    predicted = differentiable_rollout(model, graph, trajectory.states[0], trajectory.horizon, trajectory.dt, stats,
                                       truncation_window=cfg.truncation_window)
    loss = position_loss_tensor(predicted, trajectory.positions, graph.node_role, scale=stats.position_scale)
    value = loss.item()
    if not np.isfinite(value):
        raise RolloutDivergedError(trajectory.horizon, f'Non-finite loss on sample {trajectory.sample_id}')

    loss.backward()
    _fill_missing_grads(params)
    grad_norm = clip_grad_norm(params, cfg.grad_clip)
    adamw_step(params, opt)

    return value * stats.position_scale ** 2, grad_norm


def train(model, train_set, val_set, cfg, out_dir=None, stats=None):
    """
    AdamW + cosine schedule over one closed-loop rollout per step, with early stopping on the
    validation loss. The best model is kept on disk (`best.npz` in `out_dir`) and restored into
    `model` at the end. A non-finite loss aborts with TrainingDivergedError; the last good
    checkpoint stays in place.
    """
    train_set, val_set = list(train_set), list(val_set)
    if not train_set or not val_set:
        raise ShapeError(f'Training needs non-empty train and val splits, got {len(train_set)} and {len(val_set)}')

    stats = fit_norm_stats(train_set) if stats is None else stats
    out_dir = Path(out_dir) if out_dir is not None else None
    artifacts = []
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        echo = out_dir / 'train_config.yml'
        dump_yaml({'train': cfg.to_dict(), 'model': model.config.to_dict()}, echo)
        artifacts.append(echo)

    params = dict(model.named_parameters())
    schedule = CosineSchedule(initial_lr=cfg.lr, total_steps=cfg.epochs * len(train_set), floor_lr=cfg.lr_floor)
    opt = OptimState(base_lr=cfg.lr, weight_decay=cfg.weight_decay, schedule=schedule)
    rng = np.random.default_rng(cfg.seed)

    checkpoint = out_dir / 'best.npz' if out_dir is not None else None
    history = []

    def finish_history():
        df = pd.DataFrame(history, columns=HISTORY_COLUMNS)
        if out_dir is not None:
            df.to_csv(out_dir / 'history.csv', index=False, float_format='%.17g')
            if out_dir / 'history.csv' not in artifacts:
                artifacts.append(out_dir / 'history.csv')
        return df

    def keep_best(epoch, val):
        if checkpoint is not None:
            save_checkpoint(checkpoint, model, stats, extra={'epoch': epoch, 'val_loss': val, 'train_config': cfg.to_dict()})
            if checkpoint not in artifacts:
                artifacts.append(checkpoint)
        return model.state_dict()

    start = time.perf_counter()
    best_val = validation_loss(model, val_set, stats, cfg.n_jobs)
    history.append((0, float('nan'), best_val, schedule.lr(0), float('nan'), time.perf_counter() - start))
    best_epoch, best_state = 0, keep_best(0, best_val)
    log.info(f'{model.config.family}: initial validation loss {best_val:.6g} mm^2')

    wait = 0
    stopped_early = False
    for epoch in range(1, cfg.epochs + 1):
        losses, norms = [], []
        for idx in tqdm(rng.permutation(len(train_set)), desc=f'epoch {epoch}', unit=' rollouts', leave=False):
            try:
                loss, grad_norm = train_step(model, train_set[idx], stats, opt, params, cfg)
            except RolloutDivergedError as e:
                finish_history()
                raise TrainingDivergedError(epoch, opt.step, f'Training diverged in epoch {epoch}, step {opt.step}: {e}') from e
            losses.append(loss)
            norms.append(grad_norm)

        val = validation_loss(model, val_set, stats, cfg.n_jobs)
        history.append((epoch, float(np.mean(losses)), val, opt.current_lr, float(np.mean(norms)), time.perf_counter() - start))
        log.info(f'epoch {epoch}: train {np.mean(losses):.6g} mm^2, val {val:.6g} mm^2, lr {opt.current_lr:.3g}')

        if val < best_val:
            best_val, best_epoch, wait = val, epoch, 0
            best_state = keep_best(epoch, val)
        else:
            wait += 1
            if wait >= cfg.patience:
                log.info(f'Early stopping after epoch {epoch}, best epoch {best_epoch}')
                stopped_early = True
                break

    model.load_state_dict(best_state)

    return TrainResult(model, stats, finish_history(), best_epoch, best_val, checkpoint, stopped_early, artifacts)
