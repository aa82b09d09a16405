import importlib

import numpy as np
import pandas as pd
import pytest
import yaml

from crashsurrogate.autodiff import Tensor
from crashsurrogate.autodiff.checkpoint import load_checkpoint
from crashsurrogate.helpers.errors import ConfigError, RolloutDivergedError, ShapeError, TrainingDivergedError
from crashsurrogate.mesh.graph import MeshGraph, NodeRole, Trajectory, make_static_features, undirected_to_edges
from crashsurrogate.models.hybrid import build_model
from crashsurrogate.training.config import TrainConfig, load_train_config
from crashsurrogate.training.loss import position_loss, position_loss_tensor
from crashsurrogate.training.train import HISTORY_COLUMNS, train, validation_loss
from crashsurrogate.tests.conftest import SMALL_MODEL


def cube_trajectory(frames, rigid=()):
    frames = np.asarray(frames, dtype=np.float64)
    n = frames.shape[1]
    roles = np.array([NodeRole.RIGID if k in rigid else NodeRole.FREE for k in range(n)])
    graph = MeshGraph(
        edges=undirected_to_edges([(k, k + 1) for k in range(n - 1)]),
        node_role=roles,
        static_features=make_static_features(roles, np.ones(n)),
        reference_positions=frames[0],
    )

    return Trajectory.from_positions(graph, frames, np.zeros(frames.shape[1:]), 1.0)


def test_position_loss_examples():
    x0 = np.arange(6, dtype=float).reshape(2, 3)
    ref = cube_trajectory([x0, x0, x0])
    shifted = cube_trajectory([x0, x0 + [1.0, 2.0, 2.0], x0 + [1.0, 2.0, 2.0]])

    assert position_loss(ref, ref) == 0.0
    assert position_loss(shifted, ref) == 9.0


def test_position_loss_skips_rigid_nodes():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(4, 3))
    ref_frames = np.stack([x0, x0 + rng.normal(size=(4, 3)), x0 + rng.normal(size=(4, 3))])
    ref_frames[:, 3] = x0[3]
    pred_frames = ref_frames + rng.normal(size=ref_frames.shape)
    pred_frames[:, 3] = x0[3]
    pred_frames[0] = ref_frames[0]

    ref, pred = cube_trajectory(ref_frames, rigid=(3,)), cube_trajectory(pred_frames, rigid=(3,))

    expected = np.mean([((pred_frames[t, i] - ref_frames[t, i]) ** 2).sum() for t in (1, 2) for i in range(3)])
    assert position_loss(pred, ref) == pytest.approx(expected, rel=1e-12)

    tensor_loss = position_loss_tensor([Tensor(pred_frames[1]), Tensor(pred_frames[2])], ref_frames, ref.graph.node_role, scale=2.0)
    assert tensor_loss.item() == pytest.approx(expected / 4.0, rel=1e-12)

    with pytest.raises(ShapeError):
        position_loss_tensor([Tensor(pred_frames[1])], ref_frames, ref.graph.node_role)
    with pytest.raises(ShapeError):
        position_loss(pred, ref, roles=np.ones(4))


def test_train_config_from_yaml(tmp_path):
    path = tmp_path / 'train.yml'
    path.write_text(yaml.safe_dump({'family': 'MGN', 'epochs': 3, 'model': {'d_h': 8}}))

    cfg = load_train_config(path, lr=0.01, patience=None)

    assert (cfg.family, cfg.epochs, cfg.lr, cfg.patience) == ('MGN', 3, 0.01, 18)
    assert cfg.model_config().d_h == 8

    path.write_text(yaml.safe_dump({'epoch': 3}))
    with pytest.raises(ConfigError):
        load_train_config(path)
    with pytest.raises(ConfigError):
        TrainConfig(lr=0.0)
    with pytest.raises(FileNotFoundError):
        load_train_config(tmp_path / 'missing.yml')


def small_train_config(**overrides):
    values = {'family': 'MGN', 'epochs': 2, 'lr': 1e-3, 'model': {**SMALL_MODEL, 'l_pre': 2}}
    values.update(overrides)

    return TrainConfig(**values)


def run_training(trajectories, out_dir, **overrides):
    cfg = small_train_config(**overrides)
    model = build_model(cfg.model_config(trajectories[0].graph.dim))

    return train(model, trajectories[:2], trajectories[2:], cfg, out_dir=out_dir)


def test_training_is_reproducible(tmp_path, tiny_trajectories):
    first = run_training(tiny_trajectories, tmp_path / 'a')
    second = run_training(tiny_trajectories, tmp_path / 'b')

    columns = [c for c in HISTORY_COLUMNS if c != 'wall_time_s']
    pd.testing.assert_frame_equal(first.history[columns], second.history[columns])
    assert list(first.history['epoch']) == [0, 1, 2]
    assert first.best_val_loss == first.history['val_loss'].min()
    assert first.history.loc[first.history['epoch'] == first.best_epoch, 'val_loss'].item() == first.best_val_loss

    for name in ('best.npz', 'history.csv', 'train_config.yml'):
        assert (tmp_path / 'a' / name).is_file()

    echo = yaml.safe_load((tmp_path / 'a' / 'train_config.yml').read_text())
    assert echo['train']['family'] == 'MGN' and echo['model']['d_h'] == SMALL_MODEL['d_h']


def test_best_checkpoint_is_restored(tmp_path, tiny_trajectories):
    result = run_training(tiny_trajectories, tmp_path, epochs=3)
    model, stats, extra = load_checkpoint(result.checkpoint)

    assert extra['epoch'] == result.best_epoch
    assert extra['val_loss'] == pytest.approx(result.best_val_loss)
    for name, values in result.model.state_dict().items():
        np.testing.assert_array_equal(model.state_dict()[name], values)
    assert validation_loss(model, tiny_trajectories[2:], stats) == pytest.approx(result.best_val_loss, rel=1e-12)


def test_early_stopping_restores_best_epoch(tmp_path, tiny_trajectories, monkeypatch):
    scripted = iter([5.0, 3.0, 4.0, 1.0])
    snapshots = []

    def scripted_validation(model, trajectories, stats, n_jobs=1):
        snapshots.append(model.state_dict())
        return next(scripted)

    monkeypatch.setattr(importlib.import_module('crashsurrogate.training.train'), 'validation_loss', scripted_validation)
    result = run_training(tiny_trajectories, tmp_path, epochs=5, patience=1)

    assert result.stopped_early
    assert (result.best_epoch, result.best_val_loss) == (1, 3.0)
    assert list(result.history['epoch']) == [0, 1, 2]
    assert result.history['epoch'].iloc[-1] == result.best_epoch + 1
    assert len(snapshots) == 3

    for name, values in result.model.state_dict().items():
        np.testing.assert_array_equal(values, snapshots[1][name])
    assert not all(np.array_equal(values, snapshots[2][name]) for name, values in snapshots[1].items())

    _, _, extra = load_checkpoint(result.checkpoint)
    assert extra['epoch'] == 1


def test_divergence_stops_training(tmp_path, tiny_trajectories, monkeypatch):
    def diverge(*args, **kwargs):
        raise RolloutDivergedError(2)

    monkeypatch.setattr(importlib.import_module('crashsurrogate.training.train'), 'train_step', diverge)

    with pytest.raises(TrainingDivergedError) as e:
        run_training(tiny_trajectories, tmp_path)

    assert e.value.epoch == 1
    history = pd.read_csv(tmp_path / 'history.csv')
    assert list(history['epoch']) == [0]
    assert (tmp_path / 'best.npz').is_file()


def test_training_needs_both_splits(tiny_trajectories):
    cfg = small_train_config()
    model = build_model(cfg.model_config())

    with pytest.raises(ShapeError):
        train(model, tiny_trajectories, [], cfg)
