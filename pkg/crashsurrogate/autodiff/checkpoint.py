import io
import json
import logging

import numpy as np

from pathlib import Path

from crashsurrogate.helpers.errors import ContainerFormatError
from crashsurrogate.helpers.io import sha256_json
from crashsurrogate.mesh.features import NormStats

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
PARAM_PREFIX = 'param/'
NORM_PREFIX = 'norm/'


def save_checkpoint(path, model, stats, extra=None):
    """
    Write model parameters, NormStats and the model config into one .npz archive. The archive is
    assembled in memory and written in one go so a crash never leaves a half-written checkpoint.
    """
    cfg = model.config.to_dict()
    arrays = {
        'version': np.array([CHECKPOINT_VERSION], dtype=np.int64),
        'model_config': np.array(json.dumps(cfg, sort_keys=True)),
        'model_config_sha256': np.array(sha256_json(cfg)),
        'extra': np.array(json.dumps(extra or {}, sort_keys=True)),
    }

    if stats is not None:
        for k, v in stats.to_arrays().items():
            arrays[f'{NORM_PREFIX}{k}'] = np.asarray(v, dtype=np.float64)

    for name, values in model.state_dict().items():
        arrays[f'{PARAM_PREFIX}{name}'] = values

    buf = io.BytesIO()
    np.savez(buf, **arrays)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)

    return path


def read_checkpoint(path):
    """Raw checkpoint contents: (model config dict, NormStats or None, parameter dict, extra dict)"""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f'Checkpoint {path.absolute()} does not exist')

    with np.load(path, allow_pickle=False) as npz:
        version = int(npz['version'][0])
        if version != CHECKPOINT_VERSION:
            raise ContainerFormatError(f'{path}: checkpoint version {version} unsupported, expected {CHECKPOINT_VERSION}')

        cfg = json.loads(str(npz['model_config']))
        if sha256_json(cfg) != str(npz['model_config_sha256']):
            raise ContainerFormatError(f'{path}: model config hash mismatch, file is corrupt or was edited')

        norm = {k[len(NORM_PREFIX):]: npz[k] for k in npz.files if k.startswith(NORM_PREFIX)}
        params = {k[len(PARAM_PREFIX):]: npz[k].copy() for k in npz.files if k.startswith(PARAM_PREFIX)}
        extra = json.loads(str(npz['extra']))

    stats = NormStats.from_arrays(norm) if norm else None

    return cfg, stats, params, extra


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, NormStats, extra)"""
    from crashsurrogate.models.config import ModelConfig
    from crashsurrogate.models.hybrid import build_model

    cfg, stats, params, extra = read_checkpoint(path)
    model = build_model(ModelConfig.from_dict(cfg))
    model.load_state_dict(params, strict=True)
    log.debug(f'Loaded {model.config.family} with {model.parameter_count()} parameters from {path}')

    return model, stats, extra
