import os
import psutil

from yaml import load, dump
try:
    from yaml import CLoader as Loader, CDumper as Dumper
except ImportError:
    from yaml import Loader, Dumper

from appdirs import user_cache_dir, user_config_dir
from dataclasses import fields, is_dataclass
from pathlib import Path

from crashsurrogate.helpers.errors import ConfigError

appname = 'crashsurrogate'

n_jobs_env = 'CRASHSURROGATE_N_JOBS'

default_config = {
    'version': 1,
    'cache': 'local',
    'cachedir': user_cache_dir(appname),
    'n_jobs': psutil.cpu_count(),
    'deterministic': True,
    'float_dtype': 'float64',
}


config_file = Path(user_config_dir(appname)) / 'config.yml'


def write_default_config():
    config_file.parent.mkdir(parents=True, exist_ok=True)
    with open(config_file, 'w') as fh:
        dump(default_config, fh, Dumper=Dumper)


def _read_config():
    try:
        if not config_file.is_file():
            write_default_config()

        with open(config_file, 'r') as fh:
            retval = load(fh, Loader=Loader) or {}
    except OSError:
        # read-only home, run on defaults
        retval = {}

    for k, v in default_config.items():
        if k not in retval:
            retval[k] = v

    if os.environ.get(n_jobs_env):
        retval['n_jobs'] = int(os.environ[n_jobs_env])

    return retval


config = _read_config()


def load_yaml(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f'Config file {path.absolute()} does not exist')

    with open(path, 'r') as fh:
        retval = load(fh, Loader=Loader)

    if retval is None:
        return {}

    if not isinstance(retval, dict):
        raise ConfigError(f'Config file {path} should contain a key-value mapping, got {type(retval).__name__}')

    return retval


def dump_yaml(obj, path):
    with open(path, 'w') as fh:
        dump(obj, fh, Dumper=Dumper, sort_keys=True)


def merge_into_dataclass(cls, values, **overrides):
    """
    Build dataclass `cls` from a key-value mapping, rejecting keys the dataclass does not know.
    `overrides` that are None are ignored so CLI options can be passed straight through.
    """
    if not is_dataclass(cls):
        raise TypeError(f'{cls} is not a dataclass')

    known = {f.name for f in fields(cls)}
    merged = {**(values or {}), **{k: v for k, v in overrides.items() if v is not None}}

    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f'Unknown {cls.__name__} keys: {", ".join(unknown)}; valid keys are: {", ".join(sorted(known))}')

    return cls(**merged)


def load_yaml_config(path, cls, **overrides):
    """Dataclass `cls` from the YAML file at `path` (None means defaults only) plus non-None overrides"""
    values = load_yaml(path) if path is not None else {}

    return merge_into_dataclass(cls, values, **overrides)
