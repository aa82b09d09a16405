import logging

import pandas as pd

from dataclasses import asdict
from functools import partial
from pathlib import Path

from crashsurrogate import __version__
from crashsurrogate.helpers.errors import CrashSurrogateError, StabilityError
from crashsurrogate.helpers.io import read_json, sha256_file, write_json
from crashsurrogate.helpers.joblib import parallel_map
from crashsurrogate.mesh.container import read_container, sidecar_path, write_container
from crashsurrogate.oracle.design import DesignBounds
from crashsurrogate.oracle.lattice import OracleConfig, simulate
from crashsurrogate.oracle.lhs import lhs_sample

log = logging.getLogger(__name__)

CONTAINER_NAME = 'trajectories.cstr'
DESIGNS_NAME = 'designs.csv'
MANIFEST_NAME = 'dataset.json'


def _simulate_sample(design, cfg, bounds):
    try:
        return simulate(design, cfg, bounds)
    except StabilityError:
        raise
    except Exception as e:
        raise CrashSurrogateError(f'Simulation of sample {design.sample_id} failed: {e}') from e


def designs_frame(designs):
    df = pd.DataFrame([d.as_dict() for d in designs], index=pd.Index([d.sample_id for d in designs], name='sample_id'))
    return df


def generate_dataset(out_dir, n=20, bounds=DesignBounds(), cfg=OracleConfig(), seed=0, n_jobs=None):
    """
    Sample n designs by LHS, simulate each and write the container, a design table and a
    manifest listing sample ids, design vectors and file hashes. Returns the manifest dict.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    designs = lhs_sample(n, bounds, seed)
    log.info(f'Simulating {n} designs ({cfg.nx} x {cfg.ny} lattice, T={cfg.T}, dt={cfg.output_dt} ms)')
    trajectories = parallel_map(partial(_simulate_sample, cfg=cfg, bounds=bounds), designs, n_jobs=n_jobs, desc='designs')

    container = out_dir / CONTAINER_NAME
    try:
        write_container(container, trajectories)
        designs_frame(designs).to_csv(out_dir / DESIGNS_NAME, float_format='%.17g')
    except OSError as e:
        raise CrashSurrogateError(f'Writing dataset to {out_dir} failed: {e}') from e

    manifest = {
        'tool_version': __version__,
        'seed': seed,
        'n': n,
        'oracle_config': asdict(cfg),
        'design_bounds': bounds.to_dict(),
        'samples': [{'sample_id': d.sample_id, 'design': d.as_dict()} for d in designs],
        'files': {
            CONTAINER_NAME: sha256_file(container),
            sidecar_path(container).name: sha256_file(sidecar_path(container)),
            DESIGNS_NAME: sha256_file(out_dir / DESIGNS_NAME),
        },
    }
    write_json(manifest, out_dir / MANIFEST_NAME)

    return manifest


def dataset_container(path):
    """Container file for a dataset directory or a direct container path"""
    path = Path(path)
    if path.is_dir():
        path = path / CONTAINER_NAME
    if not path.is_file():
        raise FileNotFoundError(f'Trajectory container {path.absolute()} does not exist')

    return path


def load_dataset(path):
    return read_container(dataset_container(path))


def load_manifest(path):
    path = Path(path)
    return read_json(path / MANIFEST_NAME if path.is_dir() else path)
