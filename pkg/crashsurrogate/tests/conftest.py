import numpy as np
import pytest

from crashsurrogate.autodiff import set_deterministic
from crashsurrogate.helpers.cache import reinit_cache_config
from crashsurrogate.helpers.config import config
from crashsurrogate.mesh.features import fit_norm_stats
from crashsurrogate.models.config import ModelConfig
from crashsurrogate.oracle.design import DesignBounds
from crashsurrogate.oracle.lattice import OracleConfig, simulate
from crashsurrogate.oracle.lhs import lhs_sample

# 4 x 3 lattice plus a 4-node pole ring: 16 nodes
TINY_ORACLE = OracleConfig(nx=4, ny=3, pole_nodes=4, T=3)
SMALL_ORACLE = OracleConfig(nx=6, ny=3, pole_nodes=6, T=4)

SMALL_MODEL = {'d_h': 8, 'n_tokens': 4, 'heads': 2}


@pytest.fixture(autouse=True)
def no_cache_deterministic():
    cache, det = config['cache'], set_deterministic(True)
    config['cache'] = 'none'
    reinit_cache_config()

    yield

    config['cache'] = cache
    set_deterministic(det)
    reinit_cache_config()


@pytest.fixture(scope='session')
def tiny_trajectories():
    config['cache'] = 'none'
    reinit_cache_config()

    return [simulate(d, TINY_ORACLE, DesignBounds()) for d in lhs_sample(3, seed=7)]


@pytest.fixture(scope='session')
def tiny_stats(tiny_trajectories):
    return fit_norm_stats(tiny_trajectories)


@pytest.fixture
def jittered_state(tiny_trajectories):
    """Frame 1 of the first tiny trajectory with random, tie-free offsets on the FREE nodes"""
    traj = tiny_trajectories[0]
    rng = np.random.default_rng(3)
    free = traj.graph.free_mask[:, None]
    x = traj.states[1].positions + free * rng.normal(scale=0.7, size=traj.states[1].positions.shape)
    v = traj.states[1].velocities + free * rng.normal(scale=0.3, size=x.shape)

    return traj.graph, x, v


def small_config(family, **overrides):
    return ModelConfig.for_family(family, scale='desk', dim=2, **{**SMALL_MODEL, **overrides})
