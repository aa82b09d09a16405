import numpy as np
import pytest

from crashsurrogate.helpers.errors import ContainerFormatError, NotFittedError, ShapeError
from crashsurrogate.mesh.container import MAGIC, read_container, read_header, sidecar_path, write_container
from crashsurrogate.mesh.features import FeatureLayout, NormStats, assemble_node_features, build_edge_features, \
    estimate_velocity, fit_norm_stats, target_accelerations
from crashsurrogate.mesh.graph import MeshGraph, NodeRole, NodeState, Trajectory, make_static_features, undirected_to_edges
from crashsurrogate.models.config import ModelConfig


def segment_graph(n=3, rigid=(), dim=2):
    roles = np.array([NodeRole.RIGID if k in rigid else NodeRole.FREE for k in range(n)])
    positions = np.zeros((n, dim))
    positions[:, 0] = np.arange(n, dtype=float)

    return MeshGraph(
        edges=undirected_to_edges([(k, k + 1) for k in range(n - 1)]),
        node_role=roles,
        static_features=make_static_features(roles, np.full(n, 1.5)),
        reference_positions=positions,
    )


def test_graph_stores_both_directions():
    g = segment_graph(4)

    assert g.edge_count == 6
    assert {tuple(e) for e in g.edges} == {(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)}
    assert g.median_edge_length() == 1.0


@pytest.mark.parametrize('edges', [[(0, 0)], [(0, 1)], [(0, 5), (5, 0)]])
def test_graph_rejects_bad_edges(edges):
    roles = np.zeros(3)
    with pytest.raises(ShapeError):
        MeshGraph(edges=np.array(edges), node_role=roles, static_features=make_static_features(roles, np.ones(3)),
                  reference_positions=np.zeros((3, 2)))


def test_graph_needs_a_free_node():
    roles = np.ones(2)
    with pytest.raises(ShapeError):
        MeshGraph(edges=np.zeros((0, 2)), node_role=roles, static_features=make_static_features(roles, np.ones(2)),
                  reference_positions=np.zeros((2, 2)))


def test_node_state_rejects_non_finite():
    x = np.zeros((2, 2))
    x[1, 0] = np.nan
    with pytest.raises(ShapeError):
        NodeState(x, np.zeros((2, 2)))


def test_trajectory_rejects_moving_rigid_nodes():
    g = segment_graph(3, rigid=(0,))
    frames = np.stack([g.reference_positions, g.reference_positions + 0.1])

    with pytest.raises(ShapeError):
        Trajectory.from_positions(g, frames, np.zeros((3, 2)), 1.0)


def test_estimate_velocity_is_exact_backward_difference():
    x_prev = np.array([[1.0, 2.0], [-3.0, 0.5]])
    x_t = np.array([[1.5, 1.0], [-2.0, 0.5]])

    np.testing.assert_array_equal(estimate_velocity(x_t, x_prev, 0.5), (x_t - x_prev) / 0.5)
    with pytest.raises(ShapeError):
        estimate_velocity(x_t, x_prev[:1], 0.5)
    with pytest.raises(ShapeError):
        estimate_velocity(x_t, x_prev, 0.0)


def test_from_positions_keeps_initial_velocity():
    g = segment_graph(2)
    frames = np.stack([g.reference_positions, g.reference_positions + [1.0, 0.0], g.reference_positions + [2.0, 0.0]])
    v0 = np.full((2, 2), 7.0)
    traj = Trajectory.from_positions(g, frames, v0, 2.0)

    assert traj.horizon == 2
    np.testing.assert_array_equal(traj.states[0].velocities, v0)
    np.testing.assert_array_equal(traj.states[2].velocities[:, 0], [0.5, 0.5])
    np.testing.assert_array_equal(target_accelerations(traj)[1], np.zeros((2, 2)))


def test_permuted_trajectory_relabels_survival_pair(tiny_trajectories):
    traj = tiny_trajectories[0]
    perm = np.random.default_rng(0).permutation(traj.graph.node_count)
    p = traj.permuted(perm)

    np.testing.assert_array_equal(p.positions, traj.positions[:, perm])
    a, b = p.survival_pair
    assert (perm[a], perm[b]) == traj.survival_pair


@pytest.mark.parametrize('family,width', [('MGN', 7), ('Transolver', 5), ('MeshTransolver', 11), ('GeoFLARE', 5)])
def test_node_feature_widths_at_dim_3(family, width):
    assert ModelConfig.for_family(family, dim=3).d_node == width


def test_node_features_follow_layout(tiny_trajectories, tiny_stats):
    traj = tiny_trajectories[0]
    state = traj.states[1]

    onehot = assemble_node_features(traj.graph, state, tiny_stats, FeatureLayout('onehot', 5))
    flag = assemble_node_features(traj.graph, state, tiny_stats, FeatureLayout('flag', 0))

    assert onehot.shape == (traj.graph.node_count, 2 + 2 + 1 + 5)
    assert flag.shape == (traj.graph.node_count, 2 + 1 + 1)
    np.testing.assert_array_equal(flag[:, 2], traj.graph.rigid_mask.astype(float))
    np.testing.assert_allclose(onehot[:, :2], (state.velocities - tiny_stats.feature_mean) / tiny_stats.feature_std)


def test_edge_features(tiny_trajectories):
    traj = tiny_trajectories[0]
    g = traj.graph
    e = build_edge_features(g, traj.states[0])

    assert e.shape == (g.edge_count, 2 * g.dim + 2)
    rel = g.reference_positions[g.neighbours] - g.reference_positions[g.receivers]
    np.testing.assert_allclose(e[:, :2], rel)
    np.testing.assert_allclose(e[:, 2], np.linalg.norm(rel, axis=1))
    np.testing.assert_array_equal(e[:, 3:], 0.0)


def test_norm_stats_need_fitting(tiny_trajectories):
    traj = tiny_trajectories[0]
    with pytest.raises(NotFittedError):
        assemble_node_features(traj.graph, traj.states[0], NormStats())
    with pytest.raises(ShapeError):
        fit_norm_stats([])


def test_norm_stats_ignore_sample_order(tiny_trajectories):
    a = fit_norm_stats(tiny_trajectories)
    b = fit_norm_stats(tiny_trajectories[::-1])

    for k, v in a.to_arrays().items():
        np.testing.assert_array_equal(v, b.to_arrays()[k])
    assert a.position_scale >= 1.0
    assert (a.accel_std > 0).all()


def test_container_round_trip(tmp_path, tiny_trajectories):
    path = write_container(tmp_path / 'set.cstr', tiny_trajectories)
    back = read_container(path)

    assert sidecar_path(path).is_file()
    assert read_header(path)['trajectory_count'] == len(tiny_trajectories)
    assert len(back) == len(tiny_trajectories)
    for a, b in zip(tiny_trajectories, back):
        assert a.sample_id == b.sample_id
        assert a.survival_pair == b.survival_pair
        assert a.design.as_dict() == b.design.as_dict()
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.velocities, b.velocities)
        np.testing.assert_array_equal(a.graph.edges, b.graph.edges)
        np.testing.assert_array_equal(a.graph.static_features, b.graph.static_features)


def test_container_is_byte_identical_on_rewrite(tmp_path, tiny_trajectories):
    write_container(tmp_path / 'a.cstr', tiny_trajectories)
    write_container(tmp_path / 'b.cstr', read_container(tmp_path / 'a.cstr'))

    assert (tmp_path / 'a.cstr').read_bytes() == (tmp_path / 'b.cstr').read_bytes()


def test_container_rejects_damaged_files(tmp_path, tiny_trajectories):
    path = write_container(tmp_path / 'set.cstr', tiny_trajectories[:1])
    raw = path.read_bytes()

    (tmp_path / 'magic.cstr').write_bytes(b'XXXX' + raw[len(MAGIC):])
    (tmp_path / 'short.cstr').write_bytes(raw[:-8])
    (tmp_path / 'long.cstr').write_bytes(raw + b'\0')

    for name in ('magic', 'short', 'long'):
        with pytest.raises(ContainerFormatError):
            read_container(tmp_path / f'{name}.cstr')


def test_container_needs_shared_topology(tmp_path, tiny_trajectories):
    g = segment_graph(3)
    other = Trajectory.from_positions(g, np.stack([g.reference_positions] * 4), np.zeros((3, 2)), tiny_trajectories[0].dt)

    with pytest.raises(ContainerFormatError):
        write_container(tmp_path / 'mixed.cstr', [tiny_trajectories[0], other])
