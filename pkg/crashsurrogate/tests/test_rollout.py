import numpy as np
import pytest

from crashsurrogate.autodiff import Tensor
from crashsurrogate.helpers.errors import RolloutDivergedError, ShapeError
from crashsurrogate.mesh.graph import NodeRole, NodeState
from crashsurrogate.models.hybrid import DriftBaseline, build_model
from crashsurrogate.rollout.integrate import euler_step
from crashsurrogate.rollout.rollout import differentiable_rollout, predict_step, rollout, rollout_reference
from crashsurrogate.tests.conftest import small_config
from crashsurrogate.tests.test_mesh import segment_graph


class ConstantModel:
    contact_enabled = False

    def __init__(self, value):
        self.value = value

    def predict_accelerations(self, graph, positions, velocities, stats, contacts=None):
        return Tensor(np.full((graph.node_count, graph.dim), self.value))


def test_euler_step_is_exact_on_dyadic_values():
    state = NodeState(np.array([[1.0, 0.0]]), np.array([[0.25, 0.0]]))

    s1 = euler_step(state, np.array([[2.0, 0.0]]), 0.5, [NodeRole.FREE])
    s2 = euler_step(s1, np.array([[2.0, 0.0]]), 0.5, [NodeRole.FREE])

    assert (s1.velocities[0, 0], s1.positions[0, 0]) == (1.25, 1.625)
    assert (s2.velocities[0, 0], s2.positions[0, 0]) == (2.25, 2.75)
    assert s2.time_index == 2


def test_euler_step_pins_rigid_nodes():
    roles = [NodeRole.FREE, NodeRole.RIGID]
    state = NodeState(np.array([[0.0, 0.0], [5.0, 5.0]]), np.array([[1.0, 0.0], [3.0, 3.0]]))

    nxt = euler_step(state, np.ones((2, 2)), 0.5, roles)

    np.testing.assert_array_equal(nxt.positions[1], [5.0, 5.0])
    np.testing.assert_array_equal(nxt.velocities[1], [3.0, 3.0])
    np.testing.assert_array_equal(nxt.positions[0], [0.75, 0.25])


def test_non_finite_accelerations_stop_the_rollout():
    graph = segment_graph(3)
    state = NodeState(np.zeros((3, 2)), np.zeros((3, 2)))

    with pytest.raises(RolloutDivergedError) as e:
        rollout(ConstantModel(np.nan), graph, state, 4, 0.5, stats=None)
    assert e.value.step == 1

    with pytest.raises(ShapeError):
        euler_step(state, np.zeros((2, 2)), 0.5, graph.node_role)


def test_rollout_with_constant_acceleration():
    graph = segment_graph(3, rigid=(2,))
    state = NodeState(graph.reference_positions, np.zeros((3, 2)))

    result = rollout(ConstantModel(2.0), graph, state, 2, 0.5, stats=None, sample_id=4)
    x = result.predicted.positions

    assert result.predicted.horizon == 2 and result.predicted.sample_id == 4
    assert result.per_step_contact_counts == [0, 0]
    np.testing.assert_array_equal(x[2, :2] - x[0, :2], np.full((2, 2), 1.5))
    np.testing.assert_array_equal(x[:, 2], np.broadcast_to(x[0, 2], (3, 2)))


def test_two_state_seed_uses_finite_difference_velocity():
    graph = segment_graph(2)
    s0 = NodeState(np.zeros((2, 2)), np.zeros((2, 2)), 0)
    s1 = NodeState(np.full((2, 2), 0.5), np.full((2, 2), 9.0), 1)

    result = rollout(ConstantModel(0.0), graph, (s0, s1), 3, 0.5, stats=None)
    states = result.predicted.states

    assert len(states) == 4
    np.testing.assert_array_equal(states[1].velocities, np.ones((2, 2)))
    np.testing.assert_array_equal(states[3].positions, np.full((2, 2), 1.5))

    with pytest.raises(ShapeError):
        rollout(ConstantModel(0.0), graph, (s0, s1, s1), 3, 0.5, stats=None)
    with pytest.raises(ShapeError):
        rollout(ConstantModel(0.0), graph, s0, 0, 0.5, stats=None)


def test_drift_baseline_moves_inertially(tiny_trajectories, tiny_stats):
    ref = tiny_trajectories[0]
    pred = rollout_reference(DriftBaseline(), ref, tiny_stats).predicted

    free = ref.graph.free_mask
    x0, v0 = ref.states[0].positions, ref.states[0].velocities
    for t, state in enumerate(pred.states):
        np.testing.assert_allclose(state.positions[free], x0[free] + t * ref.dt * v0[free], rtol=1e-12, atol=1e-9)
        np.testing.assert_array_equal(state.positions[~free], x0[~free])


def test_rollout_is_deterministic(tiny_trajectories, tiny_stats):
    ref = tiny_trajectories[1]
    model = build_model(small_config('MeshTransolver+Contact', l_attn=1))

    first = rollout_reference(model, ref, tiny_stats)
    second = rollout_reference(model, ref, tiny_stats)

    np.testing.assert_array_equal(first.predicted.positions, second.predicted.positions)
    assert first.per_step_contact_counts == second.per_step_contact_counts
    assert len(first.per_step_contact_counts) == ref.horizon
    assert first.predicted.design == ref.design


def test_differentiable_rollout_matches_inference_rollout(tiny_trajectories, tiny_stats):
    ref = tiny_trajectories[2]
    model = build_model(small_config('MGN'))

    inference = rollout_reference(model, ref, tiny_stats).predicted.positions
    trained = differentiable_rollout(model, ref.graph, ref.states[0], ref.horizon, ref.dt, tiny_stats)
    truncated = differentiable_rollout(model, ref.graph, ref.states[0], ref.horizon, ref.dt, tiny_stats,
                                       truncation_window=1)

    assert len(trained) == ref.horizon
    for t, (x, x_trunc) in enumerate(zip(trained, truncated), start=1):
        np.testing.assert_allclose(x.values, inference[t], rtol=1e-12, atol=1e-9)
        np.testing.assert_array_equal(x.values, x_trunc.values)


def test_predict_step_reports_contacts(jittered_state, tiny_stats):
    graph, x, v = jittered_state
    model = build_model(small_config('MeshGeoTransolver', l_attn=1))

    nxt, contacts = predict_step(model, graph, NodeState(x, v, 1), tiny_stats, 0.1)

    assert nxt.time_index == 2
    assert contacts.built_at == 1
    _, no_contacts = predict_step(build_model(small_config('MGN')), graph, NodeState(x, v, 1), tiny_stats, 0.1)
    assert no_contacts is None
