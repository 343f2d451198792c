import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minibatch_inventory.apps import MultiProductApp
from minibatch_inventory.core import ConstraintSet, DemandModel, RandomStream
from oracles import grid_projection_2d

U = DemandModel("uniform", {"a": 0, "b": 10}, dimension=2)


@pytest.fixture
def app():
    return MultiProductApp([1, 2], [5, 6], ConstraintSet([0, 0], [10, 10]), U)


def test_cost_examples(app):
    assert app.cost([3, 4], [2, 6]) == pytest.approx(13)
    assert app.cost([3, 4], [3, 4]) == 0
    assert app.cost([0, 0], [1, 1]) == pytest.approx(11)


def test_gradient_examples(app):
    assert np.array_equal(app.gradient_estimator([3, 4], [2, 4]), [1, -6])
    assert np.array_equal(app.gradient_estimator([3, 4], app.censor([3, 4], [1, 1])), [1, 2])
    assert np.array_equal(app.gradient_estimator([3, 4], app.censor([3, 4], [5, 9])), [-5, -6])


def test_dynamics_and_censor(app):
    assert np.array_equal(app.dynamics([3, 4], [2, 6]), [1, 0])
    assert np.array_equal(app.dynamics([3, 4], [0, 0]), [3, 4])
    assert np.array_equal(app.censor([3, 4], [2, 6]), [2, 4])
    assert np.array_equal(app.censor([3, 4], [0, 0]), [0, 0])


def test_transition_examples():
    a = MultiProductApp([1, 1], [1, 1], ConstraintSet([0, 0], None, [[1, 1]], [2]), U)
    assert np.allclose(a.transition_solver([1.5, 0], [0.5, 0.5]), [1.5, 0.5], atol=1e-8)
    assert np.allclose(a.transition_solver([0.2, 0.1], [0.5, 0.5]), [0.5, 0.5])
    b = MultiProductApp([1, 1], [1, 1], ConstraintSet([0, 0], [3, 3]), U)
    assert np.allclose(b.transition_solver([2, 0], [0, 0]), [2, 0])


def test_transition_against_grid():
    rng = np.random.default_rng(5)
    for _ in range(50):
        A = rng.uniform(0.2, 2, (2, 2))
        rho = rng.uniform(4, 8, 2)
        cs = ConstraintSet([0, 0], [5, 5], A, rho)
        a = MultiProductApp([1, 1], [1, 1], cs, U)
        x = cs.project(rng.uniform(0, 5, 2)) * (1 - 1e-7)  # strictly inside
        w = cs.project(rng.uniform(0, 5, 2))
        sub = ConstraintSet(x, [5, 5], A, rho)  # the set intersected with y >= x
        assert np.linalg.norm(a.transition_solver(x, w) - grid_projection_2d(sub, w)) <= 2e-3


def test_expected_cost_and_quantiles():
    nv = MultiProductApp.newsvendor(1, 50, DemandModel("uniform", {"a": 0, "b": 10}), 20)
    assert nv.critical_quantiles()[0] == pytest.approx(500 / 51)
    y = np.array([9.0])
    # h y^2/20 + b (10 - y)^2 / 20 for U(0,10)
    assert nv.expected_cost(y) == pytest.approx(81 / 20 + 50 / 20)


def test_saa_matches_direct(app):
    d = U.sample_path(RandomStream(0, 0), 2000)
    f = app.saa(d)
    for y in ([3.0, 4.0], [0.0, 10.0], [d[5, 0], 7.5]):
        val, g = f(np.array(y))
        assert val == pytest.approx(app.cost(np.array(y), d).mean())
        assert np.allclose(g, app.gradient_estimator(np.array(y), d).mean(0))


def test_waiting_bound(app):
    assert app.waiting_bound == pytest.approx(2 + 6 * 2 * 0.1 * app.decision_set.diameter())
    assert app.sigma0 == pytest.approx(np.sqrt(1 + 4 + 25 + 36))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=2), st.lists(st.floats(0, 10), min_size=2, max_size=2))
def test_gradient_bounded_and_feasible_transition(y, d):
    a = MultiProductApp([1, 2], [5, 6], ConstraintSet([0, 0], None, [[1, 1]], [10]), U)
    g = a.gradient_estimator(np.array(y), a.censor(np.array(y), np.array(d)))
    assert np.linalg.norm(g) <= a.sigma0
    x = a.decision_set.project(np.array(y))
    w = a.decision_set.project(np.array(d))
    out = a.transition_solver(x, w)
    assert np.all(out >= x - 1e-7) and a.decision_set.contains(out, 1e-7)


def test_invalid_instance():
    with pytest.raises(ValueError):
        MultiProductApp([1], [1, 2], ConstraintSet([0, 0], [1, 1]), U)
    with pytest.raises(ValueError):
        MultiProductApp([1, 1], [1, 1], ConstraintSet([0], [1]), U)
