import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minibatch_inventory.apps import MultiProductApp
from minibatch_inventory.baselines import SaaPolicy, SgdPolicy, saa_step, sgd_policy_step
from minibatch_inventory.core import ConstraintSet, DemandModel, RandomStream
from minibatch_inventory.meta_policy import simulate

U = DemandModel("uniform", {"a": 0, "b": 10})


def nv(cap=10):
    return MultiProductApp.newsvendor(1, 50, U, cap)


def test_sgd_examples():
    p = SgdPolicy(nv(), 1.0, 1, [5.0])
    assert p.step([1.0]) == pytest.approx([4.0])
    p = SgdPolicy(nv(), 1.0, 0.5, [5.0])
    p.t = 4
    assert p.step([2.0]) == pytest.approx([4.0])
    p = SgdPolicy(nv(), 1.0, 1, [0.5])
    assert p.step([3.0]) == pytest.approx([0.0])


def test_sgd_policy_step_routes_through_solver():
    app = MultiProductApp([1, 1], [1, 1], ConstraintSet([0, 0], [3, 3]),
                          DemandModel("uniform", {"a": 0, "b": 1}, dimension=2))
    p = SgdPolicy(app, 1.0, 1, [1.0, 1.0])
    y, working = sgd_policy_step(p, [2.0, 0.0], [1.0, 1.0])
    assert not working and np.allclose(y, [2.0, 0.0])


def test_invalid_power():
    with pytest.raises(ValueError):
        SgdPolicy(nv(), 1.0, 2, [1.0])


def test_saa_examples():
    assert saa_step([1, 2, 3, 4], 0.75) == 3
    assert saa_step([4, 1, 3, 2], 1.0) == 4
    assert saa_step([7.5], 0.3) == 7.5
    assert saa_step([], 0.5, initial=2.0) == 2.0
    assert saa_step([1, 2, 3, 4], 0.5) == 2
    with pytest.raises(ValueError):
        saa_step([1], 0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=50), st.floats(0.01, 1.0))
def test_saa_is_generalized_inverse(hist, q):
    v = saa_step(hist, q)
    h = np.sort(hist)
    assert np.mean(h <= v) >= q - 1e-9
    below = h[h < v]
    assert below.size == 0 or np.mean(h <= below[-1]) < q + 1e-9


def test_saa_policy_tracks_order_statistic():
    app = nv(20)
    D = U.sample_path(RandomStream(0, 0), 50)[None]
    pol = SaaPolicy(app, [0.0])
    simulate(app, pol, D)
    assert pol.w[0, 0] == pytest.approx(saa_step(D[0, :, 0], 50 / 51))


def test_sgd_switches_every_period():
    app = nv(20)
    D = U.sample_path(RandomStream(0, 0), 200)[None]
    pol = SgdPolicy(app, 0.5, 0.5, [0.0])
    tr = simulate(app, pol, D)
    assert tr.n_targets[0] == 200
    assert np.all(app.decision_set.violation(pol.w) <= 1e-12)
