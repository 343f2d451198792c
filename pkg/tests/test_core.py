import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minibatch_inventory.core import (ConstraintSet, DemandModel, ProjectionError, RandomStream,
                                      contains, diameter, project, sample)
from oracles import grid_projection_2d


class TestDemand:
    def test_uniform_support(self):
        m = DemandModel("uniform", {"a": 0, "b": 10})
        x = m.sample_path(RandomStream(1, 0), 10_000)
        assert x.min() >= 0 and x.max() <= 10
        assert sample(m, RandomStream(1, 0)).shape == (1,)

    def test_normal_clipped_at_zero(self):
        m = DemandModel("clipped-normal", {"mu": 0.5, "sigma": 1})
        x = m.sample_path(RandomStream(2, 0), 100_000)
        assert x.min() == 0.0
        assert np.mean(x == 0.0) == pytest.approx(0.3085, abs=0.01)

    def test_poisson_mean(self):
        m = DemandModel("poisson", {"lam": 5})
        x = m.sample_path(RandomStream(3, 0), 10 ** 6)[:, 0]
        se = np.sqrt(5 / x.size)
        assert abs(x.mean() - 5) < 4 * se

    def test_geometric_support_starts_at_one(self):
        x = DemandModel("geometric", {"p": 0.2}).sample_path(RandomStream(0, 0), 10_000)
        assert x.min() >= 1 and abs(x.mean() - 5) < 0.2

    @pytest.mark.parametrize("family,params", [
        ("uniform", {"a": 5, "b": 1}),
        ("normal", {"mu": 1, "sigma": 0}),
        ("poisson", {"lam": -1}),
        ("geometric", {"p": 1.5}),
        ("gamma", {"shape": 1, "rate": 0}),
        ("uniform", {"a": 0}),
        ("lognormal", {}),
    ])
    def test_invalid_params_rejected(self, family, params):
        with pytest.raises(ValueError):
            DemandModel(family, params)

    def test_density_bounds(self):
        assert DemandModel("uniform", {"a": 0, "b": 10}).beta0 == pytest.approx(0.1)
        assert DemandModel("normal", {"mu": 5, "sigma": 1}).beta0 == pytest.approx(0.398942, rel=1e-5)
        g = DemandModel("gamma", {"shape": 2, "rate": 1})
        xs = np.linspace(0.01, 20, 2000)
        assert g.beta0 >= g.marginal(0).pdf(xs).max() - 1e-12

    def test_alpha0_histogram(self):
        m = DemandModel("uniform", {"a": 0, "b": 10})
        x = m.sample_path(RandomStream(4, 0), 10 ** 6)[:, 0]
        hist, _ = np.histogram(x, bins=np.arange(0.1, 9.9 + 1e-9, 0.1))
        dens = hist / (x.size * 0.1)
        assert dens.min() >= m.alpha0 / 2

    def test_determinism_and_independence(self):
        m = DemandModel("normal", {"mu": 5, "sigma": 1}, dimension=3)
        a = m.sample_path(RandomStream(9, 4), 100)
        b = m.sample_path(RandomStream(9, 4), 100)
        c = m.sample_path(RandomStream(9, 5), 100)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_copula_correlation(self):
        corr = np.array([[1, 0.8], [0.8, 1]])
        m = DemandModel("uniform", {"a": 0, "b": 10}, dimension=2, correlation=corr)
        x = m.sample_path(RandomStream(1, 0), 200_000)
        assert np.corrcoef(x.T)[0, 1] == pytest.approx(0.786, abs=0.02)
        assert x.min() >= 0 and x.max() <= 10

    @pytest.mark.parametrize("spec", [
        {"family": "uniform", "a": 0, "b": 10},
        {"family": "normal", "mu": 5, "sigma": 2},
        {"family": "poisson", "lam": 3},
        {"family": "gamma", "shape": 2, "rate": 0.5},
    ])
    def test_partial_expectations(self, spec):
        m = DemandModel.from_dict(spec)
        x = m.sample_path(RandomStream(0, 0), 400_000)[:, 0]
        for y in (0.0, 2.5, 5.0, 9.0):
            over, under = m.partial_expectations(y)
            assert over == pytest.approx(np.maximum(y - x, 0).mean(), abs=0.03)
            assert under == pytest.approx(np.maximum(x - y, 0).mean(), abs=0.03)


class TestConstraintSet:
    def test_examples(self):
        s = ConstraintSet([0, 0], None, [[1, 1]], [2])
        assert np.allclose(project(s, [2, 2]), [1, 1])
        assert np.allclose(project(s, [0.5, 0.3]), [0.5, 0.3])
        s2 = ConstraintSet([1, 1], None, [[1, 1]], [4])
        expected = grid_projection_2d(s2, [3.0, 0.0])
        assert np.allclose(s2.project([3, 0]), [3, 1], atol=1e-8)
        assert np.allclose(expected, [3, 1], atol=2e-3)

    def test_diameter(self):
        assert diameter(ConstraintSet([0, 0], [3, 4])) == pytest.approx(10.0)
        assert diameter(ConstraintSet([0, 0], None, [[1, 1]], [2])) == pytest.approx(2 * np.sqrt(8))
        assert diameter(ConstraintSet([0, 0], [1, 1])) == pytest.approx(2 * np.sqrt(2))

    def test_unbounded_rejected(self):
        with pytest.raises(ValueError):
            ConstraintSet([0, 0], None, [[1, 0]], [2])
        with pytest.raises(ValueError):
            ConstraintSet([0, 0], None, [[1, -1]], [2])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ConstraintSet([1, 1], None, [[1, 1]], [1])

    def test_contains(self):
        s = ConstraintSet([0, 0], None, [[1, 1]], [2])
        assert contains(s, [1, 1], 0)
        assert not contains(s, [1.1, 1], 0)
        assert contains(s, [1.05, 1], 0.1)

    def test_batched_projection_with_lower(self):
        s = ConstraintSet([0, 0], [3, 3], [[1, 1]], [2])
        pts = np.array([[0.5, 0.5], [0.0, 0.0], [3.0, 3.0]])
        lower = np.array([[1.5, 0.0], [0.0, 0.0], [0.0, 0.0]])
        out = s.project(pts, lower=lower)
        assert np.allclose(out, [[1.5, 0.5], [0, 0], [1, 1]], atol=1e-8)

    def test_nonconvergence_reported(self):
        s = ConstraintSet([0, 0], None, [[1, 2], [2, 1]], [2, 2], max_iter=2)
        with pytest.raises(ProjectionError):
            s.project([5.0, 4.0])

    def test_against_grid_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            m = rng.integers(1, 4)
            A = rng.uniform(0.1, 2, (m, 2))
            rho = rng.uniform(1, 6, m)
            s = ConstraintSet([0, 0], [4, 4], A, rho)
            p = rng.uniform(-1, 6, 2)
            assert np.linalg.norm(s.project(p) - grid_projection_2d(s, p)) <= 2e-3


@st.composite
def polyhedra(draw):
    n = draw(st.integers(1, 4))
    m = draw(st.integers(0, 3))
    A = np.array([[draw(st.floats(0, 3)) for _ in range(n)] for _ in range(m)]).reshape(m, n)
    A[A < 1e-3] = 0.0
    A[A.sum(axis=1) == 0, 0] = 1.0
    rho = np.array([draw(st.floats(0.5, 10)) for _ in range(m)])
    upper = np.array([draw(st.floats(1, 10)) for _ in range(n)])
    p = np.array([draw(st.floats(-10, 20)) for _ in range(n)])
    q_raw = np.array([draw(st.floats(0, 1)) for _ in range(n)])
    return ConstraintSet(np.zeros(n), upper, A if m else None, rho if m else None), p, q_raw


@settings(max_examples=150, deadline=None)
@given(polyhedra())
def test_projection_properties(data):
    s, p, q_raw = data
    tol = s.tol
    y = s.project(p)
    assert s.contains(y, 1e-6)
    assert np.allclose(s.project(y), y, atol=2e-6)
    q = s.project(q_raw * s.implied_upper())  # a feasible point
    assert (q - y) @ (p - y) <= 1e-6 * (1 + np.linalg.norm(p)) + tol
