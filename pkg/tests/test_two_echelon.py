import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minibatch_inventory.core import DemandModel, RandomStream
from minibatch_inventory.two_echelon import (TwoEchelonInstance, empirical_quantile, epoch_lengths,
                                             epoch_optimize, planner_run, planner_simulate,
                                             two_echelon_oracle)

N51 = DemandModel("normal", {"mu": 5, "sigma": 1})


def inst(**kw):
    base = dict(h1=2.0, h2=1.0, p1=50.0, demand=N51, s_max=10.0, D_bar=10.0)
    base.update(kw)
    return TwoEchelonInstance(**base)


def test_epoch_lengths():
    assert epoch_lengths(14) == [2, 4, 8]
    assert epoch_lengths(15) == [2, 4, 8, 1]
    assert epoch_lengths(2) == [2]
    with pytest.raises(ValueError):
        epoch_lengths(1)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 10 ** 6))
def test_epoch_lengths_double(T):
    L = epoch_lengths(T)
    assert sum(L) == T
    assert all(L[i + 1] == 2 * L[i] for i in range(len(L) - 2))
    assert L[-1] <= 2 * L[-2] if len(L) > 1 else True
    if T == 2 ** (len(L) + 1) - 2:  # every epoch complete
        assert len(L) == math.floor(math.log2(T / 2)) + 1


def test_empirical_quantile_example():
    assert empirical_quantile([1, 3, 5, 7], 0.5) == 3
    assert empirical_quantile([4, 4, 4], 0.9) == 4
    with pytest.raises(ValueError):
        empirical_quantile([1.0], 1.5)


def test_epoch_optimize_s1_from_first_half():
    ins = inst(h1=1.0, h2=1.0, p1=1.0)  # ratio 1
    D = np.array([1, 3, 5, 7, 100, 100, 100, 100.0])
    assert epoch_optimize(D, ins, 100).s1 == 7
    ins = inst(h1=3.0, h2=1.0, p1=1.0)  # ratio 0.5
    assert epoch_optimize(D, ins, 100).s1 == 3


def test_epoch_updates_after_one_and_three():
    ins = inst(eta=1.0)
    D = np.array([5, 5, 5, 9, 9, 9.0])
    res = epoch_optimize(D, ins, 100, w_start=2.0)
    it = res.iterates
    assert it[0] == 2.0
    assert it[1] != it[0]  # updated after the first gradient
    assert it[2] == it[1]  # second batch needs two gradients


def test_iterates_clamped():
    ins = inst(eta=100.0, s_max=3.0)
    D = N51.sample_path(RandomStream(0, 0), 64)[:, 0]
    res = epoch_optimize(D, ins, 1000, w_start=1.0)
    assert np.all((res.iterates >= 0) & (res.iterates <= 3.0))
    assert 0 <= res.w_last <= 3.0
    assert res.s2 == pytest.approx(res.iterates.mean())


def test_decisions_constant_within_epoch_and_reconstructable():
    ins = inst()
    tr = planner_run(ins, 62, RandomStream(4, 0))
    d = N51.sample_path(RandomStream(4, 0), 62)[:, 0]
    assert tr.lengths == [2, 4, 8, 16, 32]
    t = 0
    for m, L in enumerate(tr.lengths[:-1]):
        first = d[t:t + L // 2]
        assert tr.s1[0, m + 1] == empirical_quantile(first, ins.ratio)
        t += L
    prev = np.r_[0.0, d[:-1]]
    s1 = np.repeat(tr.s1[0], tr.lengths)
    s2 = np.repeat(tr.s2[0], tr.lengths)
    assert np.allclose(tr.cost[0], ins.period_cost(s1, s2, prev, d))


def test_vectorized_matches_rows():
    ins = inst()
    D = np.stack([N51.sample_path(RandomStream(1, r), 100)[:, 0] for r in range(3)])
    tr = planner_simulate(ins, D)
    for r in range(3):
        one = planner_simulate(ins, D[r])
        assert np.allclose(one.cost[0], tr.cost[r])


def test_invalid_instances():
    with pytest.raises(ValueError):
        inst(h2=5.0)  # ratio (5+50)/(2+50) > 1
    with pytest.raises(ValueError):
        inst(s_max=0.0)


def test_oracle_inner_newsvendor():
    ins = inst()
    (s1, s2), c = two_echelon_oracle(ins, n_samples=200_000, seed=3)
    # brute force on a coarse grid around the oracle answer
    rng = np.random.default_rng(99)
    d = N51.sample_path(rng, 400_000)[:, 0]
    dp, dc = d[:200_000], d[200_000:]
    best = min(float(np.mean(ins.period_cost(a, b, dp, dc)))
               for a in np.arange(s1 - 0.3, s1 + 0.31, 0.1) for b in np.arange(s2 - 0.3, s2 + 0.31, 0.1))
    assert c <= best + 0.02
