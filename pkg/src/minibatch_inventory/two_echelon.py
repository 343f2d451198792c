"""Central planner for a two-echelon (supplier / retailer) chain.

The planner works in epochs of lengths 2, 4, 8, ... (the last one cut at the
horizon). Decisions stay fixed within an epoch. At the end of an epoch of
``L`` demands:

* the retailer level ``s1`` is an empirical quantile of the first ``L/2``
  demands at ratio ``(h2 + p1) / (h1 + p1)``;
* the supplier level ``s2`` is the average iterate of a minibatch SGD run
  over the second ``L/2`` demands, clamped to ``[0, s_max]``.

Per-period cost model
---------------------
The supplier holds ``s2`` and refills the retailer's previous demand
``d_{t-1}``; if it cannot, the retailer starts the period at
``s1 - (d_{t-1} - s2)^+`` instead of ``s1``. The period costs::

    h1 (r - d_t)^+ + p1 (d_t - r)^+ + h2 (s2 - d_t)^+,   r = s1 - (d_{t-1} - s2)^+

and the SGD direction ``m_i`` (minus its regularizing term) is the sample
derivative of this cost in ``s2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .core import DemandModel, RandomStream
from .optimizer import BatchSchedule


@dataclass(frozen=True)
class TwoEchelonInstance:
    """Cost and algorithm parameters.

    Attributes
    ----------
    h1, h2 : float
        Retailer and supplier holding costs.
    p1 : float
        Retailer lost-sales penalty.
    demand : DemandModel
        Scalar demand.
    s_max : float
        Upper clamp for the supplier level.
    D_bar : float
        Demand upper bound used by the regularizer.
    C1 : float
        Regularizer scale.
    eta : float
        SGD stepsize.
    schedule : BatchSchedule
        Batch sizes inside each epoch (default ``K tau`` with ``K = 1``).
    """

    h1: float
    h2: float
    p1: float
    demand: DemandModel
    s_max: float
    D_bar: float
    C1: float = 1.0
    eta: float = 0.2
    schedule: BatchSchedule = field(default_factory=lambda: BatchSchedule.any_time_linear(1))

    def __post_init__(self):
        if min(self.h1, self.h2, self.p1) <= 0:
            raise ValueError("costs must be positive")
        if self.s_max <= 0 or self.D_bar <= 0:
            raise ValueError("s_max and D_bar must be positive")
        if self.demand.dimension != 1:
            raise ValueError("two-echelon demand is scalar")
        if not 0 < self.ratio <= 1:
            raise ValueError("quantile target (h2 + p1)/(h1 + p1) must lie in (0, 1]")

    @property
    def ratio(self) -> float:
        return (self.h2 + self.p1) / (self.h1 + self.p1)

    def period_cost(self, s1, s2, d_prev, d):
        s1, s2, d_prev, d = (np.asarray(a, dtype=float) for a in (s1, s2, d_prev, d))
        r = s1 - np.maximum(d_prev - s2, 0.0)
        return (self.h1 * np.maximum(r - d, 0.0) + self.p1 * np.maximum(d - r, 0.0)
                + self.h2 * np.maximum(s2 - d, 0.0))


def epoch_lengths(T: int) -> list:
    """Lengths 2, 4, 8, ... covering ``T`` periods, last one truncated."""
    if T < 2:
        raise ValueError("horizon must be at least 2")
    out, L, left = [], 2, T
    while left > 0:
        out.append(min(L, left))
        left -= out[-1]
        L *= 2
    return out


def empirical_quantile(data, q: float) -> np.ndarray:
    """Smallest observed ``x`` with empirical CDF ``>= q`` (along the last axis)."""
    if not 0.0 < q <= 1.0:
        raise ValueError("quantile target must lie in (0, 1]")
    data = np.asarray(data, dtype=float)
    m = data.shape[-1]
    k = min(m, max(1, math.ceil(q * m - 1e-12 * m)))
    return np.partition(data, k - 1, axis=-1)[..., k - 1]


@dataclass
class EpochResult:
    s1: np.ndarray
    s2: np.ndarray
    iterates: np.ndarray
    w_last: np.ndarray


def epoch_optimize(D, inst: TwoEchelonInstance, T: int, w_start=0.0) -> EpochResult:
    """Compute the next epoch's ``(s1, s2)`` from one epoch of demands.

    Parameters
    ----------
    D : array_like
        Shape ``(L,)`` or ``(R, L)`` with ``L`` even.
    T : int
        Horizon, enters the regularizer ``C1 (h1+p1) sqrt(2 log(T^3 D_bar) / L)``.
    w_start : float or array_like
        Starting SGD iterate (per replication).
    """
    D = np.asarray(D, dtype=float)
    single = D.ndim == 1
    D = np.atleast_2d(D)
    R, L = D.shape
    if L < 2 or L % 2:
        raise ValueError("epoch length must be even and at least 2")
    half = L // 2
    first = D[:, :half]
    first_sorted = np.sort(first, axis=1)
    s1 = empirical_quantile(first, inst.ratio)
    reg = inst.C1 * (inst.h1 + inst.p1) * math.sqrt(2.0 * math.log(T ** 3 * inst.D_bar) / L)
    hp = inst.h1 + inst.p1

    w = np.broadcast_to(np.asarray(w_start, dtype=float), (R,)).copy()
    iterates = np.empty((R, half))
    acc = np.zeros(R)
    tau, l = 1, 0
    n_tau = inst.schedule.batch_size(tau)
    rows = np.arange(R)
    for j, i in enumerate(range(half, L)):
        s = w
        iterates[:, j] = s
        l += 1
        d_prev, d_cur = D[:, i - 1], D[:, i]
        s_hat = np.where(d_prev <= s, s1, s1 + s - d_prev)
        cdf = np.array([np.searchsorted(first_sorted[r], s[r], side="right") for r in rows]) / half
        m = ((s <= d_prev) * (hp * (s_hat >= d_cur) - inst.p1)
             + inst.h2 * (s >= d_cur) + reg * cdf)
        acc += m
        if l == n_tau:
            w = np.clip(w - inst.eta / n_tau * acc, 0.0, inst.s_max)
            acc[:] = 0.0
            l = 0
            tau += 1
            n_tau = inst.schedule.batch_size(tau)
    s2 = iterates.mean(axis=1)
    if single:
        return EpochResult(s1[0], s2[0], iterates[0], w[0])
    return EpochResult(s1, s2, iterates, w)


@dataclass
class PlannerTrajectory:
    """Per-epoch decisions and per-period costs (``R`` replications)."""

    lengths: list
    s1: np.ndarray
    s2: np.ndarray
    cost: np.ndarray

    @property
    def total_cost(self) -> np.ndarray:
        return self.cost.sum(axis=-1)


def planner_simulate(inst: TwoEchelonInstance, demands, s_init=(0.0, 0.0)) -> PlannerTrajectory:
    """Run the planner on pre-drawn demands of shape ``(R, T)``."""
    demands = np.asarray(demands, dtype=float)
    if demands.ndim == 1:
        demands = demands[None]
    R, T = demands.shape
    lengths = epoch_lengths(T)
    s1 = np.full(R, float(s_init[0]))
    s2 = np.full(R, float(s_init[1]))
    w = s2.copy()
    prev = np.concatenate([np.zeros((R, 1)), demands[:, :-1]], axis=1)
    cost = np.empty((R, T))
    s1_hist = np.empty((R, len(lengths)))
    s2_hist = np.empty((R, len(lengths)))
    t = 0
    for m, L in enumerate(lengths):
        sl = slice(t, t + L)
        s1_hist[:, m], s2_hist[:, m] = s1, s2
        cost[:, sl] = inst.period_cost(s1[:, None], s2[:, None], prev[:, sl], demands[:, sl])
        t += L
        if m + 1 < len(lengths):
            res = epoch_optimize(demands[:, sl], inst, T, w_start=w)
            s1, s2, w = res.s1, res.s2, res.w_last
    return PlannerTrajectory(lengths, s1_hist, s2_hist, cost)


def planner_run(inst: TwoEchelonInstance, T: int, stream: RandomStream) -> PlannerTrajectory:
    """One replication of ``T`` periods with demands from ``stream``."""
    d = inst.demand.sample_path(stream, T)[:, 0]
    return planner_simulate(inst, d[None])


def two_echelon_oracle(inst: TwoEchelonInstance, n_samples: int = 10 ** 6,
                       seed: int = 12345, eval_seed: Optional[int] = None):
    """Minimize the expected period cost over ``(s1, s2)``.

    For fixed ``s2`` the retailer problem is a newsvendor in the shifted
    demand ``d + (d_prev - s2)^+``, solved by its empirical quantile at
    ``p1 / (h1 + p1)``; the outer problem in ``s2`` is one-dimensional.
    Returns ``((s1, s2), C)`` with ``C`` estimated on an independent sample.
    """
    rng = np.random.default_rng(seed)
    d = inst.demand.sample_path(rng, 2 * n_samples)[:, 0]
    d_prev, d_cur = d[:n_samples], d[n_samples:]
    q = inst.p1 / (inst.h1 + inst.p1)

    def inner(s2):
        shifted = d_cur + np.maximum(d_prev - s2, 0.0)
        s1 = float(empirical_quantile(shifted, q))
        return s1, float(np.mean(inst.period_cost(s1, s2, d_prev, d_cur)))

    res = minimize_scalar(lambda s2: inner(s2)[1], bounds=(0.0, inst.s_max), method="bounded",
                          options={"xatol": 1e-4})
    s2 = float(res.x)
    s1 = inner(s2)[0]
    rng2 = np.random.default_rng(seed + 1 if eval_seed is None else eval_seed)
    e = inst.demand.sample_path(rng2, 2 * n_samples)[:, 0]
    c_star = float(np.mean(inst.period_cost(s1, s2, e[:n_samples], e[n_samples:])))
    return (s1, s2), c_star
