"""Multi-product inventory under linear resource constraints.

``n`` products share ``m`` resources, ``A y <= rho`` with ``A >= 0``.
Unmet demand is lost and only sales ``min(d, y)`` are observed. The
single-product newsvendor is the special case ``n = 1`` with a box.
"""

from __future__ import annotations

import numpy as np

from ..core import ConstraintSet, DemandModel
from ..optimizer import TheoryConstants
from .base import InventoryApp


class MultiProductApp(InventoryApp):
    """Multi-product lost-sales system.

    Parameters
    ----------
    h, b : array_like
        Unit holding and lost-sales costs, both positive.
    cset : ConstraintSet
        Feasible order-up-to levels. Its halfspaces should have nonnegative
        coefficients.
    demand : DemandModel
        ``n``-dimensional demand, possibly correlated.
    """

    name = "multiproduct"

    def __init__(self, h, b, cset: ConstraintSet, demand: DemandModel):
        self.h = np.atleast_1d(np.asarray(h, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.n = self.h.shape[0]
        if self.b.shape != (self.n,):
            raise ValueError("h and b must have the same length")
        if np.any(self.h <= 0) or np.any(self.b <= 0):
            raise ValueError("h and b must be positive")
        if cset.n != self.n or demand.dimension != self.n:
            raise ValueError("constraint set and demand must match the number of products")
        if np.any(cset.A < 0):
            raise ValueError("resource coefficients must be nonnegative")
        self.decision_set = cset
        self.param_set = cset
        self.demand = demand

    @classmethod
    def newsvendor(cls, h: float, b: float, demand: DemandModel, capacity: float):
        """Single product with ``0 <= y <= capacity``."""
        return cls([h], [b], ConstraintSet([0.0], [capacity]), demand)

    # -- model -------------------------------------------------------------------

    def cost(self, y, d):
        y = np.asarray(y, dtype=float)
        d = np.asarray(d, dtype=float)
        over = np.maximum(y - d, 0.0)
        under = np.maximum(d - y, 0.0)
        return over @ self.h + under @ self.b

    def dynamics(self, y, d):
        return np.maximum(np.asarray(y, dtype=float) - d, 0.0)

    def censor(self, y, d):
        return np.minimum(d, y)

    def gradient_estimator(self, w, obs):
        # a stockout is recognized as sales reaching the stock level
        w = np.asarray(w, dtype=float)
        stockout = np.asarray(obs) >= w
        return np.where(stockout, -self.b, self.h)

    def transition_solver(self, x, target):
        """Projection of ``target`` onto the set intersected with ``y >= x``."""
        x = np.asarray(x, dtype=float)
        target = np.asarray(target, dtype=float)
        if np.all(x <= target):
            return target.copy()
        return self.decision_set.project(target, lower=x)

    def expected_cost(self, y) -> np.ndarray:
        """Exact ``Q(y)`` from the marginal partial expectations.

        The cost is separable, so correlation between products does not
        matter here.
        """
        y = np.asarray(y, dtype=float)
        total = np.zeros(y.shape[:-1])
        for i in range(self.n):
            over, under = self.demand.partial_expectations(y[..., i], i)
            total = total + self.h[i] * over + self.b[i] * under
        return total

    def critical_quantiles(self) -> np.ndarray:
        """Unconstrained minimizers ``F_i^{-1}(b_i / (b_i + h_i))``."""
        q = self.b / (self.b + self.h)
        return np.array([float(self.demand.ppf(q[i], i)) for i in range(self.n)])

    def saa(self, samples):
        # The objective is separable in the marginals: sort once and answer
        # every query with a binary search.
        samples = np.asarray(samples, dtype=float)
        N = samples.shape[0]
        srt = np.sort(samples, axis=0)
        csum = np.vstack([np.zeros(self.n), np.cumsum(srt, axis=0)])

        def f(w):
            w = np.asarray(w, dtype=float)
            val = 0.0
            g = np.empty(self.n)
            for i in range(self.n):
                col = srt[:, i]
                k = np.searchsorted(col, w[i], side="right")
                over = k * w[i] - csum[k, i]
                under = (csum[N, i] - csum[k, i]) - (N - k) * w[i]
                val += (self.h[i] * over + self.b[i] * under) / N
                below = np.searchsorted(col, w[i], side="left")  # count of d < y
                g[i] = (self.h[i] * below - self.b[i] * (N - below)) / N
            return val, g

        return f

    # -- constants ---------------------------------------------------------------

    @property
    def sigma0(self) -> float:
        return float(np.sqrt(np.sum(self.h ** 2) + np.sum(self.b ** 2)))

    @property
    def waiting_bound(self) -> float:
        R = self.decision_set.diameter()
        return self.n + 6.0 * self.n * self.demand.beta0 * R

    def theory_constants(self) -> TheoryConstants:
        beta0, alpha0 = self.demand.beta0, self.demand.alpha0
        hb = self.h + self.b
        ub = self.decision_set.implied_upper()
        q_bar = float(self.h @ ub + self.b @ self.demand.mean())
        return TheoryConstants(
            beta=float(np.max(hb) * beta0),
            alpha=None if alpha0 is None else float(np.min(hb) * alpha0),
            R=self.decision_set.diameter(),
            beta0=beta0,
            alpha0=alpha0,
            sigma0=self.sigma0,
            G=self.sigma0,
            Q_bar=q_bar,
            M=self.waiting_bound,
        )
