"""Serial multi-echelon system with downstream emergency transport.

Stage 1 faces demand. When it runs out, stock is pulled from stage 2 at
fare ``b_1``, from stage 3 at fare ``b_2`` and so on; what no stage can
cover is lost at unit cost ``b_1 + ... + b_n``. Holding at stage ``i``
costs ``h_i + ... + h_n`` per unit.

With prefix sums ``yt = B y`` (``yt_i = y_1 + ... + y_i``) the cost becomes
a sum of scalar newsvendor costs, one per prefix. The learning policy
works in ``yt`` coordinates over the image of the capacity box.
"""

from __future__ import annotations

import numpy as np

from ..core import ConstraintSet, DemandModel
from ..optimizer import TheoryConstants
from .base import InventoryApp


def transform(y):
    """Prefix sums ``B y`` along the last axis."""
    return np.cumsum(np.asarray(y, dtype=float), axis=-1)


def inverse_transform(yt, tol: float = 1e-9):
    """First differences; rejects sequences that decrease by more than ``tol``."""
    yt = np.asarray(yt, dtype=float)
    q = np.diff(yt, axis=-1, prepend=0.0)
    if np.any(q < -tol):
        raise ValueError("inverse_transform needs a nondecreasing sequence starting at >= 0")
    return q


def transformed_set(rho, **kw) -> ConstraintSet:
    """``{B y : 0 <= y <= rho}`` written as a box plus difference halfspaces."""
    rho = np.asarray(rho, dtype=float)
    n = rho.shape[0]
    rows, rhs = [], []
    for i in range(1, n):
        a = np.zeros(n)
        a[i - 1], a[i] = 1.0, -1.0  # yt_{i-1} - yt_i <= 0
        rows.append(a)
        rhs.append(0.0)
        rows.append(-a)  # yt_i - yt_{i-1} <= rho_i
        rhs.append(rho[i])
    A = np.array(rows) if rows else None
    r = np.array(rhs) if rows else None
    return ConstraintSet(np.zeros(n), np.cumsum(rho), A, r, **kw)


class MultiEchelonApp(InventoryApp):
    """Serial ``n``-stage system.

    Parameters
    ----------
    h : array_like
        Holding increments; stage ``i`` pays ``h_i + ... + h_n``.
    b : array_like
        Fares ``b_1..b_{n-1}``; ``b_n`` completes the lost-sales cost
        ``sum(b)``.
    rho : array_like
        Stage capacities.
    demand : DemandModel
        Scalar demand at stage 1.
    """

    name = "multiechelon"

    def __init__(self, h, b, rho, demand: DemandModel):
        self.h = np.atleast_1d(np.asarray(h, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.rho = np.atleast_1d(np.asarray(rho, dtype=float))
        self.n = self.h.shape[0]
        if self.b.shape != (self.n,) or self.rho.shape != (self.n,):
            raise ValueError("h, b and rho must have the same length")
        if np.any(self.h <= 0) or np.any(self.b <= 0) or np.any(self.rho <= 0):
            raise ValueError("h, b and rho must be positive")
        if demand.dimension != 1:
            raise ValueError("serial system needs scalar demand")
        self.demand = demand
        self.decision_set = ConstraintSet(np.zeros(self.n), self.rho)
        self.param_set = transformed_set(self.rho)
        self._stage_h = np.cumsum(self.h[::-1])[::-1]

    # -- coordinates ---------------------------------------------------------------

    def to_decision(self, w):
        # Projection noise may make increments a hair negative; clip to the box.
        q = np.diff(np.asarray(w, dtype=float), axis=-1, prepend=0.0)
        return np.clip(q, 0.0, self.rho)

    def to_param(self, y):
        return transform(y)

    # -- model -------------------------------------------------------------------

    def cost_detailed(self, y, d):
        """Stage-by-stage holding, transport and lost-sales cost."""
        y = np.asarray(y, dtype=float)
        d = np.asarray(d, dtype=float)[..., 0]
        n = self.n
        prefix = np.cumsum(y, axis=-1)
        total = np.zeros(np.broadcast_shapes(y.shape[:-1], d.shape))
        for i in range(n):
            before = prefix[..., i - 1] if i > 0 else 0.0
            reach = np.maximum(d - before, 0.0)
            total = total + self._stage_h[i] * np.maximum(y[..., i] - reach, 0.0)
            if i < n - 1:
                upstream = prefix[..., n - 1] - prefix[..., i]
                total = total + self.b[i] * np.minimum(upstream, np.maximum(d - prefix[..., i], 0.0))
        total = total + self.b.sum() * np.maximum(d - prefix[..., n - 1], 0.0)
        return total

    def cost_simplified(self, y, d):
        """Separable form ``sum_i h_i (yt_i - d)^+ + b_i (d - yt_i)^+``."""
        yt = transform(y)
        d = np.asarray(d, dtype=float)
        return np.maximum(yt - d, 0.0) @ self.h + np.maximum(d - yt, 0.0) @ self.b

    def cost(self, y, d):
        return self.cost_simplified(y, d)

    def dynamics(self, y, d):
        y = np.asarray(y, dtype=float)
        d = np.asarray(d, dtype=float)
        before = np.cumsum(y, axis=-1) - y
        return np.maximum(y - np.maximum(d - before, 0.0), 0.0)

    def censor(self, y, d):
        """Total sales ``min(d, yt_n)``, shape ``(..., 1)``."""
        y = np.asarray(y, dtype=float)
        return np.minimum(d, y.sum(axis=-1, keepdims=True))

    def gradient_estimator(self, w, obs):
        """``h_i 1[yt_i > d] - b_i 1[yt_i <= d]`` with the stockout test ``s >= yt_i``."""
        w = np.asarray(w, dtype=float)
        stockout = np.asarray(obs) >= w
        return np.where(stockout, -self.b, self.h)

    def gradient_estimator_tilde(self, yt, d):
        """Estimator from the prefix vector and a raw demand."""
        yt = np.asarray(yt, dtype=float)
        d = np.asarray(d, dtype=float)
        if d.ndim < yt.ndim:
            d = d[..., None]
        s = np.minimum(d, yt[..., -1:])
        return self.gradient_estimator(yt, s)

    def transition_solver(self, x, target):
        """Keep stages up to the highest infeasible one, target the rest."""
        x = np.asarray(x, dtype=float)
        target = np.asarray(target, dtype=float)
        bad = target < x
        has = bad.any(axis=-1, keepdims=True)
        last = self.n - 1 - np.argmax(bad[..., ::-1], axis=-1)[..., None]
        hold = has & (np.arange(self.n) <= last)
        return np.where(hold, x, target)

    def saa(self, samples):
        d = np.sort(np.asarray(samples, dtype=float).reshape(-1))
        N = d.shape[0]
        csum = np.concatenate([[0.0], np.cumsum(d)])

        def f(w):
            w = np.asarray(w, dtype=float)
            k = np.searchsorted(d, w, side="right")
            over = k * w - csum[k]
            under = (csum[N] - csum[k]) - (N - k) * w
            below = np.searchsorted(d, w, side="left")
            val = float((self.h @ over + self.b @ under) / N)
            g = (self.h * below - self.b * (N - below)) / N
            return val, g

        return f

    def expected_cost_tilde(self, yt):
        """Exact ``Q~(yt)``."""
        yt = np.asarray(yt, dtype=float)
        over, under = self.demand.partial_expectations(yt, 0)
        return over @ self.h + under @ self.b

    # -- constants ---------------------------------------------------------------

    @property
    def sigma0(self) -> float:
        return float(np.sqrt(np.sum(self.h ** 2) + np.sum(self.b ** 2)))

    @property
    def waiting_bound(self) -> float:
        return 1.0 + 6.0 * self.demand.beta0 * float(self.rho.sum())

    def theory_constants(self) -> TheoryConstants:
        beta0, alpha0 = self.demand.beta0, self.demand.alpha0
        hb = self.h + self.b
        top = np.cumsum(self.rho)
        q_bar = float(self.h @ top + self.b @ np.full(self.n, self.demand.mean()[0]))
        return TheoryConstants(
            beta=float(np.max(hb) * beta0),
            alpha=None if alpha0 is None else float(np.min(hb) * alpha0),
            R=self.param_set.diameter(),
            beta0=beta0,
            alpha0=alpha0,
            sigma0=self.sigma0,
            G=self.sigma0,
            Q_bar=q_bar,
            M=self.waiting_bound,
        )
