"""One warehouse, ``n`` stores, with delivery after demand is revealed.

Each period the firm raises the warehouse (index 0) and the stores
(indices ``1..n``) to order-up-to levels ``y``. Once store demands are
known, warehouse stock can be shipped to short stores at fare ``c_i``.
Unmet demand is lost at ``b_i``; leftover stock is held at ``h_i``.

Under ``b_i > c_i`` and ``h_0 <= c_i + h_i`` the delivery problem is solved
by serving short stores in decreasing ``b_i - c_i`` order until the
warehouse is empty. :func:`lp_oracle` solves the same problem as a linear
program and is kept as a cross-check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ..core import ConstraintSet, DemandModel
from ..optimizer import TheoryConstants
from .base import InventoryApp


@dataclass
class DeliveryOutcome:
    """Result of the delivery step.

    ``s`` holds the warehouse remainder after each store in *priority
    order*; every other array is indexed by store.
    """

    s: np.ndarray
    z: np.ndarray
    o: np.ndarray
    l: np.ndarray
    cost: np.ndarray

    @property
    def leftover(self) -> np.ndarray:
        return self.s[..., -1]


class OwmsApp(InventoryApp):
    """One-warehouse multi-store system.

    Parameters
    ----------
    h : array_like
        ``n + 1`` holding costs, warehouse first.
    b, c : array_like
        Lost-sales costs and transport fares of the ``n`` stores.
    rho : array_like
        ``n + 1`` capacities.
    demand : DemandModel
        ``n``-dimensional store demand.
    halt : {"argmin", "argmax"}
        Which store the transition solver stops replenishing while the
        warehouse is above target, chosen by ``b - c``.
    """

    name = "owms"

    def __init__(self, h, b, c, rho, demand: DemandModel, halt: str = "argmin"):
        self.h = np.asarray(h, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.rho = np.asarray(rho, dtype=float)
        self.n = self.b.shape[0]
        if self.h.shape != (self.n + 1,) or self.rho.shape != (self.n + 1,) or self.c.shape != (self.n,):
            raise ValueError("h and rho need n+1 entries, b and c need n")
        if np.any(self.h <= 0) or np.any(self.b <= 0) or np.any(self.c <= 0) or np.any(self.rho <= 0):
            raise ValueError("costs and capacities must be positive")
        if demand.dimension != self.n:
            raise ValueError("demand dimension must equal the number of stores")
        if np.any(self.b <= self.c):
            warnings.warn("some store has b <= c; shipping to it is not worthwhile", stacklevel=2)
        if np.any(self.h[0] > self.c + self.h[1:]):
            warnings.warn("h0 > c_i + h_i for some store; greedy delivery is not optimal", stacklevel=2)
        if halt not in ("argmin", "argmax"):
            raise ValueError("halt must be 'argmin' or 'argmax'")
        self.halt = halt
        self.demand = demand
        self.decision_set = ConstraintSet(np.zeros(self.n + 1), self.rho)
        self.param_set = self.decision_set
        margin = self.b - self.c
        self.order = np.argsort(-margin, kind="stable")
        self._rank = np.argsort(self.order)
        self.halt_store = int(np.argmin(margin) if halt == "argmin" else np.argmax(margin))

    # -- delivery ----------------------------------------------------------------

    def greedy_delivery(self, y, d) -> DeliveryOutcome:
        y = np.asarray(y, dtype=float)
        d = np.asarray(d, dtype=float)
        y0, ys = y[..., 0], y[..., 1:]
        need = np.maximum(d - ys, 0.0)
        o = np.maximum(ys - d, 0.0)
        need_p = need[..., self.order]
        cum = np.cumsum(need_p, axis=-1)
        avail = np.maximum(y0[..., None] - (cum - need_p), 0.0)
        z_p = np.minimum(need_p, avail)
        s = np.maximum(y0[..., None] - cum, 0.0)
        z = z_p[..., self._rank]
        lost = need - z
        cost = (self.c * z).sum(-1) + self.h[0] * s[..., -1] + (self.h[1:] * o).sum(-1) + (self.b * lost).sum(-1)
        return DeliveryOutcome(s=s, z=z, o=o, l=lost, cost=cost)

    def cost(self, y, d):
        return self.greedy_delivery(y, d).cost

    def dynamics(self, y, d):
        out = self.greedy_delivery(y, d)
        return np.concatenate([out.s[..., -1:], out.o], axis=-1)

    def censor(self, y, d):
        # Store demand is seen before delivery is decided; the estimator only
        # uses which stores end short, which sales data also reveal.
        return np.asarray(d, dtype=float)

    def gradient_estimator(self, w, obs):
        """Right derivative of the delivery cost in ``y``.

        Warehouse: ``h0`` if stock is left over, otherwise ``-(b_j - c_j)``
        for the first short store ``j`` in priority order (``h0`` if no
        store is short). Store ``i``: ``h_i`` if it has enough stock,
        ``-b_i`` if it ends short, and otherwise (fully served by delivery)
        ``c_j - b_j - c_i`` for the next short store ``j`` after ``i`` in
        priority order, or ``h0 - c_i`` if there is none.
        """
        d = np.asarray(obs, dtype=float)
        y = np.asarray(w, dtype=float)
        y = np.broadcast_to(y, d.shape[:-1] + y.shape[-1:]) if d.ndim > y.ndim else y
        out = self.greedy_delivery(y, d)
        n, h0 = self.n, self.h[0]
        ys = y[..., 1:]
        short_p = (out.l > 0)[..., self.order]
        margin_p = (self.b - self.c)[self.order]

        # freed[k]: value of one extra warehouse unit available after store
        # k in priority order has been served.
        freed = np.empty(short_p.shape)
        nxt = np.full(short_p.shape[:-1], h0)
        for k in range(n - 1, -1, -1):
            freed[..., k] = nxt
            nxt = np.where(short_p[..., k], -margin_p[k], nxt)
        g = np.empty(y.shape)
        g[..., 0] = nxt
        freed_s = freed[..., self._rank]
        g[..., 1:] = np.where(
            ys >= d, self.h[1:],
            np.where(out.l > 0, -self.b, freed_s - self.c))
        return g

    def transition_solver(self, x, target):
        x = np.asarray(x, dtype=float)
        target = np.asarray(target, dtype=float)
        y = np.maximum(x, target)
        over = x[..., 0] > target[..., 0]
        i = self.halt_store + 1
        y[..., i] = np.where(over, x[..., i], y[..., i])
        return y

    # -- LP cross-check ------------------------------------------------------------

    def standard_form(self):
        """Matrices ``(H, W, c')`` of the equality-form delivery problem.

        Variables ``z'`` are ``z_1..z_n``, ``z0^(1)..zn^(1)``,
        ``z1^(2)..zn^(2)``, ``z0^(3)``, ``z0^(4)..zn^(4)``, ``z1^(5)..zn^(5)``
        and the rows are::

            y0 - sum z - z0^(3)             = 0
            y0 - sum z - z0^(1) + z0^(4)    = 0
            y_i + z_i - zi^(1) + zi^(4)     = d_i
            y_i + z_i + zi^(2) - zi^(5)     = d_i
        """
        n = self.n
        iz, i1, i2 = 0, n, 2 * n + 1
        i3 = 3 * n + 1
        i4 = i3 + 1
        i5 = i4 + n + 1
        nv = i5 + n
        W = np.zeros((2 * n + 2, nv))
        H = np.zeros((2 * n + 2, n + 1))
        H[0, 0] = H[1, 0] = 1.0
        W[0, iz:iz + n] = -1.0
        W[0, i3] = -1.0
        W[1, iz:iz + n] = -1.0
        W[1, i1] = -1.0
        W[1, i4] = 1.0
        for i in range(n):
            r = 2 + i
            H[r, 1 + i] = 1.0
            W[r, iz + i] = 1.0
            W[r, i1 + 1 + i] = -1.0
            W[r, i4 + 1 + i] = 1.0
            r = 2 + n + i
            H[r, 1 + i] = 1.0
            W[r, iz + i] = 1.0
            W[r, i2 + i] = 1.0
            W[r, i5 + i] = -1.0
        cp = np.zeros(nv)
        cp[iz:iz + n] = self.c
        cp[i1:i1 + n + 1] = self.h
        cp[i2:i2 + n] = self.b
        return H, W, cp

    def lp_oracle(self, y, d):
        """Solve the delivery LP; return ``(cost, pi)`` with ``pi`` a dual optimum.

        ``-H.T @ pi`` is a subgradient of the cost in ``y``.
        """
        y = np.asarray(y, dtype=float)
        d = np.asarray(d, dtype=float)
        H, W, cp = self.standard_form()
        dp = np.concatenate([[0.0, 0.0], d, d])
        res = linprog(cp, A_eq=W, b_eq=dp - H @ y, bounds=(0, None), method="highs")
        if res.status != 0:
            raise RuntimeError(f"delivery LP failed: {res.message}")
        return float(res.fun), np.asarray(res.eqlin.marginals, dtype=float)

    # -- constants ---------------------------------------------------------------

    @property
    def sigma0(self) -> float:
        h0 = self.h[0]
        return float(np.sqrt((h0 + self.b.sum()) ** 2 + np.sum((self.h[1:] + self.b) ** 2)))

    @property
    def waiting_bound(self) -> float:
        return self.n + 6.0 * self.demand.beta0 * float(self.rho.sum())

    @property
    def beta(self) -> float:
        return float((self.n + 4) ** 2 * self.demand.beta0
                     * (self.h[0] + np.sum(self.h[1:] + self.b + self.c)))

    def theory_constants(self) -> TheoryConstants:
        mean = self.demand.mean()
        q_bar = float(self.h @ self.rho + self.b @ mean + self.c @ mean)
        return TheoryConstants(
            beta=self.beta,
            R=self.decision_set.diameter(),
            beta0=self.demand.beta0,
            alpha0=self.demand.alpha0,
            sigma0=self.sigma0,
            G=self.sigma0,
            Q_bar=q_bar,
            M=self.waiting_bound,
        )
