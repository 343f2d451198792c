"""Reference policies: per-period projected SGD and the SAA newsvendor.

Both follow the same feasibility gate as the meta-policy: when the desired
level is below the starting inventory, the application's transition solver
chooses the order. They therefore plug into
:func:`~minibatch_inventory.meta_policy.simulate` unchanged.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

from .apps.base import InventoryApp
from .meta_policy import _Policy


class SgdPolicy(_Policy):
    """Projected SGD with stepsize ``eta / t**power``, updated every period.

    The gradient is evaluated at the level actually implemented, which is
    the only place the censored observation is informative.
    """

    def __init__(self, app: InventoryApp, eta: float, power: float, x1, check_contracts: bool = True):
        super().__init__(app, x1, check_contracts)
        if not eta > 0:
            raise ValueError("stepsize must be positive")
        if power not in (0.5, 1, 1.0):
            raise ValueError("power must be 0.5 or 1")
        self.eta = float(eta)
        self.power = float(power)
        self.t = 1

    def step(self, grad) -> np.ndarray:
        """Apply ``w <- project(w - eta/t^p * grad)`` and advance ``t``."""
        g = np.asarray(grad, dtype=float).reshape(self.w.shape)
        lr = self.eta / self.t ** self.power
        self.w = self.app.param_set.project(self.w - lr * g)
        self.t += 1
        self.n_updates += 1
        return self.target

    def observe(self, y, obs, working):
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        g = self.app.gradient_estimator(self.app.to_param(Y), obs)
        self._check_gradients(g, np.arange(self.rows))
        self.step(g)


def sgd_policy_step(state: SgdPolicy, x, grad):
    """Update with ``grad`` then return ``(y, working)`` for inventory ``x``."""
    state.step(grad)
    return state.decide(x)


def saa_step(history, q: float, initial: float = 0.0) -> float:
    """The ``ceil(q m)``-th order statistic of ``history`` (1-based).

    Returns ``initial`` for an empty history.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError("critical ratio must lie in (0, 1]")
    h = np.asarray(history, dtype=float).ravel()
    m = h.size
    if m == 0:
        return float(initial)
    k = _order_index(q, m)
    return float(np.partition(h, k - 1)[k - 1])


def _order_index(q: float, m: int) -> int:
    return min(m, max(1, math.ceil(q * m - 1e-12 * m)))


class SaaPolicy(_Policy):
    """Empirical-quantile policy for separable newsvendor-type systems.

    Works with :class:`~minibatch_inventory.apps.MultiProductApp`: product
    ``i`` targets the ``ceil(q_i m)``-th order statistic of its past
    (uncensored) demands, ``q_i = b_i / (b_i + h_i)``, projected onto the
    feasible set.
    """

    needs_demand = True

    def __init__(self, app: InventoryApp, x1, initial=None, check_contracts: bool = True):
        super().__init__(app, x1, check_contracts)
        self.q = app.b / (app.b + app.h)
        if initial is not None:
            init = np.broadcast_to(np.asarray(initial, dtype=float), self.w.shape)
            self.w = app.param_set.project(init.copy())
        self.history = [[[] for _ in range(app.n)] for _ in range(self.rows)]

    @property
    def m(self) -> int:
        return len(self.history[0][0])

    def observe(self, y, demand, working):
        D = np.atleast_2d(np.asarray(demand, dtype=float))
        m = self.m + 1
        raw = np.empty_like(self.w)
        for r in range(self.rows):
            for i, lst in enumerate(self.history[r]):
                bisect.insort(lst, float(D[r, i]))
                raw[r, i] = lst[_order_index(self.q[i], m) - 1]
        self.w = self.app.param_set.project(raw)
        self.n_updates += 1
