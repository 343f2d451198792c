"""Low-switching learning meta-policy and the episode simulator.

The policy keeps a target ``w``. In each period it checks whether the
starting inventory ``x`` is below the target:

* *working* period: order up to ``w`` and record a gradient estimate;
* *waiting* period: let the application's transition solver pick a
  feasible level and record nothing.

After ``n_tau`` working periods the recorded gradients are averaged into one
projected SGD step and the next batch starts. Partial batches at the end of
the horizon never trigger an update.

:class:`MetaPolicy` advances any number of independent replications at once:
pass ``x1`` of shape ``(R, n)`` and every method works row by row. With a
1-D ``x1`` the methods accept and return unbatched arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .apps.base import InventoryApp
from .core import RandomStream
from .optimizer import BatchSchedule

FEAS_TOL = 1e-9
CONTRACT_TOL = 1e-6


class ContractViolation(RuntimeError):
    """A transition solver or gradient estimator broke its contract.

    ``rows`` lists the offending replications within the batch.
    """

    def __init__(self, message: str, rows=()):
        super().__init__(message)
        self.rows = list(rows)


class _Policy:
    """Shared plumbing: batching, feasibility gate and counters."""

    needs_demand = False

    def __init__(self, app: InventoryApp, x1, check_contracts: bool = True):
        x1 = np.asarray(x1, dtype=float)
        self.app = app
        self.single = x1.ndim == 1
        X = np.atleast_2d(x1)
        viol = app.decision_set.violation(X)
        if np.any(viol > FEAS_TOL):
            raise ValueError("initial inventory must lie in the feasible set")
        self.x1 = X.copy()
        self.rows = X.shape[0]
        self.w = app.to_param(X).astype(float).copy()
        self.check_contracts = check_contracts
        self.n_working = np.zeros(self.rows, dtype=np.int64)
        self.n_waiting = np.zeros(self.rows, dtype=np.int64)
        self.n_updates = np.zeros(self.rows, dtype=np.int64)

    @property
    def target(self) -> np.ndarray:
        t = self.app.to_decision(self.w)
        return t[0] if self.single else t

    def _gate(self, x):
        X = np.atleast_2d(np.asarray(x, dtype=float))
        target = self.app.to_decision(self.w)
        working = np.all(X <= target + FEAS_TOL, axis=-1)
        y = target.copy()
        if not working.all():
            rows = ~working
            y[rows] = self.app.transition_solver(X[rows], target[rows])
        if self.check_contracts:
            bad = (np.any(y < X - CONTRACT_TOL, axis=-1)
                   | (self.app.decision_set.violation(y) > CONTRACT_TOL))
            if bad.any():
                rows = np.flatnonzero(bad)
                raise ContractViolation(
                    f"transition solver returned an infeasible level for rows {rows.tolist()}", rows)
        self.n_working += working
        self.n_waiting += ~working
        if self.single:
            return y[0], bool(working[0])
        return y, working

    def _check_gradients(self, g, rows):
        if not self.check_contracts:
            return
        norms = np.sqrt((g ** 2).sum(axis=-1))
        bad = norms > self.app.sigma0 * (1 + 1e-12)
        if bad.any():
            raise ContractViolation("gradient estimate exceeds sigma0", rows[bad])

    def decide(self, x):
        """Return ``(y, working)`` for starting inventory ``x``."""
        return self._gate(x)


class MetaPolicy(_Policy):
    """Minibatch meta-policy.

    Parameters
    ----------
    app : InventoryApp
    schedule : BatchSchedule
    eta : float
        Constant stepsize.
    x1 : array_like
        Initial inventory, ``(n,)`` or ``(R, n)``; it is also the first
        target.
    check_contracts : bool
        Verify transition-solver outputs and gradient norms every period.

    Notes
    -----
    The gradient buffer is kept as a running sum plus the count ``l``; the
    update only needs their ratio with the batch size.
    """

    def __init__(self, app: InventoryApp, schedule: BatchSchedule, eta: float, x1,
                 check_contracts: bool = True):
        super().__init__(app, x1, check_contracts)
        if not eta > 0:
            raise ValueError("stepsize must be positive")
        self.schedule = schedule
        self.eta = float(eta)
        self.l = np.zeros(self.rows, dtype=np.int64)
        self.tau = np.ones(self.rows, dtype=np.int64)
        self.grad_sum = np.zeros_like(self.w)
        self._sizes = schedule.sizes(32)

    def batch_sizes(self, tau) -> np.ndarray:
        tau = np.asarray(tau)
        top = int(tau.max()) if tau.size else 0
        if top > self._sizes.shape[0]:
            self._sizes = self.schedule.sizes(max(top, 2 * self._sizes.shape[0]))
        return self._sizes[tau - 1]

    def observe(self, y, obs, working):
        """Record the period's observation; update ``w`` when a batch fills.

        ``obs`` must come from :meth:`InventoryApp.censor` at ``y``. Rows in
        waiting periods are ignored.
        """
        working = np.atleast_1d(working)
        rows = np.flatnonzero(working)
        if rows.size == 0:
            return
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        g = self.app.gradient_estimator(self.w[rows], obs[rows])
        self._check_gradients(g, rows)
        self.grad_sum[rows] += g
        self.l[rows] += 1
        n_tau = self.batch_sizes(self.tau[rows])
        full = rows[self.l[rows] == n_tau]
        if full.size:
            n_full = self.batch_sizes(self.tau[full])[:, None]
            step = self.w[full] - self.eta / n_full * self.grad_sum[full]
            self.w[full] = self.app.param_set.project(step)
            self.grad_sum[full] = 0.0
            self.l[full] = 0
            self.tau[full] += 1
            self.n_updates[full] += 1


def init(app: InventoryApp, x1, schedule: BatchSchedule, eta: float) -> MetaPolicy:
    """Fresh meta-policy state with ``w = x1``."""
    return MetaPolicy(app, schedule, eta, x1)


def decide(state: MetaPolicy, x):
    return state.decide(x)


def observe(state: MetaPolicy, y, obs, working):
    state.observe(y, obs, working)
    return state


@dataclass
class Trajectory:
    """Outcome of simulating ``R`` replications for ``T`` periods.

    ``cost`` and ``working`` have shape ``(R, T)``. ``x``, ``y`` and ``d``
    (shape ``(R, T, .)``) are filled only when recording was requested.
    ``n_targets`` counts the target levels that were in force during the
    horizon (one plus the updates made before the last period ended).
    """

    cost: np.ndarray
    working: np.ndarray
    n_targets: np.ndarray
    final_w: np.ndarray
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None

    @property
    def n_waiting(self) -> np.ndarray:
        return (~self.working).sum(axis=1)

    @property
    def total_cost(self) -> np.ndarray:
        return self.cost.sum(axis=1)


def simulate(app: InventoryApp, policy, demands, record: bool = False) -> Trajectory:
    """Run ``policy`` against pre-drawn demands.

    Parameters
    ----------
    demands : ndarray
        Shape ``(R, T, demand_dim)``; ``R`` must match the policy's rows.
    record : bool
        Keep the full state trajectories.

    The starting inventory is the policy's ``x1``. Each period follows the
    same sequence: decide, demand arrives, cost is charged, leftovers carry
    over, the policy observes.
    """
    demands = np.asarray(demands, dtype=float)
    R, T = demands.shape[:2]
    if R != policy.rows:
        raise ValueError(f"policy tracks {policy.rows} replications, demands have {R}")
    x = policy.x1.copy()
    n = x.shape[1]
    costs = np.empty((R, T))
    working_hist = np.empty((R, T), dtype=bool)
    xs = ys = None
    if record:
        xs = np.empty((R, T, n))
        ys = np.empty((R, T, n))
    single = policy.single
    policy.single = False
    try:
        updates_before_last = policy.n_updates.copy()
        for t in range(T):
            d = demands[:, t]
            y, working = policy.decide(x)
            costs[:, t] = app.cost(y, d)
            obs = d if policy.needs_demand else app.censor(y, d)
            x_next = app.dynamics(y, d)
            if t == T - 1:
                updates_before_last = policy.n_updates.copy()
            policy.observe(y, obs, working)
            working_hist[:, t] = working
            if record:
                xs[:, t] = x
                ys[:, t] = y
            x = x_next
    finally:
        policy.single = single
    return Trajectory(
        cost=costs,
        working=working_hist,
        n_targets=1 + updates_before_last,
        final_w=policy.w.copy(),
        x=xs,
        y=ys,
        d=demands if record else None,
    )


def run_episode(app: InventoryApp, policy, T: int, stream: RandomStream) -> Trajectory:
    """Simulate one replication of ``T`` periods with demand from ``stream``.

    ``policy`` must be a fresh single-replication policy (built from a 1-D
    ``x1``). The returned trajectory has leading axis of length 1.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    demands = app.demand.sample_path(stream, T)[None]
    return simulate(app, policy, demands, record=True)
