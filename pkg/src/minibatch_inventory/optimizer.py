"""Batch-size schedules and the projected minibatch SGD update.

Three schedules are provided:

``fixed_time(T)``
    constant batches of size ``ceil(sqrt(T))``, for a known horizon;
``any_time_linear(K)``
    batch ``tau`` has ``K * tau`` samples, no horizon needed;
``exponential(eta, alpha)``
    batch ``tau`` has ``ceil(varsigma**(tau - 1))`` samples with
    ``gamma = 1 - eta*alpha + 2*eta**2`` and ``varsigma = 1/gamma``. The
    base can also be given directly with :meth:`BatchSchedule.exponential_base`.

The module does not know anything about inventory; :class:`OptimizerState`
and :func:`minibatch_step` work for any objective over a
:class:`~minibatch_inventory.core.ConstraintSet`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import ConstraintSet

# guards ceil() against representation error, e.g. 2.0000000000000004
_CEIL_RTOL = 1e-12


def _ceil(v: float) -> int:
    return max(1, math.ceil(v * (1.0 - _CEIL_RTOL)))


@dataclass(frozen=True)
class BatchSchedule:
    """Rule ``tau -> n_tau``.

    Use the constructors :meth:`fixed_time`, :meth:`any_time_linear`,
    :meth:`exponential` or :meth:`exponential_base` rather than the raw
    initializer.
    """

    kind: str
    T: Optional[int] = None
    K: Optional[int] = None
    eta: Optional[float] = None
    alpha: Optional[float] = None
    base: Optional[float] = None

    @classmethod
    def fixed_time(cls, T: int) -> "BatchSchedule":
        if int(T) < 1:
            raise ValueError("fixed_time horizon must be >= 1")
        return cls("fixed_time", T=int(T))

    @classmethod
    def any_time_linear(cls, K: int = 1) -> "BatchSchedule":
        if int(K) < 1:
            raise ValueError("any_time_linear slope K must be >= 1")
        return cls("any_time_linear", K=int(K))

    @classmethod
    def exponential(cls, eta: float, alpha: float) -> "BatchSchedule":
        gamma = 1.0 - eta * alpha + 2.0 * eta ** 2
        if not 0.0 < gamma < 1.0:
            raise ValueError(
                f"exponential schedule needs gamma = 1 - eta*alpha + 2*eta^2 in (0, 1), got {gamma:.6g}")
        return cls("exponential", eta=float(eta), alpha=float(alpha), base=1.0 / gamma)

    @classmethod
    def exponential_base(cls, base: float) -> "BatchSchedule":
        """Exponential schedule with the growth factor given directly."""
        if not base > 1.0:
            raise ValueError("exponential base must exceed 1")
        return cls("exponential", base=float(base))

    @classmethod
    def from_dict(cls, spec: dict, horizon: Optional[int] = None) -> "BatchSchedule":
        """Build from a config mapping such as ``{"kind": "exponential", "base": 2}``.

        A ``fixed_time`` schedule without an explicit ``T`` uses ``horizon``.
        """
        kind = spec.get("kind")
        if kind == "fixed_time":
            return cls.fixed_time(spec.get("T", horizon))
        if kind == "any_time_linear":
            return cls.any_time_linear(spec.get("K", 1))
        if kind == "exponential":
            if "base" in spec:
                return cls.exponential_base(spec["base"])
            return cls.exponential(spec["eta"], spec["alpha"])
        raise ValueError(f"unknown schedule kind {kind!r}")

    @property
    def gamma(self) -> Optional[float]:
        return None if self.base is None else 1.0 / self.base

    @property
    def varsigma(self) -> Optional[float]:
        return self.base

    def batch_size(self, tau: int) -> int:
        if tau < 1:
            raise ValueError("batch index starts at 1")
        if self.kind == "fixed_time":
            return math.isqrt(self.T - 1) + 1
        if self.kind == "any_time_linear":
            return self.K * tau
        return _ceil(self.base ** (tau - 1))

    def sizes(self, count: int) -> np.ndarray:
        """Array ``[n_1, ..., n_count]``."""
        return np.array([self.batch_size(t) for t in range(1, count + 1)], dtype=np.int64)

    def tau_max(self, T: int) -> int:
        """Smallest ``k`` with ``n_1 + ... + n_k >= T``."""
        if T < 1:
            raise ValueError("T must be >= 1")
        total, k = 0, 0
        while total < T:
            k += 1
            total += self.batch_size(k)
        return k


def batch_size(schedule: BatchSchedule, tau: int) -> int:
    return schedule.batch_size(tau)


def tau_max(schedule: BatchSchedule, T: int) -> int:
    return schedule.tau_max(T)


def switch_budget(schedule: BatchSchedule, T: int) -> float:
    """Analytic upper bound on ``tau_max``.

    ``sqrt(T) + 1`` for the fixed-time schedule and
    ``ln((varsigma - 1) T + 1) / ln(varsigma) + 2`` for the exponential one;
    the linear schedule satisfies ``K tau (tau + 1)/2 >= T`` so
    ``sqrt(2T/K) + 1`` bounds it.
    """
    if schedule.kind == "fixed_time":
        return math.sqrt(T) + 1
    if schedule.kind == "any_time_linear":
        return math.sqrt(2 * T / schedule.K) + 1
    s = schedule.base
    return math.log((s - 1) * T + 1) / math.log(s) + 2


@dataclass
class OptimizerState:
    """Iterate of projected minibatch SGD.

    Attributes
    ----------
    w : ndarray
        Current iterate, always inside ``cset``.
    tau : int
        Index of the batch being collected.
    eta : float
        Constant stepsize.
    cset : ConstraintSet
    schedule : BatchSchedule
    """

    w: np.ndarray
    eta: float
    cset: ConstraintSet
    schedule: BatchSchedule
    tau: int = 1

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).copy()
        if not self.cset.contains(self.w, 1e-9):
            raise ValueError("initial iterate outside the constraint set")

    @property
    def batch_size(self) -> int:
        return self.schedule.batch_size(self.tau)


def minibatch_step(state: OptimizerState, gradients) -> OptimizerState:
    """One projected minibatch update.

    ``w' = project(w - eta / n_tau * sum(gradients))`` and ``tau' = tau + 1``.
    Returns a new state; the input is left untouched.
    """
    g = np.atleast_2d(np.asarray(gradients, dtype=float))
    if g.shape[0] == 0:
        raise ValueError("empty gradient batch")
    n_tau = state.batch_size
    if g.shape[0] != n_tau:
        raise ValueError(f"batch {state.tau} needs {n_tau} gradients, got {g.shape[0]}")
    w = state.cset.project(state.w - state.eta / n_tau * g.sum(axis=0))
    return replace(state, w=w, tau=state.tau + 1)


def run_optimizer(state: OptimizerState, grad_oracle, T: int):
    """Drive :func:`minibatch_step` for ``T`` gradient evaluations.

    Parameters
    ----------
    grad_oracle : callable
        ``grad_oracle(w, k)`` returns ``k`` stochastic gradients at ``w`` as
        a ``(k, n)`` array.
    T : int
        Total number of gradient evaluations (periods).

    Returns
    -------
    iterates : list of ndarray
        Iterate in force for each batch (``tau_max(T)`` entries).
    counts : list of int
        Number of periods spent at each iterate; they sum to ``T``.
    state : OptimizerState
        Final state. A partial final batch does not trigger an update.
    """
    iterates, counts = [], []
    left = T
    while left > 0:
        n_tau = state.batch_size
        k = min(n_tau, left)
        iterates.append(state.w.copy())
        counts.append(k)
        g = grad_oracle(state.w, k)
        left -= k
        if k == n_tau:
            state = minibatch_step(state, g)
    return iterates, counts, state


# ---------------------------------------------------------------------------
# Theory constants
# ---------------------------------------------------------------------------


@dataclass
class TheoryConstants:
    """Constants entering the regret bounds.

    Only ``beta`` and ``R`` are mandatory; the others are ``None`` when not
    known for an instance. ``kappa`` is derived as ``max(R**2, sigma**2)``.
    """

    beta: float
    R: float
    alpha: Optional[float] = None
    beta0: Optional[float] = None
    alpha0: Optional[float] = None
    sigma0: Optional[float] = None
    sigma: Optional[float] = None
    G: Optional[float] = None
    Q_bar: Optional[float] = None
    M: Optional[float] = None
    K: Optional[float] = None
    gamma: Optional[float] = None
    varsigma: Optional[float] = None
    kappa: float = field(init=False)

    def __post_init__(self):
        if self.sigma is None and self.sigma0 is not None:
            self.sigma = self.sigma0
        for name in ("beta", "R", "alpha", "beta0", "alpha0", "sigma0", "sigma", "G",
                     "Q_bar", "M", "K", "gamma", "varsigma"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        self.kappa = max(self.R ** 2, (self.sigma or 0.0) ** 2)

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def stepsize_warnings(eta: float, schedule: BatchSchedule,
                      constants: Optional[TheoryConstants]) -> list:
    """Admissibility messages for a constant stepsize.

    The fixed-time and linear schedules want ``eta < 1/beta``; the
    exponential schedule wants ``eta <= min(alpha/2, 1/alpha, 1/(2 beta))``.
    Returns an empty list when everything checks out and a note when a
    needed constant is unknown.
    """
    msgs = []
    if not eta > 0:
        msgs.append(f"stepsize eta={eta} must be positive")
        return msgs
    if constants is None:
        return ["theory constants unknown; stepsize admissibility not checked"]
    beta, alpha = constants.beta, constants.alpha
    if schedule.kind in ("fixed_time", "any_time_linear"):
        if beta is not None and beta > 0 and not eta < 1.0 / beta:
            msgs.append(f"eta={eta:.6g} violates eta < 1/beta = {1.0 / beta:.6g}")
    else:
        if alpha is None or alpha <= 0:
            msgs.append("strong convexity alpha unknown; exponential stepsize condition not checked")
        else:
            bound = min(alpha / 2.0, 1.0 / alpha, 1.0 / (2.0 * beta) if beta > 0 else math.inf)
            if eta > bound:
                msgs.append(f"eta={eta:.6g} violates eta <= min(alpha/2, 1/alpha, 1/(2 beta)) = {bound:.6g}")
    return msgs


def check_stepsize(eta, schedule, constants) -> bool:
    """Emit :class:`UserWarning` for each admissibility problem; True if none."""
    msgs = stepsize_warnings(eta, schedule, constants)
    for m in msgs:
        warnings.warn(m, stacklevel=2)
    return not msgs


ETA_GRID = (0.01, 0.03, 0.1, 0.3, 1, 3, 10, 30, 100)
BASE_GRID = (1.05, 1.15, 1.25, 1.5, 2)
