"""Common interface of the inventory applications.

An application bundles the per-period cost, the inventory dynamics, the
censoring rule, a gradient estimator and a transition solver. All methods
are vectorized: decision arrays have shape ``(..., n)`` and demand arrays
``(..., demand_dim)`` with matching leading axes, so a whole batch of
replications can be advanced with one call.

Two coordinate systems are involved. The *decision* ``y`` is the physical
order-up-to vector. The *parameter* ``w`` is what the learning policy
optimizes; it equals ``y`` except for the serial system, where it is the
vector of prefix sums. :meth:`to_decision` and :meth:`to_param` convert.
"""

from __future__ import annotations

import numpy as np

from ..core import ConstraintSet, DemandModel


class InventoryApp:
    """Base class; subclasses fill in the model-specific pieces."""

    name = "abstract"
    n: int
    demand: DemandModel
    decision_set: ConstraintSet
    param_set: ConstraintSet

    # -- coordinates ---------------------------------------------------------

    def to_decision(self, w):
        return np.asarray(w, dtype=float)

    def to_param(self, y):
        return np.asarray(y, dtype=float)

    @property
    def demand_dim(self) -> int:
        return self.demand.dimension

    # -- model -------------------------------------------------------------------

    def cost(self, y, d):  # pragma: no cover - interface
        raise NotImplementedError

    def dynamics(self, y, d):  # pragma: no cover - interface
        raise NotImplementedError

    def censor(self, y, d):  # pragma: no cover - interface
        raise NotImplementedError

    def gradient_estimator(self, w, obs):  # pragma: no cover - interface
        """Stochastic gradient in parameter coordinates at ``w``.

        ``obs`` is the output of :meth:`censor` at ``y = to_decision(w)``.
        """
        raise NotImplementedError

    def transition_solver(self, x, target):  # pragma: no cover - interface
        """Feasible order-up-to level ``y >= x`` steering toward ``target``."""
        raise NotImplementedError

    def sample_gradient(self, w, d):
        """Estimator fed with the observation generated by demand ``d``."""
        y = self.to_decision(w)
        return self.gradient_estimator(w, self.censor(y, d))

    # -- constants ---------------------------------------------------------------

    @property
    def sigma0(self) -> float:  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def waiting_bound(self) -> float:  # pragma: no cover - interface
        """Constant M bounding the expected length of a waiting stretch."""
        raise NotImplementedError

    def theory_constants(self):  # pragma: no cover - interface
        raise NotImplementedError

    # -- SAA objective -----------------------------------------------------------

    def saa(self, samples):
        """Return a callable ``f(w) -> (value, gradient)`` for the sample average.

        The default implementation averages :meth:`cost` and
        :meth:`sample_gradient` over the rows of ``samples`` (shape
        ``(N, demand_dim)``). Subclasses may override with faster versions.
        """
        samples = np.asarray(samples, dtype=float)

        def f(w):
            w = np.asarray(w, dtype=float)
            y = self.to_decision(w)
            val = float(np.mean(self.cost(y, samples)))
            g = self.sample_gradient(np.broadcast_to(w, (samples.shape[0],) + w.shape), samples)
            return val, g.mean(axis=0)

        return f

    def initial_state(self) -> np.ndarray:
        """Default initial inventory: the lower corner of the decision set."""
        return self.decision_set.lower.copy()
