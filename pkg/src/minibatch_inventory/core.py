"""Demand models, random streams and polyhedral constraint sets.

Everything else in the package builds on the three objects defined here:

* :class:`DemandModel` describes a (possibly multivariate, possibly
  correlated) nonnegative demand distribution together with the density
  bounds used by the theory constants.
* :class:`RandomStream` is a reproducible source of randomness keyed by
  ``(seed, replication_index)``.
* :class:`ConstraintSet` is a box intersected with linear halfspaces and
  supports Euclidean projection through Dykstra's algorithm.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special, stats

PROJ_TOL = 1e-9
PROJ_MAX_ITER = 100_000
# exact fallback for stalled Dykstra rows: slack that makes a constraint a
# candidate, and a cap on the number of active sets tried
POLISH_SLACK = 1e-6
POLISH_MAX_SUBSETS = 20_000

FAMILIES = ("uniform", "normal", "poisson", "geometric", "gamma")
_ALIASES = {
    "uniform": "uniform",
    "normal": "normal",
    "clipped-normal": "normal",
    "clipped_normal": "normal",
    "poisson": "poisson",
    "geometric": "geometric",
    "gamma": "gamma",
    "clipped-gamma": "gamma",
    "clipped_gamma": "gamma",
}


class ProjectionError(RuntimeError):
    """Raised when Dykstra's iteration does not converge."""


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


class RandomStream:
    """Reproducible random stream for one replication.

    Parameters
    ----------
    seed : int
        Experiment-level seed (any nonnegative integer up to 64 bits).
    replication_index : int
        Index of the replication. Streams with different indices are
        statistically independent because they come from distinct
        children of one :class:`numpy.random.SeedSequence`.
    """

    def __init__(self, seed: int, replication_index: int = 0):
        if seed < 0 or replication_index < 0:
            raise ValueError("seed and replication_index must be nonnegative")
        self.seed = int(seed)
        self.replication_index = int(replication_index)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.replication_index,))
        self.rng = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, replication_index={self.replication_index})"


# ---------------------------------------------------------------------------
# Demand models
# ---------------------------------------------------------------------------


def _as_vec(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or have length {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DemandModel:
    """A nonnegative demand distribution with density bounds.

    Parameters
    ----------
    family : str
        One of ``uniform`` (params ``a``, ``b``), ``normal`` (``mu``,
        ``sigma``; negative draws are set to 0), ``poisson`` (``lam``),
        ``geometric`` (``p``; support ``{1, 2, ...}``) or ``gamma``
        (``shape``, ``rate``; included for completeness, draws are already
        nonnegative). ``clipped-normal`` and ``clipped-gamma`` are accepted
        as aliases.
    params : dict
        Family parameters. Each may be a scalar or a length-``dimension``
        sequence for per-component marginals.
    dimension : int
        Number of demand components.
    correlation : array_like, optional
        ``dimension x dimension`` correlation matrix of a Gaussian copula
        coupling the marginals.
    density_upper : float, optional
        Bound beta0 on the marginal densities. Computed from the family when
        omitted. For discrete families there is no density; the default is
        the largest probability mass, which only serves bookkeeping.
    density_lower : float, optional
        Lower bound alpha0 on the density over the support. Computed for the
        uniform family when omitted, otherwise left unset.
    """

    family: str
    params: dict
    dimension: int = 1
    correlation: Optional[np.ndarray] = None
    density_upper: Optional[float] = None
    density_lower: Optional[float] = None
    _p: dict = field(init=False, repr=False, compare=False)
    _chol: Optional[np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        fam = _ALIASES.get(str(self.family).lower())
        if fam is None:
            raise ValueError(f"unknown demand family {self.family!r}")
        object.__setattr__(self, "family", fam)
        n = int(self.dimension)
        if n < 1:
            raise ValueError("dimension must be positive")
        object.__setattr__(self, "dimension", n)
        p = self._validate(fam, dict(self.params), n)
        object.__setattr__(self, "_p", p)

        chol = None
        if self.correlation is not None:
            corr = np.asarray(self.correlation, dtype=float)
            if corr.shape != (n, n):
                raise ValueError(f"correlation must be {n}x{n}")
            if not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
                raise ValueError("correlation must be symmetric with unit diagonal")
            try:
                chol = np.linalg.cholesky(corr)
            except np.linalg.LinAlgError as exc:
                raise ValueError("correlation must be positive definite") from exc
            object.__setattr__(self, "correlation", corr)
        object.__setattr__(self, "_chol", chol)

        if self.density_upper is None:
            object.__setattr__(self, "density_upper", self._default_beta0())
        elif not self.density_upper > 0:
            raise ValueError("density_upper must be positive")
        if self.density_lower is None and fam == "uniform":
            object.__setattr__(self, "density_lower", float(np.min(1.0 / (p["b"] - p["a"]))))
        if self.density_lower is not None and self.density_lower < 0:
            raise ValueError("density_lower must be nonnegative")

    @staticmethod
    def _validate(fam: str, params: dict, n: int) -> dict:
        def need(*names):
            missing = [k for k in names if k not in params]
            if missing:
                raise ValueError(f"{fam} demand needs parameters {names}, missing {missing}")
            extra = set(params) - set(names)
            if extra:
                raise ValueError(f"unexpected parameters for {fam}: {sorted(extra)}")
            return {k: _as_vec(params[k], n, k) for k in names}

        if fam == "uniform":
            p = need("a", "b")
            if np.any(p["a"] < 0) or np.any(p["b"] <= p["a"]):
                raise ValueError("uniform demand needs 0 <= a < b")
        elif fam == "normal":
            p = need("mu", "sigma")
            if np.any(p["sigma"] <= 0):
                raise ValueError("normal demand needs sigma > 0")
            if np.any(stats.norm.sf(0.0, p["mu"], p["sigma"]) <= 0):
                raise ValueError("normal demand must put positive mass above 0")
        elif fam == "poisson":
            p = need("lam")
            if np.any(p["lam"] <= 0):
                raise ValueError("poisson demand needs lam > 0")
        elif fam == "geometric":
            p = need("p")
            if np.any(p["p"] <= 0) or np.any(p["p"] > 1):
                raise ValueError("geometric demand needs p in (0, 1]")
        else:
            p = need("shape", "rate")
            if np.any(p["shape"] <= 0) or np.any(p["rate"] <= 0):
                raise ValueError("gamma demand needs shape > 0 and rate > 0")
        return p

    def _default_beta0(self) -> float:
        p, fam = self._p, self.family
        if fam == "uniform":
            return float(np.max(1.0 / (p["b"] - p["a"])))
        if fam == "normal":
            return float(np.max(1.0 / (p["sigma"] * math.sqrt(2 * math.pi))))
        if fam == "gamma":
            k, r = p["shape"], p["rate"]
            if np.any(k < 1):
                return math.inf
            mode = (k - 1) / r
            return float(np.max(stats.gamma.pdf(mode, k, scale=1 / r)))
        if fam == "poisson":
            lam = p["lam"]
            return float(np.max(stats.poisson.pmf(np.floor(lam), lam)))
        return float(np.max(p["p"]))

    @property
    def is_discrete(self) -> bool:
        return self.family in ("poisson", "geometric")

    @property
    def beta0(self) -> float:
        return float(self.density_upper)

    @property
    def alpha0(self) -> Optional[float]:
        return None if self.density_lower is None else float(self.density_lower)

    def marginal(self, i: int):
        """Frozen scipy distribution of component ``i`` before clipping."""
        p, fam = self._p, self.family
        if fam == "uniform":
            return stats.uniform(loc=p["a"][i], scale=p["b"][i] - p["a"][i])
        if fam == "normal":
            return stats.norm(loc=p["mu"][i], scale=p["sigma"][i])
        if fam == "poisson":
            return stats.poisson(p["lam"][i])
        if fam == "geometric":
            return stats.geom(p["p"][i])
        return stats.gamma(p["shape"][i], scale=1.0 / p["rate"][i])

    def mean(self) -> np.ndarray:
        """Mean of the clipped demand, per component."""
        p, fam = self._p, self.family
        if fam == "normal":
            mu, s = p["mu"], p["sigma"]
            z = mu / s
            return mu * special.ndtr(z) + s * stats.norm.pdf(z)
        return np.array([self.marginal(i).mean() for i in range(self.dimension)])

    def cdf(self, x, i: int = 0):
        """CDF of the clipped component ``i``."""
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, self.marginal(i).cdf(x))

    def ppf(self, q, i: int = 0):
        """Generalized inverse CDF of the clipped component ``i``."""
        return np.maximum(self.marginal(i).ppf(q), 0.0)

    def partial_expectations(self, y, i: int = 0):
        """Return ``(E(y - D)^+, E(D - y)^+)`` for component ``i``.

        Closed forms are used for the uniform and normal families; the
        discrete and gamma families go through scipy's expectation helpers.
        """
        y = np.asarray(y, dtype=float)
        p, fam = self._p, self.family
        if fam == "uniform":
            a, b = p["a"][i], p["b"][i]
            yc = np.clip(y, a, b)
            over = np.where(y <= a, 0.0, (yc - a) ** 2 / (2 * (b - a)) + np.maximum(y - b, 0.0))
            under = np.where(y >= b, 0.0, (b - yc) ** 2 / (2 * (b - a)) + np.maximum(a - y, 0.0))
            return over, under
        if fam == "normal":
            mu, s = p["mu"][i], p["sigma"][i]
            m = float(self.mean()[i])
            yy = np.maximum(y, 0.0)
            z = (yy - mu) / s
            # E(D - y)^+ for clipped D with y >= 0 equals the unclipped value.
            under = s * (stats.norm.pdf(z) + z * special.ndtr(z)) - s * z
            under = np.where(y < 0, m - y, under)
            over = y - m + under
            return over, under
        m = float(self.mean()[i])
        dist = self.marginal(i)
        ys = np.atleast_1d(y)
        under = np.array([dist.expect(lambda t, v=v: np.maximum(t - v, 0.0)) for v in ys.ravel()])
        under = under.reshape(ys.shape)
        if np.ndim(y) == 0:
            under = under.item()
        return y - m + under, under

    # -- sampling ----------------------------------------------------------

    def sample(self, stream: RandomStream) -> np.ndarray:
        """Draw one demand vector of length ``dimension``."""
        return self.sample_path(stream, 1)[0]

    def sample_path(self, stream: RandomStream, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. demand vectors, shape ``(size, dimension)``."""
        rng = stream.rng if isinstance(stream, RandomStream) else stream
        n, p, fam = self.dimension, self._p, self.family
        size = int(size)
        if self._chol is not None:
            z = rng.standard_normal((size, n)) @ self._chol.T
            u = special.ndtr(z)
            out = np.empty((size, n))
            for i in range(n):
                out[:, i] = self.marginal(i).ppf(u[:, i])
            return np.maximum(out, 0.0)
        if fam == "uniform":
            out = p["a"] + (p["b"] - p["a"]) * rng.random((size, n))
        elif fam == "normal":
            out = p["mu"] + p["sigma"] * rng.standard_normal((size, n))
        elif fam == "poisson":
            out = rng.poisson(p["lam"], (size, n)).astype(float)
        elif fam == "geometric":
            out = rng.geometric(p["p"], (size, n)).astype(float)
        else:
            out = rng.gamma(p["shape"], 1.0 / p["rate"], (size, n))
        return np.maximum(out, 0.0)

    @classmethod
    def from_dict(cls, spec: dict) -> "DemandModel":
        """Build a model from a plain mapping (as found in config files)."""
        spec = dict(spec)
        family = spec.pop("family")
        dimension = spec.pop("dimension", 1)
        correlation = spec.pop("correlation", None)
        beta0 = spec.pop("beta0", spec.pop("density_upper", None))
        alpha0 = spec.pop("alpha0", spec.pop("density_lower", None))
        params = spec.pop("params", None)
        if params is None:
            params, spec = spec, {}
        if spec:
            raise ValueError(f"unexpected demand keys: {sorted(spec)}")
        if correlation is not None:
            correlation = np.asarray(correlation, dtype=float)
        return cls(family, params, dimension, correlation, beta0, alpha0)


# ---------------------------------------------------------------------------
# Constraint sets
# ---------------------------------------------------------------------------


class ConstraintSet:
    """Box ``lower <= y <= upper`` intersected with halfspaces ``A y <= rho``.

    Parameters
    ----------
    lower : array_like
        Lower bounds (finite).
    upper : array_like, optional
        Upper bounds; ``inf`` entries mean no box bound on that coordinate.
    A, rho : array_like, optional
        Halfspace data, ``A`` of shape ``(m, n)``.
    tol, max_iter : float, int
        Dykstra stopping tolerance and iteration cap.

    Notes
    -----
    Halfspace coefficients are expected to be nonnegative, which is what
    makes :meth:`diameter` computable from the halfspaces alone. Rows with
    negative entries are accepted only when every coordinate has a finite
    box bound, so the set is still certifiably bounded.
    """

    def __init__(self, lower, upper=None, A=None, rho=None, *, tol: float = PROJ_TOL,
                 max_iter: int = PROJ_MAX_ITER):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        n = lower.shape[0]
        if upper is None:
            upper = np.full(n, np.inf)
        upper = _as_vec(upper, n, "upper")
        if A is None:
            A = np.zeros((0, n))
            rho = np.zeros(0)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if A.shape[1] != n or A.shape[0] != rho.shape[0]:
            raise ValueError(f"A must be (m, {n}) and rho length m")
        if not np.all(np.isfinite(lower)):
            raise ValueError("lower bounds must be finite")
        if np.any(upper < lower):
            raise ValueError("upper bound below lower bound")
        norms = np.einsum("ij,ij->i", A, A)
        if np.any(norms == 0):
            raise ValueError("halfspace with zero normal")
        if np.any(A < 0) and not np.all(np.isfinite(upper)):
            raise ValueError("halfspaces with negative coefficients need finite box bounds")
        self.n = n
        self.lower = lower
        self.upper = upper
        self.A = A
        self.rho = rho
        self._norms = norms
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        if not self.contains(lower, 1e-12):
            raise ValueError("constraint set must contain its lower corner")
        self._ub = self._implied_upper()
        if not np.all(np.isfinite(self._ub)):
            raise ValueError("constraint set is unbounded")
        for arr in (self.lower, self.upper, self.A, self.rho):
            arr.setflags(write=False)

    @classmethod
    def box(cls, lower, upper, **kw) -> "ConstraintSet":
        return cls(lower, upper, **kw)

    @property
    def is_box(self) -> bool:
        return self.A.shape[0] == 0

    def _implied_upper(self) -> np.ndarray:
        ub = self.upper.copy()
        for a, r in zip(self.A, self.rho):
            if np.any(a < 0):
                continue
            for j in np.flatnonzero(a > 0):
                # other coordinates sit at least at their lower bounds
                rest = a @ self.lower - a[j] * self.lower[j]
                ub[j] = min(ub[j], (r - rest) / a[j])
        return ub

    def implied_upper(self) -> np.ndarray:
        """Coordinatewise upper bounds implied by the box and halfspaces."""
        return self._ub.copy()

    def diameter(self) -> float:
        """Certified upper bound on the diameter.

        Each coordinate is bounded by ``min_i rho_i / A_ij`` (and the box);
        twice the norm of the largest attainable point bounds the diameter.
        """
        m = np.maximum(np.abs(self.lower), np.abs(self._ub))
        return float(2.0 * np.sqrt(np.sum(m ** 2)))

    def contains(self, point, tol: float = 0.0) -> bool:
        """Whether every constraint is violated by at most ``tol``."""
        y = np.asarray(point, dtype=float)
        return bool(np.all(self.violation(y) <= tol))

    def violation(self, points) -> np.ndarray:
        """Largest constraint violation per point (leading axes kept)."""
        y = np.asarray(points, dtype=float)
        v = np.maximum(self.lower - y, y - self.upper).max(axis=-1)
        if self.A.shape[0]:
            hv = (y[..., None, :] * self.A).sum(axis=-1) - self.rho
            v = np.maximum(v, hv.max(axis=-1))
        return np.maximum(v, 0.0)

    def with_lower(self, lower) -> "ConstraintSet":
        """The set intersected with ``y >= lower``."""
        return ConstraintSet(np.maximum(self.lower, lower), self.upper, self.A, self.rho,
                             tol=self.tol, max_iter=self.max_iter)

    def project(self, points, lower=None) -> np.ndarray:
        """Euclidean projection of one point or a stack of points.

        Parameters
        ----------
        points : array_like
            Shape ``(n,)`` or ``(k, n)``.
        lower : array_like, optional
            Extra lower bounds (same shape as ``points`` or broadcastable),
            i.e. the projection onto the set intersected with
            ``y >= lower``. The caller must ensure that intersection is
            nonempty.

        Returns
        -------
        ndarray
            Projected points, same shape as ``points``.
        """
        z = np.asarray(points, dtype=float)
        single = z.ndim == 1
        Z = np.atleast_2d(z)
        lo = np.broadcast_to(self.lower, Z.shape)
        if lower is not None:
            lo = np.maximum(lo, np.broadcast_to(np.asarray(lower, dtype=float), Z.shape))
        hi = np.broadcast_to(self.upper, Z.shape)
        if self.is_box:
            out = np.minimum(np.maximum(Z, lo), hi)
        else:
            out = self._dykstra(Z, lo, hi)
        return out[0] if single else out

    def _dykstra(self, Z, lo, hi) -> np.ndarray:
        # Sets are visited in the order: halfspace 0..m-1, then the box. The
        # iterate after a sweep therefore always satisfies the box exactly.
        A, rho, nrm = self.A, self.rho, self._norms
        m = A.shape[0]
        out = np.empty_like(Z)
        idx = np.arange(Z.shape[0])
        z0 = Z.copy()
        x = Z.copy()
        lo = np.array(lo)
        hi = np.array(hi)
        inc = np.zeros((m + 1,) + Z.shape)
        next_polish = 0
        for it in range(self.max_iter):
            x_prev = x
            inc_prev = inc.copy()
            for k in range(m):
                v = x + inc[k]
                excess = v @ A[k] - rho[k]
                step = np.maximum(excess, 0.0) / nrm[k]
                x = v - step[:, None] * A[k]
                inc[k] = v - x
            v = x + inc[m]
            x = np.minimum(np.maximum(v, lo), hi)
            inc[m] = v - x
            change = np.abs(x - x_prev).max(axis=1)
            inc_change = np.abs(inc - inc_prev).max(axis=(0, 2))
            viol = ((x @ A.T) - rho).max(axis=1)
            done = (change <= self.tol) & (inc_change <= self.tol) & (viol <= self.tol)
            # On thin sets the iterate settles long before the increments
            # do. Such rows are finished by an exact solve on the active set,
            # accepted only when it passes the KKT check.
            stalled = (change <= self.tol) & ~done
            if stalled.any() and it >= next_polish:
                next_polish = it + 50
                for r in np.flatnonzero(stalled):
                    y = self._kkt_polish(z0[r], x[r], lo[r], hi[r], inc[:, r])
                    if y is not None:
                        x[r] = y
                        done[r] = True
            if done.any():
                out[idx[done]] = x[done]
                keep = ~done
                if not keep.any():
                    return out
                idx, x, inc, lo, hi, z0 = idx[keep], x[keep], inc[:, keep], lo[keep], hi[keep], z0[keep]
        raise ProjectionError(
            f"Dykstra projection did not converge in {self.max_iter} sweeps "
            f"for {idx.size} point(s)")

    def _kkt_polish(self, p, x, lo, hi, inc) -> Optional[np.ndarray]:
        """Exact projection of ``p`` found by active-set enumeration.

        All constraints are candidates when that search is small; otherwise
        only those nearly tight at ``x`` or carrying a nonzero Dykstra
        increment ``inc`` (shape ``(m + 1, n)``). Every
        linearly independent subset is tried, smallest first; the first
        projection onto its affine hull that is feasible with nonnegative
        multipliers is the answer. Returns ``None`` if none qualifies or the
        search would be too large.
        """
        m, n = self.A.shape
        eye = np.eye(n)
        C = np.vstack([self.A, -eye, eye])
        e = np.concatenate([self.rho, -lo, hi])
        finite = np.isfinite(e)
        slack = np.where(finite, e - C @ x, np.inf)
        used = np.concatenate([np.abs(inc[:m]).max(axis=1) > 0,
                               inc[m] < 0, inc[m] > 0])
        def count(c):
            return sum(math.comb(c, k) for k in range(min(n, c) + 1))

        cand = np.flatnonzero(finite)
        if count(cand.size) > POLISH_MAX_SUBSETS:
            cand = np.flatnonzero(finite & ((slack <= POLISH_SLACK * (1.0 + np.abs(e))) | used))
            if count(cand.size) > POLISH_MAX_SUBSETS:
                return None
        Cf, ef = C[finite], e[finite]
        for k in range(min(n, cand.size) + 1):
            for J in itertools.combinations(cand, k):
                J = list(J)
                if k:
                    Cj = C[J]
                    M = Cj @ Cj.T
                    if np.linalg.matrix_rank(M) < k:
                        continue
                    mu = np.linalg.solve(M, Cj @ p - e[J])
                    if mu.min() < -self.tol:
                        continue
                    y = p - Cj.T @ mu
                else:
                    y = p
                if (Cf @ y - ef).max() <= self.tol:
                    return y
        return None

    def __repr__(self) -> str:
        return (f"ConstraintSet(n={self.n}, lower={self.lower.tolist()}, "
                f"upper={self.upper.tolist()}, m={self.A.shape[0]})")


def sample(model: DemandModel, stream: RandomStream) -> np.ndarray:
    """One demand draw; functional alias of :meth:`DemandModel.sample`."""
    return model.sample(stream)


def project(cset: ConstraintSet, point) -> np.ndarray:
    """Functional alias of :meth:`ConstraintSet.project`."""
    return cset.project(point)


def diameter(cset: ConstraintSet) -> float:
    """Functional alias of :meth:`ConstraintSet.diameter`."""
    return cset.diameter()


def contains(cset: ConstraintSet, point, tol: float = 0.0) -> bool:
    """Functional alias of :meth:`ConstraintSet.contains`."""
    return cset.contains(point, tol)
