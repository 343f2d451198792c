"""Replicated experiments: configuration, optimal benchmark, regret and CSV.

A configuration is a YAML (or JSON) mapping with the keys

``application``
    ``multiproduct`` (alias ``newsvendor``), ``multiechelon``, ``owms`` or
    ``two_echelon``;
``instance``
    cost vectors, capacities and constraint matrices of the application;
``demand``
    a :meth:`DemandModel.from_dict` mapping;
``policies`` (or a single ``policy``)
    list of policy mappings, see :func:`make_policy`;
``horizons``
    list of horizons ``T``;
``replications``, ``seed``, ``output``
    replication count, experiment seed and CSV path.

Optional keys: ``oracle`` (``samples``, ``iterations``, ``seed``),
``curves`` and ``timing`` (both booleans).

Replication ``r`` always draws its demand path from
``RandomStream(seed, r)``; every policy and horizon sees a prefix of the same
path. Replications are processed in fixed-size blocks so the numbers do not
depend on how many worker processes are used.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from scipy.optimize import lsq_linear, minimize

from .apps import MultiEchelonApp, MultiProductApp, OwmsApp
from .apps.base import InventoryApp
from .baselines import SaaPolicy, SgdPolicy
from .core import ConstraintSet, DemandModel, RandomStream
from .meta_policy import ContractViolation, MetaPolicy, simulate
from .optimizer import BatchSchedule, stepsize_warnings
from .two_echelon import TwoEchelonInstance, planner_simulate, two_echelon_oracle

log = logging.getLogger(__name__)

CSV_HEADER = ("application,policy,T,replications,mean_rel_regret_pct,std_rel_regret_pct,"
              "mean_switches,mean_waiting_periods,wall_clock_s")
CURVE_HEADER = "t,mean_rel_regret_pct,std_rel_regret_pct"
BLOCK = 10
KINK_STEP = 1e-7
APPLICATIONS = ("multiproduct", "newsvendor", "multiechelon", "owms", "two_echelon")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    application: str
    instance: dict
    demand: dict
    policies: list
    horizons: list
    replications: int
    seed: int
    output: Optional[str] = None
    oracle: dict = field(default_factory=dict)
    curves: bool = False
    timing: bool = True

    def __post_init__(self):
        if self.application not in APPLICATIONS:
            raise ValueError(f"unknown application {self.application!r}; expected one of {APPLICATIONS}")
        if not self.horizons:
            raise ValueError("horizon list is empty")
        self.horizons = [int(T) for T in self.horizons]
        if any(T < 1 for T in self.horizons):
            raise ValueError("horizons must be positive")
        if self.application == "two_echelon" and any(T < 2 for T in self.horizons):
            raise ValueError("two_echelon horizons must be at least 2")
        if not self.policies:
            raise ValueError("no policy given")
        if int(self.replications) < 1:
            raise ValueError("replications must be positive")
        self.replications = int(self.replications)
        self.seed = int(self.seed)
        labels = [policy_label(p) for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError(f"policy labels must be unique, got {labels}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        if "policy" in raw:
            if "policies" in raw:
                raise ValueError("give either 'policy' or 'policies', not both")
            raw["policies"] = [raw.pop("policy")]
        pol = raw.get("policies")
        if isinstance(pol, dict):
            raw["policies"] = [pol]
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        missing = {"application", "instance", "demand", "policies", "horizons",
                   "replications", "seed"} - set(raw)
        if missing:
            raise ValueError(f"missing config keys: {sorted(missing)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def load_config(path) -> ExperimentConfig:
    """Read a YAML or JSON configuration file."""
    text = Path(path).read_text()
    raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ValueError("configuration must be a mapping")
    return ExperimentConfig.from_dict(raw)


def policy_label(spec: dict) -> str:
    if "name" in spec:
        return str(spec["name"])
    kind = spec.get("type", "meta")
    if kind == "meta":
        return f"meta-{spec.get('schedule', {}).get('kind', '?')}"
    if kind == "sgd":
        return f"sgd-{spec.get('power', 0.5)}"
    return str(kind)


def build_app(cfg: ExperimentConfig):
    """Application object (or two-echelon instance) described by ``cfg``."""
    inst = dict(cfg.instance)
    demand_spec = dict(cfg.demand)
    app_id = cfg.application
    if app_id in ("multiproduct", "newsvendor"):
        h = np.atleast_1d(np.asarray(inst["h"], dtype=float))
        n = h.shape[0]
        demand_spec.setdefault("dimension", n)
        demand = DemandModel.from_dict(demand_spec)
        lower = inst.get("lower", np.zeros(n))
        cset = ConstraintSet(lower, inst.get("upper"), inst.get("A"), inst.get("rho"))
        return MultiProductApp(h, inst["b"], cset, demand)
    if app_id == "multiechelon":
        demand = DemandModel.from_dict(demand_spec)
        return MultiEchelonApp(inst["h"], inst["b"], inst["rho"], demand)
    if app_id == "owms":
        demand_spec.setdefault("dimension", len(inst["b"]))
        demand = DemandModel.from_dict(demand_spec)
        return OwmsApp(inst["h"], inst["b"], inst["c"], inst["rho"], demand,
                       halt=inst.get("halt", "argmin"))
    demand = DemandModel.from_dict(demand_spec)
    extra = {k: float(inst[k]) for k in ("C1", "eta") if k in inst}
    return TwoEchelonInstance(
        h1=float(inst["h1"]), h2=float(inst["h2"]), p1=float(inst["p1"]), demand=demand,
        s_max=float(inst["s_max"]), D_bar=float(inst["D_bar"]),
        schedule=BatchSchedule.any_time_linear(int(inst.get("K", 1))), **extra,
    )


def initial_inventory(cfg: ExperimentConfig, app: InventoryApp) -> np.ndarray:
    x1 = cfg.instance.get("x1")
    if x1 is None:
        return app.initial_state()
    return np.asarray(x1, dtype=float)


def make_policy(app: InventoryApp, spec: dict, T: int, x1):
    """Instantiate a policy mapping.

    ``{"type": "meta", "schedule": {...}, "eta": ...}``,
    ``{"type": "sgd", "eta": ..., "power": 0.5 | 1}`` or
    ``{"type": "saa", "initial": ...}`` (multi-product only).
    """
    kind = spec.get("type", "meta")
    if kind == "meta":
        schedule = BatchSchedule.from_dict(spec["schedule"], horizon=T)
        return MetaPolicy(app, schedule, float(spec["eta"]), x1)
    if kind == "sgd":
        return SgdPolicy(app, float(spec["eta"]), float(spec.get("power", 0.5)), x1)
    if kind == "saa":
        if not isinstance(app, MultiProductApp):
            raise ValueError("the SAA baseline needs a multiproduct application")
        return SaaPolicy(app, x1, initial=spec.get("initial"))
    raise ValueError(f"unknown policy type {kind!r}")


def validate(cfg: ExperimentConfig) -> list:
    """Build everything and return a list of admissibility messages."""
    app = build_app(cfg)
    msgs = []
    if isinstance(app, TwoEchelonInstance):
        for spec in cfg.policies:
            if spec.get("type", "planner") != "planner":
                msgs.append(f"two_echelon only supports the planner policy, got {spec.get('type')!r}")
        return msgs
    consts = app.theory_constants()
    x1 = initial_inventory(cfg, app)
    if not app.decision_set.contains(x1, 1e-9):
        raise ValueError("x1 lies outside the feasible set")
    for spec in cfg.policies:
        kind = spec.get("type", "meta")
        if kind == "meta":
            for T in cfg.horizons:
                schedule = BatchSchedule.from_dict(spec["schedule"], horizon=T)
                for m in stepsize_warnings(float(spec["eta"]), schedule, consts):
                    msgs.append(f"{policy_label(spec)} (T={T}): {m}")
                if schedule.kind != "fixed_time":
                    break
        elif kind not in ("sgd", "saa"):
            raise ValueError(f"unknown policy type {kind!r}")
    return msgs


# ---------------------------------------------------------------------------
# Optimal benchmark
# ---------------------------------------------------------------------------


@dataclass
class OracleResult:
    y_star: np.ndarray
    c_star: float
    converged: bool
    residual: float


def _oracle_rngs(seed: int):
    a = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2 ** 32 - 1, 0))))
    b = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2 ** 32 - 1, 1))))
    return a, b


def optimal_oracle(app: InventoryApp, n_samples: int = 10 ** 6, n_iter: int = 10 ** 4,
                   seed: int = 0, grid_step: float = 1e-3, tol: float = 1e-2) -> OracleResult:
    """Minimize the sample-average cost over the feasible set.

    Box-constrained problems use L-BFGS-B; general polyhedra use projected
    gradient with steps ``1/(beta sqrt(k))`` for ``n_iter`` iterations,
    keeping the best iterate. For at most two optimization variables a
    local grid at ``grid_step`` polishes the result. ``C*`` is the sample
    average on an independent draw of the same size.

    ``converged`` is false when the KKT residual (see ``kkt_residual``)
    exceeds ``tol``; a warning is issued in that case.
    """
    fit_rng, eval_rng = _oracle_rngs(seed)
    samples = app.demand.sample_path(fit_rng, n_samples)
    f = app.saa(samples)
    pset = app.param_set
    start = _start_point(app)
    consts = app.theory_constants()
    beta = consts.beta if np.isfinite(consts.beta) and consts.beta > 0 else 1.0

    if pset.is_box:
        bounds = list(zip(pset.lower, pset.upper))
        res = minimize(f, start, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": n_iter, "gtol": 1e-10, "ftol": 1e-14})
        w = np.clip(res.x, pset.lower, pset.upper)
    else:
        w = pset.project(start)
        best_w, best_v = w, f(w)[0]
        for k in range(1, n_iter + 1):
            v, g = f(w)
            if v < best_v:
                best_w, best_v = w, v
            w = pset.project(w - g / (beta * math.sqrt(k)))
        v, _ = f(w)
        w = w if v < best_v else best_w

    if w.shape[0] <= 2:
        w = _grid_polish(f, pset, w, grid_step)

    residual = kkt_residual(pset, w, f(w - KINK_STEP)[1], f(w + KINK_STEP)[1])
    converged = residual <= tol
    if not converged:
        warnings.warn(f"optimal oracle residual {residual:.3g} above tolerance {tol}", stacklevel=2)
    eval_samples = app.demand.sample_path(eval_rng, n_samples)
    y_star = app.to_decision(w)
    c_star = float(np.mean(app.cost(y_star, eval_samples)))
    return OracleResult(y_star=y_star, c_star=c_star, converged=converged, residual=residual)


def kkt_residual(pset: ConstraintSet, w, g_lo, g_hi, active_tol: float = 1e-6) -> float:
    """Distance from stationarity of ``w`` for a separable piecewise-smooth objective.

    Discrete demand puts kinks at the optimum, so the gradient is only
    known to lie in the box spanned by the one-sided gradients ``g_lo``
    and ``g_hi``. Returns ``min |g + C_act^T mu|`` over ``g`` in that box
    and ``mu >= 0``, where ``C_act`` holds the constraints active at ``w``.
    Zero means a KKT certificate exists.
    """
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    C = np.vstack([pset.A, -np.eye(n), np.eye(n)])
    e = np.concatenate([pset.rho, -pset.lower, pset.upper])
    keep = np.isfinite(e)
    C, e = C[keep], e[keep]
    act = C @ w - e >= -active_tol * (1.0 + np.abs(e))
    Ca = C[act]
    g_min = np.minimum(g_lo, g_hi)
    width = np.maximum(g_lo, g_hi) - g_min
    free = width > 0
    # g = g_min + delta with 0 <= delta <= width on the free coordinates
    M = np.hstack([np.eye(n)[:, free], Ca.T])
    if M.shape[1] == 0:
        return float(np.linalg.norm(g_min))
    ub = np.concatenate([width[free], np.full(Ca.shape[0], np.inf)])
    res = lsq_linear(M, -g_min, bounds=(np.zeros(M.shape[1]), ub), method="bvls")
    return float(np.linalg.norm(g_min + M @ res.x))


def _start_point(app: InventoryApp) -> np.ndarray:
    if isinstance(app, MultiProductApp):
        return app.param_set.project(app.critical_quantiles())
    if isinstance(app, MultiEchelonApp):
        q = app.b / (app.b + app.h)
        guess = np.maximum.accumulate([float(app.demand.ppf(v)) for v in q])
        return app.param_set.project(guess)
    mean = app.demand.mean()
    return np.clip(np.concatenate([[mean.sum() * 0.2], mean]), 0, app.param_set.upper)


def _grid_polish(f, pset: ConstraintSet, w, step: float, half_width: int = 10):
    offsets = np.arange(-half_width, half_width + 1) * step
    if w.shape[0] == 1:
        pts = w[0] + offsets[:, None]
    else:
        a, b = np.meshgrid(offsets, offsets, indexing="ij")
        pts = w + np.stack([a.ravel(), b.ravel()], axis=1)
    pts = np.vstack([w[None], pts])
    feasible = pset.violation(pts) <= 1e-12
    best, best_v = w, f(w)[0]
    for p in pts[feasible]:
        v = f(p)[0]
        if v < best_v:
            best, best_v = p, v
    return best


def relative_average_regret(total_cost, T, c_star):
    """``(total - T C*) / (T C*) * 100``."""
    if not c_star > 0:
        raise ValueError("optimal cost must be positive")
    return (np.asarray(total_cost, dtype=float) - T * c_star) / (T * c_star) * 100.0


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class RowResult:
    policy: str
    T: int
    replications: int
    mean_rel_regret_pct: float
    std_rel_regret_pct: float
    mean_switches: float
    mean_waiting_periods: float
    wall_clock_s: float
    total_costs: np.ndarray
    switches: np.ndarray
    waiting: np.ndarray
    curve: Optional[np.ndarray] = None


@dataclass
class SimulationResult:
    application: str
    c_star: float
    y_star: np.ndarray
    rows: list
    failures: list
    timing: bool = True

    def row(self, policy: str, T: int) -> RowResult:
        for r in self.rows:
            if r.policy == policy and r.T == T:
                return r
        raise KeyError((policy, T))


def _demand_block(cfg: ExperimentConfig, app, reps, T: int) -> np.ndarray:
    dim = 1 if isinstance(app, TwoEchelonInstance) else app.demand_dim
    out = np.empty((len(reps), T, dim))
    for k, r in enumerate(reps):
        out[k] = app.demand.sample_path(RandomStream(cfg.seed, r), T)
    return out


def _run_block(cfg_dict: dict, spec: dict, T: int, reps: list, want_curve: bool):
    """Worker: simulate replications ``reps`` of one (policy, T) pair."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    app = build_app(cfg)
    t0 = time.perf_counter()
    demands = _demand_block(cfg, app, reps, T)
    failures = []
    if isinstance(app, TwoEchelonInstance):
        traj = planner_simulate(app, demands[..., 0])
        cost = traj.cost
        switches = np.full(len(reps), float(len(traj.lengths)))
        waiting = np.zeros(len(reps))
        ok = np.ones(len(reps), dtype=bool)
    else:
        x1 = initial_inventory(cfg, app)
        try:
            policy = make_policy(app, spec, T, np.tile(x1, (len(reps), 1)))
            traj = simulate(app, policy, demands)
            cost = traj.cost
            switches = traj.n_targets.astype(float)
            waiting = traj.n_waiting.astype(float)
            ok = np.ones(len(reps), dtype=bool)
        except ContractViolation:
            # redo one replication at a time to isolate the offenders
            cost = np.full((len(reps), T), np.nan)
            switches = np.full(len(reps), np.nan)
            waiting = np.full(len(reps), np.nan)
            ok = np.zeros(len(reps), dtype=bool)
            for k, r in enumerate(reps):
                try:
                    policy = make_policy(app, spec, T, x1[None])
                    tr = simulate(app, policy, demands[k:k + 1])
                except ContractViolation as exc:
                    failures.append((r, str(exc)))
                    continue
                cost[k] = tr.cost[0]
                switches[k] = tr.n_targets[0]
                waiting[k] = tr.n_waiting[0]
                ok[k] = True
    totals = cost.sum(axis=1)
    cum = np.cumsum(cost, axis=1) if want_curve else None
    return {
        "totals": totals, "switches": switches, "waiting": waiting, "ok": ok,
        "cum": cum, "failures": failures, "seconds": time.perf_counter() - t0,
    }


def _oracle_for(cfg: ExperimentConfig, app):
    ocfg = dict(cfg.oracle)
    n = int(ocfg.get("samples", 10 ** 6))
    seed = int(ocfg.get("seed", cfg.seed))
    if isinstance(app, TwoEchelonInstance):
        (s1, s2), c = two_echelon_oracle(app, n_samples=n, seed=seed)
        return np.array([s1, s2]), c
    res = optimal_oracle(app, n_samples=n, n_iter=int(ocfg.get("iterations", 10 ** 4)), seed=seed)
    return res.y_star, res.c_star


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, curves: Optional[bool] = None,
                   c_star: Optional[float] = None) -> SimulationResult:
    """Run every (policy, T) pair for all replications.

    Parameters
    ----------
    jobs : int
        Worker processes. Results do not depend on this value.
    curves : bool, optional
        Keep per-period regret curves; defaults to ``cfg.curves``.
    c_star : float, optional
        Skip the oracle and use this optimal cost.
    """
    curves = cfg.curves if curves is None else curves
    app = build_app(cfg)
    if c_star is None:
        y_star, c_star = _oracle_for(cfg, app)
    else:
        y_star = np.full(1, np.nan)
    if not c_star > 0:
        raise ValueError(f"optimal cost {c_star} is not positive; relative regret undefined")

    reps = list(range(cfg.replications))
    blocks = [reps[i:i + BLOCK] for i in range(0, len(reps), BLOCK)]
    cfg_dict = cfg.to_dict()
    tasks = [(spec, T, blk) for spec in cfg.policies for T in cfg.horizons for blk in blocks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(_run_block, cfg_dict, s, T, b, curves) for s, T, b in tasks]
            outs = [f.result() for f in futs]
    else:
        outs = [_run_block(cfg_dict, s, T, b, curves) for s, T, b in tasks]

    rows, failures = [], []
    k = 0
    for spec in cfg.policies:
        label = policy_label(spec)
        for T in cfg.horizons:
            parts = outs[k:k + len(blocks)]
            k += len(blocks)
            ok = np.concatenate([p["ok"] for p in parts])
            totals = np.concatenate([p["totals"] for p in parts])
            sw = np.concatenate([p["switches"] for p in parts])
            wt = np.concatenate([p["waiting"] for p in parts])
            for p in parts:
                failures.extend((label, T, r, msg) for r, msg in p["failures"])
            reg = relative_average_regret(totals[ok], T, c_star)
            curve = None
            if curves:
                cum = np.concatenate([p["cum"] for p in parts])[ok]
                t = np.arange(1, T + 1)
                rr = (cum - t * c_star) / (t * c_star) * 100.0
                curve = np.column_stack([t, rr.mean(axis=0), _std(rr)])
            rows.append(RowResult(
                policy=label, T=T, replications=int(ok.sum()),
                mean_rel_regret_pct=float(reg.mean()) if reg.size else math.nan,
                std_rel_regret_pct=float(_std(reg)) if reg.size else math.nan,
                mean_switches=float(sw[ok].mean()) if ok.any() else math.nan,
                mean_waiting_periods=float(wt[ok].mean()) if ok.any() else math.nan,
                wall_clock_s=float(sum(p["seconds"] for p in parts)),
                total_costs=totals, switches=sw, waiting=wt, curve=curve,
            ))
    for f in failures:
        log.warning("replication failed: policy=%s T=%d rep=%d: %s", *f)
    return SimulationResult(cfg.application, float(c_star), np.asarray(y_star), rows, failures,
                            timing=cfg.timing)


def _std(a, axis=0):
    a = np.asarray(a, dtype=float)
    if a.shape[axis] < 2:
        return np.zeros(a.shape[:axis] + a.shape[axis + 1:]) if a.ndim > 1 else 0.0
    return a.std(axis=axis, ddof=1)


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


def emit_csv(result: SimulationResult, path, curves: bool = False) -> list:
    """Write the summary CSV (and curve files); return the paths written.

    Curve files are named ``<stem>_curve_<policy>_T<T>.csv`` next to
    ``path``. Without timing the ``wall_clock_s`` column reads ``nan`` so
    that repeated runs produce identical bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [CSV_HEADER]
    for r in result.rows:
        wall = r.wall_clock_s if result.timing else math.nan
        lines.append(",".join([
            result.application, r.policy, str(r.T), str(r.replications),
            _fmt(r.mean_rel_regret_pct), _fmt(r.std_rel_regret_pct),
            _fmt(r.mean_switches), _fmt(r.mean_waiting_periods), _fmt(wall),
        ]))
    path.write_text("\n".join(lines) + "\n")
    written = [path]
    if curves:
        for r in result.rows:
            if r.curve is None:
                raise ValueError("curves were not recorded; run with curves enabled")
            cpath = path.with_name(f"{path.stem}_curve_{r.policy}_T{r.T}.csv")
            body = [CURVE_HEADER] + [f"{int(t)},{_fmt(m)},{_fmt(s)}" for t, m, s in r.curve]
            cpath.write_text("\n".join(body) + "\n")
            written.append(cpath)
    return written
