"""Monte Carlo harness: concentration, convergence times, error sweeps, rate envelopes."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from .empirical import ESTIMATORS, EstimatorConfig, StopRule, run_estimator
from .model import (
    DomainError,
    LossKind,
    MixtureParams,
    derive_seed,
    format_float,
    loss,
    rho_to_beta,
    sample,
)
from .population import PopMeanMap1D, find_fixed_points_1d, pop_mean
from .quadrature import QuadratureGrid, default_grid
from .trace import IterationTrace

THREADS_ENV = "UEM_THREADS"


def omega(d: int, n: int, c_omega: float = 1.0) -> float:
    """Concentration scale ``sqrt(c_omega d log n / n)``."""
    return math.sqrt(c_omega * d * math.log(n) / n)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# -- concentration ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConcentrationReport:
    """Per-trial normalised supremum ``max_theta ||f_n - f|| / (max{||theta||, |rho|} omega_d)``."""

    n: int
    d: int
    rho: float
    sups: np.ndarray
    threshold: float

    @property
    def fraction_below(self) -> float:
        return float(np.mean(self.sups <= self.threshold))

    @property
    def median(self) -> float:
        return float(np.median(self.sups))

    def quantiles(self, qs=(0.5, 0.9, 0.95, 0.99)) -> dict:
        return {str(q): float(np.quantile(self.sups, q)) for q in qs}

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "rho": self.rho,
            "threshold": self.threshold,
            "fraction_below": self.fraction_below,
            "median": self.median,
            "quantiles": self.quantiles(),
            "sups": [float(s) for s in self.sups],
        }


def _emp_mean_batch(x: np.ndarray, thetas: np.ndarray, beta: float,
                    chunk: int = 100_000) -> np.ndarray:
    # f_n at every row of ``thetas``; chunked so n x m never materialises at once
    out = np.zeros((thetas.shape[0], x.shape[1]))
    for start in range(0, x.shape[0], chunk):
        xc = x[start:start + chunk]
        out += (np.tanh(xc @ thetas.T + beta)).T @ xc
    return out / x.shape[0]


def concentration_check(params: MixtureParams, n: int, theta_grid, rho: float,
                        trials: int, base_seed: int = 0, threshold: float = 20.0,
                        grid: QuadratureGrid | None = None) -> ConcentrationReport:
    """Empirical distribution of the normalised sup of ``||f_n(theta, rho) - f(theta, rho)||``.

    ``omega_d`` uses ``C_omega = 1``.  Trial ``t`` uses the data seed
    ``derive_seed(base_seed, 0, t)``.
    """
    thetas = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    if thetas.size == 0:
        raise DomainError("theta grid is empty")
    if thetas.shape[1] != params.d:
        raise DomainError(f"theta grid has d={thetas.shape[1]}, params have d={params.d}")
    grid = grid or default_grid()
    beta = rho_to_beta(rho)
    pop = np.array([pop_mean(th, rho, params, grid) for th in thetas])
    scale = np.maximum(np.linalg.norm(thetas, axis=1), abs(rho)) * omega(params.d, n)
    sups = np.empty(trials)
    for t in range(trials):
        data = sample(params, n, derive_seed(base_seed, 0, t))
        diff = np.linalg.norm(_emp_mean_batch(data.samples, thetas, beta) - pop, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(diff == 0, 0.0, diff / scale)
        sups[t] = float(np.max(ratio))
    return ConcentrationReport(n, params.d, float(rho), sups, float(threshold))


# -- convergence time ------------------------------------------------------

def convergence_time(trace: IterationTrace, target, tol_mult: float = 2.0,
                     kind: LossKind | str = LossKind.L2) -> int | float:
    """First ``t`` with ``loss(x_t, target) <= tol_mult * loss(x_T, target)``.

    ``x_T`` is the last iterate.  Returns ``math.inf`` if no iterate qualifies.
    """
    if trace.iterates.shape[0] == 0:
        raise DomainError("empty trace")
    target = np.atleast_1d(np.asarray(target, dtype=float))
    losses = np.array([loss(x, target, kind) for x in trace.iterates])
    hits = np.nonzero(losses <= tol_mult * losses[-1])[0]
    return int(hits[0]) if hits.size else math.inf


# -- rate envelope ---------------------------------------------------------

class Regime(str, Enum):
    LOW_SIGNAL = "low signal"  # rate eta
    WEIGHT_INFORMED = "weight informed"  # rate (1/rho) sqrt(d/n)
    SEPARATED = "separated"  # rate (1/eta) sqrt(d/n)
    PARAMETRIC = "parametric"  # rate sqrt(d/n)


@dataclass(frozen=True)
class RateEnvelope:
    regime: Regime
    predicted_rate: float


def rate_envelope(eta: float, rho: float, d: int, n: int) -> RateEnvelope:
    """Minimax-rate upper envelope (up to constants) for estimating the mean.

    With ``r = sqrt(d/n)``: if ``|rho| >= (d/n)^(1/4)`` the cases are
    ``eta <= r/rho``, ``r/rho < eta <= rho``, ``rho < eta <= 1``, ``eta > 1``;
    otherwise ``eta <= (d/n)^(1/4)``, up to 1, above 1.
    """
    if eta < 0 or d < 1 or n < 1 or not abs(rho) < 1:
        raise DomainError("need eta >= 0, d >= 1, n >= 1, |rho| < 1")
    r = math.sqrt(d / n)
    rho = abs(rho)
    if rho >= (d / n) ** 0.25:
        if eta <= r / rho:
            return RateEnvelope(Regime.LOW_SIGNAL, eta)
        if eta <= rho:
            return RateEnvelope(Regime.WEIGHT_INFORMED, r / rho)
    elif eta <= (d / n) ** 0.25:
        return RateEnvelope(Regime.LOW_SIGNAL, eta)
    if eta <= 1:
        return RateEnvelope(Regime.SEPARATED, r / eta)
    return RateEnvelope(Regime.PARAMETRIC, r)


# -- landscape -------------------------------------------------------------

@dataclass(frozen=True)
class LandscapeRow:
    delta: float
    eta: float
    count: int
    roots: tuple


def landscape_scan(delta_grid, eta_grid, grid: QuadratureGrid | None = None,
                   scan_points: int = 2000) -> list[LandscapeRow]:
    """Number of fixed points of the 1-d population map on the negative axis.

    The scan covers ``[-(eta + 1), 0)``; the map is bounded by ``eta + 1`` so no
    root lies further out.
    """
    grid = grid or default_grid()
    rows = []
    for delta in delta_grid:
        for eta in eta_grid:
            if not eta > 0:
                raise DomainError(f"eta must be > 0 for a landscape scan, got {eta}")
            m = PopMeanMap1D(eta, delta, grid=grid)
            hi = -1e-9 * max(1.0, eta)
            roots = find_fixed_points_1d(m, (-(eta + 1.0), hi), scan_points)
            rows.append(LandscapeRow(float(delta), float(eta), len(roots),
                                     tuple(float(r) for r in roots)))
    return rows


# -- error sweep -----------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    d: tuple
    n: tuple
    eta: tuple
    rho_star: tuple
    trials: int
    estimators: tuple
    base_seed: int = 0
    max_iter: int = 10_000
    tol: float = 1e-8
    stop_rule: str = "residual"
    truncation: float = 0.95
    c0: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("d", "n", "eta", "rho_star", "estimators"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise DomainError(f"sweep grid {name!r} is empty")
            object.__setattr__(self, name, vals)
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if any(d < 1 for d in self.d) or any(n < 2 for n in self.n):
            raise DomainError("need d >= 1 and n >= 2")
        if any(e < 0 for e in self.eta) or any(not abs(r) < 1 for r in self.rho_star):
            raise DomainError("need eta >= 0 and |rho_star| < 1")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown:
            raise DomainError(f"unknown estimators {unknown}; choose from {sorted(ESTIMATORS)}")

    @classmethod
    def from_dict(cls, obj: dict) -> "SweepSpec":
        names = {f.name for f in fields(cls)}
        extra = set(obj) - names
        if extra:
            raise DomainError(f"unknown sweep spec keys {sorted(extra)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "SweepSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def cells(self):
        return list(itertools.product(self.d, self.n, self.eta, self.rho_star))

    def config(self, seed: int) -> EstimatorConfig:
        return EstimatorConfig(max_iter=self.max_iter, tol=self.tol,
                               truncation=self.truncation, seed=seed,
                               stop_rule=StopRule(self.stop_rule), c0=self.c0,
                               kappa=self.kappa)

    def data_seed(self, cell: int, trial: int) -> int:
        return derive_seed(self.base_seed, cell, trial)

    def estimator_seed(self, cell: int, trial: int) -> int:
        return derive_seed(self.base_seed, cell, trial, 1)


SWEEP_COLUMNS = ("d", "n", "eta", "rho_star", "trial", "estimator", "loss_l2",
                 "loss_l0", "iterations", "branch", "error")


@dataclass(frozen=True)
class SweepRow:
    d: int
    n: int
    eta: float
    rho_star: float
    trial: int
    estimator: str
    loss_l2: float | None
    loss_l0: float | None
    iterations: int | None
    branch: str | None
    error: str | None = None


def _run_cell_trial(spec: SweepSpec, cell: int, trial: int) -> list[SweepRow]:
    d, n, eta, rho = spec.cells()[cell]
    params = MixtureParams.from_eta(eta, rho, d)
    data = sample(params, n, spec.data_seed(cell, trial))
    cfg = spec.config(spec.estimator_seed(cell, trial))
    rows = []
    for name in spec.estimators:
        try:
            est = run_estimator(name, data, rho, cfg)
        except Exception as exc:  # recorded per row, never fatal to the sweep
            rows.append(SweepRow(d, n, eta, rho, trial, name, None, None, None, None,
                                 f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(SweepRow(d, n, eta, rho, trial, name, est.loss_l2, est.loss_l0,
                             est.iterations_used, est.branch))
    return rows


def _run_task(args):
    spec, cell, trial = args
    return cell, trial, _run_cell_trial(spec, cell, trial)


@dataclass(frozen=True, eq=False)
class SweepResult:
    spec: SweepSpec
    rows: tuple

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in self.rows:
            vals = []
            for name in SWEEP_COLUMNS:
                v = getattr(r, name)
                if v is None:
                    vals.append("")
                elif isinstance(v, float):
                    vals.append(format_float(v))
                else:
                    vals.append(str(v))
            w.writerow(vals)
        return buf.getvalue()

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv_text())
        return path

    def losses(self, estimator: str, kind: str = "loss_l2", **cell) -> np.ndarray:
        """Finite losses of one estimator, optionally restricted to ``d=..., n=...`` etc."""
        out = []
        for r in self.rows:
            if r.estimator != estimator or any(getattr(r, k) != v for k, v in cell.items()):
                continue
            v = getattr(r, kind)
            if v is not None and np.isfinite(v):
                out.append(v)
        return np.array(out)

    def summary(self) -> dict:
        """Median losses per cell and the fitted slope of log median loss vs log n."""
        groups: dict = {}
        for r in self.rows:
            key = (r.d, r.n, r.eta, r.rho_star, r.estimator)
            groups.setdefault(key, []).append(r)
        cells = []
        for (d, n, eta, rho, est), rows in sorted(groups.items()):
            l2 = [r.loss_l2 for r in rows if r.loss_l2 is not None]
            l0 = [r.loss_l0 for r in rows if r.loss_l0 is not None]
            cells.append({
                "d": d, "n": n, "eta": eta, "rho_star": rho, "estimator": est,
                "median_loss_l2": float(np.median(l2)) if l2 else None,
                "median_loss_l0": float(np.median(l0)) if l0 else None,
                "failures": sum(r.error is not None for r in rows),
                "trials": len(rows),
            })
        slopes = []
        by_line: dict = {}
        for c in cells:
            by_line.setdefault((c["d"], c["eta"], c["rho_star"], c["estimator"]), []).append(c)
        for (d, eta, rho, est), line in sorted(by_line.items()):
            kind = "median_loss_l2" if all(c["median_loss_l2"] for c in line) else "median_loss_l0"
            pts = [(c["n"], c[kind]) for c in line if c[kind]]
            if len(pts) < 2:
                continue
            ns, errs = zip(*pts)
            slope = float(np.polyfit(np.log(ns), np.log(errs), 1)[0])
            slopes.append({"d": d, "eta": eta, "rho_star": rho, "estimator": est,
                           "loss": kind, "slope_log_error_vs_log_n": slope})
        return {"cells": cells, "slopes": slopes}


def error_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Run every (cell, trial, estimator) combination; deterministic given ``base_seed``.

    ``workers`` defaults to the ``UEM_THREADS`` environment variable.  Rows
    are sorted by (cell, trial, estimator position), whatever the execution order.
    """
    workers = worker_count() if workers is None else max(1, workers)
    tasks = [(spec, c, t) for c in range(len(spec.cells())) for t in range(spec.trials)]
    if workers == 1:
        results = [_run_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=4))
    order = {name: i for i, name in enumerate(spec.estimators)}
    rows = []
    for cell, trial, cell_rows in sorted(results, key=lambda r: (r[0], r[1])):
        rows.extend(sorted(cell_rows, key=lambda r: order[r.estimator]))
    return SweepResult(spec, tuple(rows))
