"""Fast self-checks of the population oracles, run by ``uem check``.

Each check returns a :class:`CheckResult`; none of them draws more than a
few million random numbers, so the whole suite runs in well under a minute.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .empirical import EstimatorConfig, InitKind, em_mean_estimate, spectral_from_moment
from .model import MixtureParams, log_likelihood, make_rng, rho_to_beta, sample
from .population import (
    PopMeanMap1D,
    PopWeightMap,
    SignalOrthogonalMap,
    find_fixed_points_1d,
    find_weight_fixed_point,
    mean_error_trace,
    s_function,
)

ETAS = (0.1, 0.5, 1.0, 2.0)
DELTAS = (0.05, 0.2, 0.35, 0.45)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def check_consistency() -> CheckResult:
    worst = max(abs(PopMeanMap1D(eta, dl)(eta) - eta) for eta in ETAS for dl in DELTAS)
    return CheckResult("consistency f(eta) = eta", worst <= 1e-7, f"max error {worst:.3g}")


def check_positive_fixed_point() -> CheckResult:
    bad = []
    for eta in ETAS:
        for dl in DELTAS:
            roots = find_fixed_points_1d(PopMeanMap1D(eta, dl), (0.01, 3.0))
            if len(roots) != 1 or abs(roots[0] - eta) > 1e-6:
                bad.append((eta, dl, roots))
    return CheckResult("unique positive fixed point", not bad, f"bad cells {bad}")


def check_negative_confinement() -> CheckResult:
    bad, total = [], 0
    for eta in ETAS:
        for dl in DELTAS:
            roots = find_fixed_points_1d(PopMeanMap1D(eta, dl), (-eta - 1.0, -1e-9))
            total += len(roots)
            bad += [(eta, dl, r) for r in roots if not -eta < r < 0]
    return CheckResult("negative fixed points in (-eta, 0)", not bad,
                       f"{total} roots, outside: {bad}")


def check_pivot(step: float = 1e-4) -> CheckResult:
    bad = 0
    for eta in (0.5, 1.0):
        thetas = np.linspace(-2.0 * eta, 3.0 * eta, 20)
        for dl in np.linspace(0.05, 0.45, 20):
            up = PopMeanMap1D(eta, dl + step)(thetas)
            dn = PopMeanMap1D(eta, dl - step)(thetas)
            deriv = (up - dn) / (2 * step)
            sign = np.sign(thetas - eta)
            bad += int(np.sum(deriv * sign < -1e-9))
            at = (PopMeanMap1D(eta, dl + step)(eta) - PopMeanMap1D(eta, dl - step)(eta)) / (2 * step)
            bad += int(abs(at) > 1e-7)
    return CheckResult("delta derivative has sign(theta - eta)", bad == 0, f"{bad} violations")


def check_trajectory_dominance() -> CheckResult:
    # error coordinates keep |theta_t - eta| resolved well below double-precision spacing at eta
    lo = np.abs(mean_error_trace(1.0, 0.1, 0.2, 50))[1:]
    hi = np.abs(mean_error_trace(1.0, 0.4, 0.2, 50))[1:]
    ok = lo < hi
    return CheckResult("smaller delta converges faster", bool(ok.all()),
                       f"{int((~ok).sum())} of 50 steps violate")


def check_g_properties() -> CheckResult:
    grid_ab = np.linspace(0.0, 2.0, 10)
    worst_zero = worst_dom = worst_mono = 0.0
    for dl in DELTAS:
        for eta in (0.5, 1.0):
            m = SignalOrthogonalMap(eta, dl)
            half = SignalOrthogonalMap(eta, 0.5)
            for a in grid_ab:
                worst_zero = max(worst_zero, abs(m.G(a, 0.0)))
                for b in grid_ab:
                    worst_dom = max(worst_dom, m.G(a, b) - half.G(a, b))
        for a in grid_ab[1:]:
            for b in grid_ab:
                etas = np.linspace(0.0, a + b * b / a, 6)
                vals = [SignalOrthogonalMap(e, dl).G(a, b) for e in etas]
                worst_mono = max(worst_mono, float(np.max(np.diff(vals))))
    ok = worst_zero <= 1e-10 and worst_dom <= 1e-9 and worst_mono <= 1e-9
    return CheckResult("G(a,0)=0, delta dominance, decreasing in eta", ok,
                       f"|G(a,0)| {worst_zero:.2g}, excess {worst_dom:.2g}, rise {worst_mono:.2g}")


def check_s_negative() -> CheckResult:
    u = np.arange(-2000, 2001) / 100.0
    worst = max(float(np.max(s_function(u, rho_to_beta(1 - 2 * dl), dl)))
                for dl in (0.05, 0.2, 0.4))
    return CheckResult("s(u) < 0 on [-20, 20]", worst < 0, f"max s {worst:.3g}")


def check_weight_map() -> CheckResult:
    params = MixtureParams.from_eta(1.0, 0.6, 1)
    h = PopWeightMap(params.theta_star, params.theta_star, 0.6)
    rhos = np.linspace(-0.999, 0.999, 400)
    vals = h(rhos)
    increasing = bool(np.all(np.diff(vals) > 0))
    d2 = np.diff(vals, 2)
    signs = np.sign(d2[np.abs(d2) > 1e-12])
    changes = int(np.sum(signs[1:] != signs[:-1]))
    fixed = find_weight_fixed_point(h)
    mismatch = find_weight_fixed_point(PopWeightMap(1.5 * params.theta_star, params.theta_star, 0.6))
    ok = (increasing and changes <= 1 and fixed is not None and abs(fixed - 0.6) <= 1e-7
          and mismatch is not None and mismatch < 0.6)
    return CheckResult("weight map shape and fixed points", ok,
                       f"increasing={increasing}, curvature sign changes={changes}, "
                       f"rho#={fixed}, rho#(1.5 theta*)={mismatch}")


def check_oracle_fidelity(n: int = 1_000_000, points: int = 5, seed: int = 0) -> CheckResult:
    rng = make_rng(seed, 99)
    worst = 0.0
    for _ in range(points):
        eta, dl, th = rng.uniform(0.1, 2.0), rng.uniform(0.05, 0.45), rng.uniform(-2, 2)
        s = np.where(rng.uniform(size=n) < dl, -1.0, 1.0)
        x = s * eta + rng.standard_normal(n)
        vals = x * np.tanh(x * th + rho_to_beta(1 - 2 * dl))
        se = vals.std() / math.sqrt(n)
        worst = max(worst, abs(PopMeanMap1D(eta, dl)(th) - vals.mean()) / se)
    return CheckResult("quadrature vs Monte Carlo", worst <= 4.0, f"max |z| {worst:.2f}")


def check_likelihood_ascent() -> CheckResult:
    worst = 0.0
    for k, (eta, rho, init) in enumerate([(1.0, 0.6, InitKind.SCALED_MEAN),
                                          (0.3, 0.2, InitKind.ZERO),
                                          (1.5, -0.4, InitKind.ZERO)]):
        data = sample(MixtureParams.from_eta(eta, rho, 3), 2000, k)
        est = em_mean_estimate(data, rho, EstimatorConfig(init_kind=init, max_iter=200))
        ll = [log_likelihood(data.samples, th, rho) for th in est.trace.iterates]
        worst = max(worst, -float(np.min(np.diff(ll))))
    return CheckResult("likelihood never decreases along EM", worst <= 1e-9,
                       f"largest drop {max(worst, 0.0):.3g}")


def check_spectral() -> CheckResult:
    theta = np.array([0.6, -0.8, 0.5])
    m = np.eye(3) + np.outer(theta, theta)
    value, _ = spectral_from_moment(m, tol=1e-14)
    err = min(np.linalg.norm(value - theta), np.linalg.norm(value + theta))
    zero, _ = spectral_from_moment(np.diag([1.0, 0.7, 0.5]))
    ok = err <= 1e-8 and not np.any(zero)
    return CheckResult("spectral on exact moments", ok, f"error {err:.2g}, null case {zero}")


ALL_CHECKS = (
    check_consistency,
    check_positive_fixed_point,
    check_negative_confinement,
    check_pivot,
    check_trajectory_dominance,
    check_g_properties,
    check_s_negative,
    check_weight_map,
    check_oracle_fidelity,
    check_likelihood_ascent,
    check_spectral,
)


def run_checks() -> list[CheckResult]:
    return [fn() for fn in ALL_CHECKS]
