import math

import numpy as np
import pytest

from unbalanced_em import (
    DomainError,
    EstimatorConfig,
    MixtureParams,
    PopMeanMap1D,
    Regime,
    SweepSpec,
    concentration_check,
    convergence_time,
    derive_seed,
    em_mean_estimate,
    emp_mean_iter,
    error_sweep,
    iterate_map,
    landscape_scan,
    pop_mean,
    rate_envelope,
    sample,
)
from unbalanced_em.analysis import SWEEP_COLUMNS, omega

import oracles

# -- rate envelope ---------------------------------------------------------


def test_envelope_low_signal():
    env = rate_envelope(0.001, 0.6, 4, 100_000)
    assert env.regime is Regime.LOW_SIGNAL and env.predicted_rate == 0.001


def test_envelope_parametric():
    env = rate_envelope(2.0, 0.6, 4, 100_000)
    assert env.regime is Regime.PARAMETRIC
    assert env.predicted_rate == pytest.approx(math.sqrt(4 / 100_000))
    assert env.predicted_rate == pytest.approx(0.00632, abs=1e-5)


def test_envelope_weight_versus_separation():
    r = math.sqrt(4 / 100_000)
    below = rate_envelope(0.3, 0.6, 4, 100_000)
    above = rate_envelope(0.8, 0.6, 4, 100_000)
    assert below.regime is Regime.WEIGHT_INFORMED and below.predicted_rate == pytest.approx(r / 0.6)
    assert above.regime is Regime.SEPARATED and above.predicted_rate == pytest.approx(r / 0.8)


def test_envelope_small_weight_table():
    d, n = 4, 100_000
    pivot = (d / n) ** 0.25
    assert rate_envelope(0.5 * pivot, 0.01, d, n).predicted_rate == 0.5 * pivot
    env = rate_envelope(0.5, 0.01, d, n)
    assert env.regime is Regime.SEPARATED
    assert env.predicted_rate == pytest.approx(math.sqrt(d / n) / 0.5)
    assert rate_envelope(3.0, -0.01, d, n).regime is Regime.PARAMETRIC


def test_envelope_is_continuous_at_breakpoints():
    d, n, rho = 4, 100_000, 0.6
    r = math.sqrt(d / n)
    for eta in (r / rho, rho, 1.0):
        lo = rate_envelope(eta * (1 - 1e-9), rho, d, n).predicted_rate
        hi = rate_envelope(eta * (1 + 1e-9), rho, d, n).predicted_rate
        assert lo == pytest.approx(hi, rel=1e-6)


def test_envelope_domain():
    with pytest.raises(DomainError):
        rate_envelope(-1.0, 0.5, 2, 100)
    with pytest.raises(DomainError):
        rate_envelope(1.0, 1.0, 2, 100)


# -- convergence time ------------------------------------------------------


def _trace(values):
    it = iter(values[1:])
    return iterate_map(lambda _: next(it), values[0], tol=0.0, max_iter=len(values) - 1)


def test_convergence_time_at_target_is_zero():
    tr = iterate_map(lambda x: x, 1.5, tol=0.0, max_iter=3)
    assert convergence_time(tr, 1.5, 2.0) == 0


def test_convergence_time_first_crossing():
    tr = _trace([4.0, 2.0, 0.5, 0.2, 0.1])
    # final loss 0.1; first loss <= 2 * 0.1 is at t = 3
    assert convergence_time(tr, 0.0, 2.0) == 3
    assert convergence_time(tr, 0.0, 5.0) == 2


def test_convergence_time_never():
    tr = _trace([5.0, 4.0, 3.0])
    assert convergence_time(tr, 0.0, 0.5) == math.inf


def test_convergence_time_l0():
    tr = _trace([-1.0, -1.0])
    assert convergence_time(tr, 1.0, 1.0, "L0") == 0


# -- concentration ---------------------------------------------------------


def test_concentration_zero_grid_balanced_is_exactly_zero():
    p = MixtureParams.from_eta(1.0, 0.0, 2)
    rep = concentration_check(p, 1000, [[0.0, 0.0]], 0.0, trials=5)
    np.testing.assert_array_equal(rep.sups, 0.0)
    assert rep.fraction_below == 1.0 and rep.median == 0.0


def test_concentration_matches_direct_recomputation():
    p = MixtureParams.from_eta(1.0, 0.6, 2)
    grid = np.array([[0.5, 0.5], [-1.0, 0.2], [1.5, -0.3]])
    rep = concentration_check(p, 5000, grid, 0.6, trials=3, base_seed=4)
    for t in range(3):
        data = sample(p, 5000, derive_seed(4, 0, t))
        ratios = [np.linalg.norm(emp_mean_iter(data, th, 0.6) - pop_mean(th, 0.6, p))
                  / (max(np.linalg.norm(th), 0.6) * omega(2, 5000)) for th in grid]
        assert rep.sups[t] == pytest.approx(max(ratios), rel=1e-9)
    d = rep.to_dict()
    assert set(d) >= {"sups", "fraction_below", "median", "quantiles"}


def test_concentration_errors():
    p = MixtureParams.from_eta(1.0, 0.6, 2)
    with pytest.raises(DomainError):
        concentration_check(p, 100, np.empty((0, 2)), 0.6, trials=1)
    with pytest.raises(DomainError):
        concentration_check(p, 100, [[1.0, 0.0, 0.0]], 0.6, trials=1)


# -- sweep -----------------------------------------------------------------


def _spec(**kw):
    base = dict(d=[2], n=[500, 2000], eta=[1.0], rho_star=[0.6], trials=3,
                estimators=["em-mean", "spectral", "em-weight"], base_seed=11)
    base.update(kw)
    return SweepSpec.from_dict(base)


def test_sweep_shape_and_determinism():
    spec = _spec()
    a, b = error_sweep(spec), error_sweep(spec)
    assert len(a.rows) == 2 * 3 * 3
    assert a.to_csv_text() == b.to_csv_text()
    assert a.to_csv_text().splitlines()[0] == ",".join(SWEEP_COLUMNS)
    other = error_sweep(_spec(base_seed=12))
    assert other.to_csv_text() != a.to_csv_text()


def test_sweep_parallel_matches_serial():
    spec = _spec()
    assert error_sweep(spec, workers=2).to_csv_text() == error_sweep(spec, workers=1).to_csv_text()


def test_sweep_single_cell_matches_direct_call():
    spec = _spec(n=[800], estimators=["em-mean"], trials=2)
    res = error_sweep(spec)
    p = MixtureParams.from_eta(1.0, 0.6, 2)
    for t, row in enumerate(res.rows):
        data = sample(p, 800, derive_seed(11, 0, t))
        est = em_mean_estimate(data, 0.6, spec.config(derive_seed(11, 0, t, 1)))
        assert row.loss_l2 == est.loss_l2 and row.iterations == est.iterations_used


def test_sweep_records_failures_per_row():
    res = error_sweep(_spec(rho_star=[0.0], estimators=["mom-mean", "spectral"], n=[300]))
    failed = [r for r in res.rows if r.estimator == "mom-mean"]
    assert all(r.error and "UnidentifiableError" in r.error for r in failed)
    assert all(r.error is None for r in res.rows if r.estimator == "spectral")


def test_sweep_summary_slope():
    summary = error_sweep(_spec(n=[500, 2000, 8000], trials=5)).summary()
    slopes = {s["estimator"]: s for s in summary["slopes"]}
    assert slopes["spectral"]["loss"] == "median_loss_l0"
    assert -1.0 < slopes["em-mean"]["slope_log_error_vs_log_n"] < 0.0
    assert len(summary["cells"]) == 3 * 3


@pytest.mark.parametrize("kw", [dict(estimators=[]), dict(trials=0), dict(n=[1]),
                                dict(rho_star=[1.0]), dict(estimators=["bogus"]),
                                dict(d=[])])
def test_spec_validation(kw):
    with pytest.raises(DomainError):
        _spec(**kw)
    with pytest.raises(DomainError):
        SweepSpec.from_dict({"d": [1], "surprise": 1})


# -- landscape -------------------------------------------------------------


def test_landscape_balanced_finds_minus_eta():
    (row,) = landscape_scan([0.5], [1.0])
    assert row.count == 1 and row.roots[0] == pytest.approx(-1.0, abs=1e-8)


def test_landscape_strong_imbalance_has_no_negative_fixed_point():
    (row,) = landscape_scan([0.05], [1.0], scan_points=20_000)
    assert row.count == 0
    # Monte Carlo cross-check: f(theta) - theta stays far from zero on the scan range
    m = PopMeanMap1D(1.0, 0.05)
    for k, theta in enumerate(np.linspace(-1.9, -0.05, 8)):
        mc, se = oracles.f_mc(theta, 1.0, 0.05, 400_000, k)
        assert mc - theta > 0.5 and abs(mc - m(theta)) < 5 * se


def test_landscape_roots_confined():
    rows = landscape_scan([0.1, 0.3, 0.45], [0.5, 1.0, 2.0])
    assert len(rows) == 9
    for r in rows:
        assert r.count == len(r.roots)
        assert all(-r.eta < x < 0 for x in r.roots)
