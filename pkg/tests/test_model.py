import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unbalanced_em import (
    Dataset,
    DomainError,
    GlobalBounds,
    MixtureParams,
    beta_to_rho,
    delta_rho_convert,
    delta_to_rho,
    derive_seed,
    log_likelihood,
    loss,
    make_rng,
    posterior_sign,
    rho_to_beta,
    rho_to_delta,
    sample,
)
from unbalanced_em.model import format_float

import oracles

rhos = st.floats(-0.999, 0.999)


@given(rhos)
def test_rho_beta_round_trip(rho):
    assert beta_to_rho(rho_to_beta(rho)) == pytest.approx(rho, abs=1e-14)


@given(rhos)
def test_rho_delta_round_trip(rho):
    delta = rho_to_delta(rho)
    assert 0 < delta < 1
    assert delta_to_rho(delta) == pytest.approx(rho, abs=1e-15)
    assert delta_rho_convert(delta_rho_convert(rho, "rho_to_delta"), "delta_to_rho") == \
        pytest.approx(rho, abs=1e-15)


def test_conversion_values():
    assert rho_to_delta(0.6) == pytest.approx(0.2)
    assert rho_to_beta(0.0) == 0.0
    assert rho_to_beta(0.6) == pytest.approx(math.atanh(0.6))
    assert delta_to_rho(0.5) == 0.0


@pytest.mark.parametrize("rho", [1.0, -1.0, 1 - 1e-13, 2.0, float("nan")])
def test_rho_out_of_range(rho):
    with pytest.raises(DomainError):
        rho_to_beta(rho)
    with pytest.raises(DomainError):
        MixtureParams.from_eta(1.0, rho, 2)


def test_params_from_eta():
    p = MixtureParams.from_eta(1.5, 0.4, 3)
    np.testing.assert_array_equal(p.theta_star, [1.5, 0.0, 0.0])
    assert (p.d, p.eta, p.delta_star) == (3, 1.5, pytest.approx(0.3))
    assert p.beta_star == pytest.approx(math.atanh(0.4))


def test_global_bounds():
    b = GlobalBounds(2.0, 0.9)
    assert b.contains(MixtureParams.from_eta(1.0, 0.5, 2))
    assert not b.contains(MixtureParams.from_eta(3.0, 0.5, 2))
    assert not b.contains(MixtureParams.from_eta(1.0, 0.95, 2))
    assert b.c_beta == pytest.approx(math.atanh(0.9))


def test_seed_derivation_is_stable_and_distinct():
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert len({derive_seed(7, c, t) for c in range(5) for t in range(5)}) == 25
    a = make_rng(3, 1).standard_normal(4)
    np.testing.assert_array_equal(a, make_rng(3, 1).standard_normal(4))


def test_sample_deterministic_and_shaped():
    p = MixtureParams.from_eta(1.0, 0.6, 4)
    a, b = sample(p, 500, 11), sample(p, 500, 11)
    assert a.samples.shape == (500, 4)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, sample(p, 500, 12).samples)
    assert not a.samples.flags.writeable


def test_sample_moments():
    # E[X] = rho* theta*, Cov[X] = I + (1 - rho*^2) theta* theta*^T
    p = MixtureParams(np.array([1.0, -0.5]), -0.3)
    x = sample(p, 400_000, 1).samples
    se = 1 / math.sqrt(400_000)
    np.testing.assert_allclose(x.mean(0), -0.3 * p.theta_star, atol=5 * 1.2 * se)
    cov = np.eye(2) + (1 - 0.09) * np.outer(p.theta_star, p.theta_star)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.02)


def test_sample_balanced_zero_mean_is_standard_normal():
    x = sample(MixtureParams.from_eta(0.0, 0.0, 3), 200_000, 2).samples
    np.testing.assert_allclose(np.cov(x.T), np.eye(3), atol=0.015)


def test_dataset_csv_round_trip(tmp_path):
    data = sample(MixtureParams.from_eta(1.0, 0.6, 3), 50, 9)
    path = data.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(path)
    np.testing.assert_array_equal(back.samples, data.samples)
    assert back.seed == 9 and back.params_used == data.params_used
    meta = json.loads((tmp_path / "d.json").read_text())
    assert meta == {"n": 50, "d": 3, "seed": 9, "theta_star": [1.0, 0.0, 0.0], "rho_star": 0.6}
    assert path.read_text().splitlines()[0] == "x0,x1,x2"


def test_dataset_rejects_mismatch():
    p = MixtureParams.from_eta(1.0, 0.5, 2)
    with pytest.raises(DomainError):
        Dataset(np.zeros((5, 3)), 0, p)
    with pytest.raises(DomainError):
        Dataset(np.full((5, 2), np.nan), 0, p)


def test_loss_kinds():
    t = np.array([1.0, 2.0])
    assert loss(-t, t, "L2") == pytest.approx(2 * math.sqrt(5))
    assert loss(-t, t, "L0") == 0.0
    with pytest.raises(DomainError):
        loss(np.zeros(3), t)


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(-0.95, 0.95), st.floats(-4, 4))
def test_posterior_sign_is_bayes_rule(theta, rho, x):
    p = (1 + rho) / 2
    lp = math.log(p) - 0.5 * (x - theta) ** 2
    lm = math.log(1 - p) - 0.5 * (x + theta) ** 2
    expected = math.tanh(0.5 * (lp - lm))
    assert posterior_sign(theta, rho, x) == pytest.approx(expected, abs=1e-12)


def test_log_likelihood_matches_density():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 3)) * 2
    th = np.array([0.3, -1.2, 0.8])
    for rho in (-0.7, 0.0, 0.45):
        assert log_likelihood(x, th, rho) == pytest.approx(
            oracles.log_likelihood_direct(x, th, rho), rel=1e-12)


def test_log_likelihood_extreme_arguments_finite():
    x = np.array([[400.0], [-400.0]])
    assert np.isfinite(log_likelihood(x, [30.0], 0.9))


def test_format_float_round_trips():
    for v in (0.1, 1 / 3, 1e-300, 123456789.123456789):
        s = format_float(v)
        assert float(s) == v
    assert format_float(0.1) == "0.10000000000000001"
