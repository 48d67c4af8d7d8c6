"""Sample EM iterations and the estimator family built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .model import (
    Dataset,
    DomainError,
    LossKind,
    UnidentifiableError,
    loss,
    make_rng,
    rho_to_beta,
)
from .trace import IterationTrace, iterate_map


class InitKind(str, Enum):
    ZERO = "zero"
    SCALED_MEAN = "scaled_mean"
    RANDOM_SPHERE = "random_sphere"


class StopRule(str, Enum):
    RESIDUAL = "residual"  # stop when ||x_{t+1} - x_t|| <= tol
    FIXED = "fixed"  # always run max_iter steps


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    init_kind: InitKind = InitKind.SCALED_MEAN
    max_iter: int = 10_000
    tol: float = 1e-8
    truncation: float | None = None
    seed: int = 0
    stop_rule: StopRule = StopRule.RESIDUAL
    c0: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "init_kind", InitKind(self.init_kind))
        object.__setattr__(self, "stop_rule", StopRule(self.stop_rule))
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol >= 0:
            raise DomainError(f"tol must be >= 0, got {self.tol}")
        if self.truncation is not None and not 0 < self.truncation < 1:
            raise DomainError(f"truncation must lie in (0, 1), got {self.truncation}")

    @property
    def fixed_steps(self) -> bool:
        return self.stop_rule is StopRule.FIXED


@dataclass(frozen=True, eq=False)
class Estimate:
    value: np.ndarray | float
    trace: IterationTrace | None
    estimator_name: str
    loss_l2: float | None = None
    loss_l0: float | None = None
    branch: str | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("loss_l2", "loss_l0"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ValueError(f"{name} must be >= 0, got {v}")

    @property
    def iterations_used(self) -> int:
        return self.trace.iterations_used if self.trace is not None else 0

    @property
    def converged(self) -> bool:
        return self.trace.converged if self.trace is not None else True

    def to_dict(self) -> dict:
        value = self.value
        value = [float(v) for v in value] if np.ndim(value) else float(value)
        return {
            "estimator": self.estimator_name,
            "value": value,
            "loss_l2": self.loss_l2,
            "loss_l0": self.loss_l0,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "branch": self.branch,
        }


def _check_theta(data: Dataset, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (data.d,):
        raise DomainError(f"theta has shape {theta.shape}, data have d={data.d}")
    return theta


def emp_mean_iter(data: Dataset, theta, rho: float) -> np.ndarray:
    """``E_n[X tanh(<theta, X> + beta_rho)]``."""
    theta = _check_theta(data, theta)
    beta = rho_to_beta(rho)
    x = data.samples
    return x.T @ np.tanh(x @ theta + beta) / data.n


def emp_weight_iter(data: Dataset, rho: float, theta) -> float:
    """``E_n[tanh(<theta, X> + beta_rho)]``."""
    theta = _check_theta(data, theta)
    beta = rho_to_beta(rho)
    return float(np.mean(np.tanh(data.samples @ theta + beta)))


def _mean_losses(data: Dataset, value) -> tuple[float, float]:
    truth = data.params_used.theta_star
    return loss(value, truth, LossKind.L2), loss(value, truth, LossKind.L0)


def _run_mean(data: Dataset, rho: float, theta0, cfg: EstimatorConfig) -> IterationTrace:
    beta = rho_to_beta(rho)
    x = data.samples
    n = data.n

    def step(theta):
        return x.T @ np.tanh(x @ theta + beta) / n

    return iterate_map(step, np.asarray(theta0, dtype=float), cfg.tol,
                       cfg.max_iter, cfg.fixed_steps)


def scaled_mean_init(data: Dataset, rho_star: float) -> np.ndarray:
    if rho_star == 0:
        raise UnidentifiableError("scaled-mean initialisation needs rho_star != 0")
    return data.mean() / rho_star


def random_sphere_init(d: int, n: int, seed: int, c0: float = 1.0) -> np.ndarray:
    """``c0 (d log n / n)^(1/4) u`` with ``u`` uniform on the unit sphere."""
    u = make_rng(seed).standard_normal(d)
    u /= np.linalg.norm(u)
    return c0 * (d * math.log(n) / n) ** 0.25 * u


def em_mean_estimate(data: Dataset, rho_star: float, cfg: EstimatorConfig) -> Estimate:
    """Unbalanced mean EM with the weight fixed at ``rho_star``."""
    if cfg.init_kind is InitKind.ZERO:
        theta0 = np.zeros(data.d)
        name = "em-zero"
    elif cfg.init_kind is InitKind.SCALED_MEAN:
        theta0 = scaled_mean_init(data, rho_star)
        name = "em-mean"
    else:
        raise DomainError("em_mean_estimate supports Zero or ScaledMean initialisation")
    trace = _run_mean(data, rho_star, theta0, cfg)
    value = trace.final.copy()
    l2, l0 = _mean_losses(data, value)
    return Estimate(value, trace, name, l2, l0)


def em_balanced_sign_corrected(data: Dataset, rho_star: float | None,
                               cfg: EstimatorConfig) -> Estimate:
    """Balanced EM (``rho = 0`` inside tanh) from a small random start, then
    ``theta_T <- sign(<theta_T, E_n[X]>) theta_T``.

    ``rho_star`` is not used by the iteration; it is accepted so that all mean
    estimators share one signature.
    """
    theta0 = random_sphere_init(data.d, data.n, cfg.seed, cfg.c0)
    trace = _run_mean(data, 0.0, theta0, cfg)
    theta_t = trace.final
    ip = float(theta_t @ data.mean())
    ambiguous = ip == 0.0
    sign = -1.0 if ip < 0 else 1.0
    value = sign * theta_t
    l2, l0 = _mean_losses(data, value)
    return Estimate(value, trace, "em-balanced", l2, l0,
                    info={"sign": sign, "sign_ambiguous": ambiguous})


def adaptive_threshold(d: int, n: int, kappa: float = 1.0) -> float:
    """``kappa (d log n / n)^(1/4)``: at or above it the weight is used."""
    return kappa * (d * math.log(n) / n) ** 0.25


def adaptive_em(data: Dataset, rho_star: float, cfg: EstimatorConfig) -> Estimate:
    """Unbalanced EM when ``rho_star`` clears the threshold, otherwise balanced EM
    with sign correction.  Ties go to the unbalanced branch."""
    if abs(rho_star) >= adaptive_threshold(data.d, data.n, cfg.kappa):
        est = em_mean_estimate(data, rho_star, replace(cfg, init_kind=InitKind.SCALED_MEAN))
        branch = "unbalanced"
    else:
        est = em_balanced_sign_corrected(
            data, rho_star, replace(cfg, init_kind=InitKind.RANDOM_SPHERE))
        branch = "balanced"
    return replace(est, estimator_name="em-adaptive", branch=branch)


def em_weight_estimate(data: Dataset, theta, cfg: EstimatorConfig,
                       rho0: float = 0.0) -> Estimate:
    """Truncated weight EM ``rho_{t+1} = clip(h_n(rho_t, theta), -C, C)`` from ``rho0``."""
    if cfg.truncation is None:
        raise DomainError("em_weight_estimate needs cfg.truncation (the cap C_rho)")
    theta = _check_theta(data, theta)
    cap = cfg.truncation
    u = data.samples @ theta

    def step(rho):
        return float(np.clip(np.mean(np.tanh(u + math.atanh(rho))), -cap, cap))

    trace = iterate_map(step, float(np.clip(rho0, -cap, cap)), cfg.tol,
                        cfg.max_iter, cfg.fixed_steps)
    value = float(trace.final[0])
    err = abs(value - data.params_used.rho_star)
    return Estimate(value, trace, "em-weight", loss_l2=err)


def mom_mean(data: Dataset, rho_star: float) -> Estimate:
    """``E_n[X] / rho_star``."""
    if rho_star == 0:
        raise UnidentifiableError("method of moments needs rho_star != 0")
    value = data.mean() / rho_star
    l2, l0 = _mean_losses(data, value)
    return Estimate(value, None, "mom-mean", l2, l0)


def mom_weight(data: Dataset, theta) -> Estimate:
    """``<theta_hat, E_n[X]> / ||theta||``."""
    theta = _check_theta(data, theta)
    nrm = float(np.linalg.norm(theta))
    if nrm == 0:
        raise UnidentifiableError("mom_weight needs theta != 0")
    value = float(theta @ data.mean()) / nrm**2
    err = abs(value - data.params_used.rho_star)
    return Estimate(value, None, "mom-weight", loss_l2=err)


def power_iteration(matrix, tol: float = 1e-10, max_iter: int = 10_000):
    """Top eigenpair of a symmetric PSD matrix, started from ``e_1``.

    If ``e_1`` is already an eigenvector the start is tilted by a fixed
    vector so that a larger eigenvalue elsewhere is not missed.
    Returns ``(eigenvalue, unit eigenvector, steps)``.
    """
    a = np.asarray(matrix, dtype=float)
    d = a.shape[0]
    v = np.zeros(d)
    v[0] = 1.0
    av = a @ v
    lam = float(v @ av)
    if d > 1 and np.linalg.norm(av - lam * v) <= tol * max(1.0, abs(lam)):
        tilt = np.arange(1, d + 1, dtype=float)
        v = v + tilt / np.linalg.norm(tilt)
        v /= np.linalg.norm(v)
    for step in range(1, max_iter + 1):
        av = a @ v
        lam = float(v @ av)
        if np.linalg.norm(av - lam * v) <= tol * max(1.0, abs(lam)):
            return lam, v, step
        nrm = np.linalg.norm(av)
        if nrm == 0:
            return 0.0, v, step
        v = av / nrm
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def spectral_from_moment(second_moment, tol: float = 1e-10,
                         max_iter: int = 10_000) -> tuple[np.ndarray, float]:
    """``sqrt(max(lambda_max - 1, 0)) v`` from a second-moment matrix ``E[X X^T]``."""
    lam, v, _ = power_iteration(second_moment, tol, max_iter)
    return math.sqrt(max(lam - 1.0, 0.0)) * v, lam


def spectral_estimate(data: Dataset, tol: float = 1e-10, max_iter: int = 10_000) -> Estimate:
    """Top-eigenvector estimate; the sign is arbitrary so only the L0 loss is reported."""
    if data.n < 2:
        raise DomainError("spectral estimate needs n >= 2")
    x = data.samples
    value, lam = spectral_from_moment(x.T @ x / data.n, tol, max_iter)
    l0 = loss(value, data.params_used.theta_star, LossKind.L0)
    return Estimate(value, None, "spectral", None, l0, info={"lambda_max": lam})


def joint_alternating(data: Dataset, phases: int, cfg: EstimatorConfig
                      ) -> tuple[Estimate, Estimate]:
    """Balanced mean EM with sign correction, then weight EM with the mean frozen.

    Further phases alternate: mean EM at the frozen weight (warm-started),
    then weight EM at the frozen mean (warm-started).
    """
    if phases < 2:
        raise DomainError(f"phases must be >= 2, got {phases}")
    theta_est = em_balanced_sign_corrected(
        data, None, replace(cfg, init_kind=InitKind.RANDOM_SPHERE))
    rho_est = em_weight_estimate(data, theta_est.value, cfg)
    for phase in range(3, phases + 1):
        if phase % 2:
            trace = _run_mean(data, rho_est.value, theta_est.value, cfg)
            value = trace.final.copy()
            l2, l0 = _mean_losses(data, value)
            theta_est = Estimate(value, trace, "joint-mean", l2, l0)
        else:
            rho_est = em_weight_estimate(data, theta_est.value, cfg, rho0=rho_est.value)
    info = {"phases": phases}
    return (replace(theta_est, estimator_name="joint-mean", info={**theta_est.info, **info}),
            replace(rho_est, estimator_name="joint-weight", info=info))


def _weight_theta(data: Dataset, theta):
    return data.params_used.theta_star if theta is None else theta


# name -> callable(data, rho_star, cfg, theta) used by the sweep harness and the CLI.
# Weight estimators use ``theta`` (default: the true mean) and ignore rho_star.
ESTIMATORS = {
    "em-mean": lambda data, rho, cfg, theta=None: em_mean_estimate(
        data, rho, replace(cfg, init_kind=InitKind.SCALED_MEAN)),
    "em-zero": lambda data, rho, cfg, theta=None: em_mean_estimate(
        data, rho, replace(cfg, init_kind=InitKind.ZERO)),
    "em-balanced": lambda data, rho, cfg, theta=None: em_balanced_sign_corrected(
        data, rho, replace(cfg, init_kind=InitKind.RANDOM_SPHERE)),
    "em-adaptive": lambda data, rho, cfg, theta=None: adaptive_em(data, rho, cfg),
    "mom-mean": lambda data, rho, cfg, theta=None: mom_mean(data, rho),
    "spectral": lambda data, rho, cfg, theta=None: spectral_estimate(data),
    "em-weight": lambda data, rho, cfg, theta=None: em_weight_estimate(
        data, _weight_theta(data, theta), cfg),
    "mom-weight": lambda data, rho, cfg, theta=None: mom_weight(
        data, _weight_theta(data, theta)),
}


def run_estimator(name: str, data: Dataset, rho_star: float, cfg: EstimatorConfig,
                  theta=None) -> Estimate:
    try:
        fn = ESTIMATORS[name]
    except KeyError:
        raise DomainError(
            f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None
    return fn(data, rho_star, cfg, theta)
