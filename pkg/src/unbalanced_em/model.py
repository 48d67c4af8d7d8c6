"""Symmetric two-component Gaussian mixture: parameters, sampling and losses.

Samples follow ``X = S * theta_star + Z`` with ``P[S = 1] = (1 + rho_star) / 2``
and ``Z ~ N(0, I_d)``.  The weight imbalance ``rho`` is interchangeable with
the smaller mixing weight ``delta = (1 - rho) / 2`` and with the
inverse-temperature ``beta = atanh(rho)``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

# |rho| at or beyond this is rejected so that beta and tanh stay finite
RHO_LIMIT = 1.0 - 1e-12


class DomainError(ValueError):
    """A parameter lies outside the model's valid range."""


class UnidentifiableError(ValueError):
    """The requested quantity is not identifiable from the inputs."""


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not np.isfinite(rho) or abs(rho) >= RHO_LIMIT:
        raise DomainError(f"|rho| must be < 1 - 1e-12, got {rho!r}")
    return rho


def rho_to_beta(rho: float) -> float:
    """Inverse temperature ``0.5 * log((1 + rho) / (1 - rho))``."""
    rho = _check_rho(rho)
    return float(np.arctanh(rho))


def beta_to_rho(beta: float) -> float:
    return float(np.tanh(beta))


class Direction(str, Enum):
    RHO_TO_DELTA = "rho_to_delta"
    DELTA_TO_RHO = "delta_to_rho"


def delta_rho_convert(value: float, direction: Direction | str) -> float:
    """Convert between ``rho`` and ``delta = (1 - rho) / 2``."""
    direction = Direction(direction)
    value = float(value)
    if direction is Direction.RHO_TO_DELTA:
        _check_rho(value)
        return (1.0 - value) / 2.0
    if not 0.0 < value < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {value!r}")
    return 1.0 - 2.0 * value


def rho_to_delta(rho: float) -> float:
    return delta_rho_convert(rho, Direction.RHO_TO_DELTA)


def delta_to_rho(delta: float) -> float:
    return delta_rho_convert(delta, Direction.DELTA_TO_RHO)


@dataclass(frozen=True)
class MixtureParams:
    """Ground truth ``(theta_star, rho_star)``; ``d`` is inferred from ``theta_star``."""

    theta_star: np.ndarray
    rho_star: float

    def __post_init__(self):
        theta = np.array(self.theta_star, dtype=float).reshape(-1)
        if theta.size < 1:
            raise DomainError("theta_star must have at least one coordinate")
        if not np.all(np.isfinite(theta)):
            raise DomainError("theta_star must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "rho_star", _check_rho(self.rho_star))

    @classmethod
    def from_eta(cls, eta: float, rho_star: float, d: int = 1) -> "MixtureParams":
        """Place the mean ``eta * e_1`` in ``d`` dimensions."""
        if d < 1:
            raise DomainError(f"d must be >= 1, got {d}")
        if eta < 0:
            raise DomainError(f"eta must be >= 0, got {eta}")
        theta = np.zeros(d)
        theta[0] = eta
        return cls(theta, rho_star)

    @property
    def d(self) -> int:
        return self.theta_star.size

    @property
    def eta(self) -> float:
        return float(np.linalg.norm(self.theta_star))

    @property
    def delta_star(self) -> float:
        return rho_to_delta(self.rho_star)

    @property
    def beta_star(self) -> float:
        return rho_to_beta(self.rho_star)

    def __eq__(self, other):
        if not isinstance(other, MixtureParams):
            return NotImplemented
        return self.rho_star == other.rho_star and np.array_equal(
            self.theta_star, other.theta_star
        )

    def __hash__(self):
        return hash((self.rho_star, self.theta_star.tobytes()))


@dataclass(frozen=True)
class GlobalBounds:
    """Caps on the truth: ``||theta_star|| <= c_theta`` and ``|rho_star| <= c_rho``."""

    c_theta: float
    c_rho: float

    def __post_init__(self):
        if not self.c_theta > 0:
            raise DomainError(f"c_theta must be > 0, got {self.c_theta}")
        if not 0 < self.c_rho < 1:
            raise DomainError(f"c_rho must lie in (0, 1), got {self.c_rho}")

    @property
    def c_beta(self) -> float:
        return 0.5 * float(np.log((1 + self.c_rho) / (1 - self.c_rho)))

    def contains(self, params: MixtureParams) -> bool:
        return params.eta <= self.c_theta and abs(params.rho_star) <= self.c_rho


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *key)``.

    Distinct keys give statistically independent streams, so trials can run
    in any order or in parallel and still reproduce bit for bit.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 64-bit child seed for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class Dataset:
    samples: np.ndarray
    seed: int
    params_used: MixtureParams

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise DomainError("samples must be a non-empty n x d matrix")
        if x.shape[1] != self.params_used.d:
            raise DomainError(
                f"samples have d={x.shape[1]} but params have d={self.params_used.d}"
            )
        if not np.all(np.isfinite(x)):
            raise DomainError("samples must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
        object.__setattr__(self, "seed", seed)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def to_csv(self, path, sidecar: bool = True) -> Path:
        """Write one row per sample with header ``x0,...,x{d-1}``.

        A JSON sidecar with the generation metadata is written next to it
        (same stem, ``.json`` suffix) unless ``sidecar`` is false.
        """
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j}" for j in range(self.d)])
            for row in self.samples:
                w.writerow([format_float(v) for v in row])
        if sidecar:
            meta = {
                "n": self.n,
                "d": self.d,
                "seed": self.seed,
                "theta_star": [float(v) for v in self.params_used.theta_star],
                "rho_star": self.params_used.rho_star,
            }
            path.with_suffix(".json").write_text(dumps_json(meta))
        return path

    @classmethod
    def from_csv(cls, path, sidecar=None) -> "Dataset":
        path = Path(path)
        sidecar = Path(sidecar) if sidecar is not None else path.with_suffix(".json")
        meta = json.loads(sidecar.read_text())
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header != [f"x{j}" for j in range(len(header))]:
            raise DomainError(f"unexpected CSV header {header!r}")
        x = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(
            len(body), len(header)
        )
        params = MixtureParams(np.array(meta["theta_star"], dtype=float), meta["rho_star"])
        if x.shape != (meta["n"], meta["d"]):
            raise DomainError(
                f"CSV shape {x.shape} disagrees with sidecar ({meta['n']}, {meta['d']})"
            )
        return cls(x, meta["seed"], params)


def sample(params: MixtureParams, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. samples; identical ``(params, n, seed)`` give identical data."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = make_rng(seed)
    p_plus = (1.0 + params.rho_star) / 2.0
    signs = np.where(rng.random(n) < p_plus, 1.0, -1.0)
    noise = rng.standard_normal((n, params.d))
    x = signs[:, None] * params.theta_star[None, :] + noise
    return Dataset(x, seed, params)


class LossKind(str, Enum):
    L2 = "L2"
    L0 = "L0"


def loss(theta_hat, theta_star, kind: LossKind | str = LossKind.L2) -> float:
    """``L2``: ``||theta_hat - theta_star||``; ``L0``: the same up to a global sign."""
    a = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    b = np.atleast_1d(np.asarray(theta_star, dtype=float))
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.shape} vs {b.shape}")
    kind = LossKind(kind)
    plus = float(np.linalg.norm(a - b))
    if kind is LossKind.L2:
        return plus
    return min(plus, float(np.linalg.norm(a + b)))


def posterior_sign(theta, rho: float, x) -> float | np.ndarray:
    """``E[S | X = x] = tanh(<theta, x> + beta_rho)``.

    ``x`` may be a single point or an ``n x d`` matrix of points.
    """
    beta = rho_to_beta(rho)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.asarray(x, dtype=float)
    u = x @ theta if x.ndim > 1 else float(np.dot(np.atleast_1d(x), theta))
    return np.tanh(u + beta)


def _logcosh(u):
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def log_likelihood(samples, theta, rho: float) -> float:
    """Observed-data log-likelihood ``sum_i log p_{theta,rho}(x_i)``."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    beta = rho_to_beta(rho)
    n, d = x.shape
    sq = np.einsum("ij,ij->i", x, x)
    u = x @ theta
    per = (
        -0.5 * d * np.log(2 * np.pi)
        - 0.5 * sq
        - 0.5 * float(theta @ theta)
        + _logcosh(u + beta)
        - _logcosh(beta)
    )
    return float(per.sum())


def format_float(v: float) -> str:
    """17 significant digits: round-trips every double exactly."""
    return format(float(v), ".17g")


def dumps_json(obj) -> str:
    # json uses repr for floats, which already round-trips exactly
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
