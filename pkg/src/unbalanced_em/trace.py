"""Iteration traces and the generic fixed-point driver."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import format_float


class DivergenceError(RuntimeError):
    """An iterate became non-finite; ``trace`` holds the iterates up to that point."""

    def __init__(self, message: str, trace: "IterationTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class IterationTrace:
    """``iterates[t]`` is ``x_t``; ``residuals[t - 1] = ||x_t - x_{t-1}||``."""

    iterates: np.ndarray
    residuals: np.ndarray
    converged: bool
    elapsed: float = field(default=0.0, compare=False)

    def __post_init__(self):
        its = np.array(self.iterates, dtype=float)
        if its.ndim == 1:
            its = its[:, None]
        res = np.array(self.residuals, dtype=float).reshape(-1)
        if its.shape[0] != res.size + 1:
            raise ValueError(
                f"{its.shape[0]} iterates inconsistent with {res.size} residuals"
            )
        its.setflags(write=False)
        res.setflags(write=False)
        object.__setattr__(self, "iterates", its)
        object.__setattr__(self, "residuals", res)

    @property
    def iterations_used(self) -> int:
        return self.residuals.size

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def scalar(self) -> bool:
        return self.iterates.shape[1] == 1

    def state(self, t: int):
        x = self.iterates[t]
        return float(x[0]) if self.scalar else x.copy()

    def to_csv(self, path) -> Path:
        """Columns ``t, state0..state{k-1}, residual``; the ``t = 0`` residual is empty."""
        path = Path(path)
        k = self.iterates.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *[f"state{j}" for j in range(k)], "residual"])
            for t, x in enumerate(self.iterates):
                res = "" if t == 0 else format_float(self.residuals[t - 1])
                w.writerow([t, *[format_float(v) for v in x], res])
        return path


def iterate_map(fn, x0, tol: float = 1e-8, max_iter: int = 10_000,
                fixed_steps: bool = False) -> IterationTrace:
    """Run ``x_{t+1} = fn(x_t)``.

    Stops once ``||x_{t+1} - x_t|| <= tol`` unless ``fixed_steps`` is set, in
    which case exactly ``max_iter`` steps are taken.  A non-finite iterate
    raises ``DivergenceError`` carrying the partial trace.
    """
    if not tol >= 0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    start = time.perf_counter()
    scalar = np.ndim(x0) == 0
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    iterates = [x]
    residuals = []
    converged = False
    for _ in range(max_iter):
        nxt = fn(float(x[0])) if scalar else fn(x)
        nxt = np.atleast_1d(np.asarray(nxt, dtype=float))
        if not np.all(np.isfinite(nxt)):
            trace = IterationTrace(iterates, residuals, False,
                                   time.perf_counter() - start)
            raise DivergenceError(f"non-finite iterate after {len(residuals)} steps",
                                  trace)
        r = float(np.linalg.norm(nxt - x))
        iterates.append(nxt)
        residuals.append(r)
        x = nxt
        if r <= tol:
            converged = True
            if not fixed_steps:
                break
    return IterationTrace(iterates, residuals, converged, time.perf_counter() - start)
