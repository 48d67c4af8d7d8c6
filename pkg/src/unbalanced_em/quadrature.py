"""Gauss-Hermite rules for expectations against the standard normal.

Convention: ``sum(weights) == 1`` and ``sum(weights * g(nodes)) ~= E[g(Z)]``
for ``Z ~ N(0, 1)`` (probabilists' Hermite weight).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

DEFAULT_ORDER = 80
MAX_ORDER_1D = 4096
MAX_ORDER_2D = 1024

# order needed for ~1e-12 accuracy on E[p(Z) tanh(s Z + c)] grows like s**2;
# the constant comes from convergence measurements against adaptive quadrature
_ORDER_PER_SLOPE_SQ = 100.0


@lru_cache(maxsize=None)
def _golub_welsch(order: int) -> tuple[np.ndarray, np.ndarray]:
    # Jacobi matrix of the monic probabilists' Hermite recurrence
    off = np.sqrt(np.arange(1, order, dtype=float))
    x = eigvalsh_tridiagonal(np.zeros(order), off)
    x = 0.5 * (x - x[::-1])

    # Christoffel weights 1 / sum_k p_k(x)^2 with orthonormal p_k; equal to the
    # squared first eigenvector components but without the O(order^2) memory.
    # Values are rescaled on the fly because p_k(x) ~ exp(x^2 / 4) overflows.
    p_prev = np.zeros(order)
    p_cur = np.ones(order)
    acc = np.ones(order)
    log_scale = np.zeros(order)
    for k in range(1, order):
        p_next = (x * p_cur - math.sqrt(k - 1) * p_prev) / math.sqrt(k)
        p_prev, p_cur = p_cur, p_next
        acc += p_cur * p_cur
        big = np.abs(p_cur) > 1e150
        if big.any():
            p_prev[big] *= 1e-150
            p_cur[big] *= 1e-150
            acc[big] *= 1e-300
            log_scale[big] += 150.0 * math.log(10.0)
    with np.errstate(under="ignore"):
        w = np.exp(-np.log(acc) - 2.0 * log_scale)
    w = 0.5 * (w + w[::-1])
    w /= w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @classmethod
    def gauss_hermite(cls, order: int = DEFAULT_ORDER) -> "QuadratureGrid":
        """Nodes and weights via Golub-Welsch; cached per order."""
        order = int(order)
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        x, w = _golub_welsch(order)
        return cls(x, w, order)

    def expect(self, fn, loc: float = 0.0, scale: float = 1.0) -> float:
        """``E[fn(loc + scale * Z)]`` for ``Z ~ N(0, 1)``."""
        return float(self.weights @ fn(loc + scale * self.nodes))

    def refined(self, slope: float, max_order: int = MAX_ORDER_1D) -> "QuadratureGrid":
        """A grid accurate for integrands ``tanh(slope * z + c)`` times a polynomial.

        The rule never goes below this grid's own order.
        """
        need = required_order(slope, max_order)
        if need <= self.order:
            return self
        return QuadratureGrid.gauss_hermite(need)


def required_order(slope: float, max_order: int = MAX_ORDER_1D) -> int:
    need = math.ceil(_ORDER_PER_SLOPE_SQ * float(slope) ** 2)
    return int(min(max(need, 1), max_order))


def default_grid() -> QuadratureGrid:
    return QuadratureGrid.gauss_hermite(DEFAULT_ORDER)
