"""Population (infinite-sample) EM maps evaluated by Gauss-Hermite quadrature.

Every expectation over the two-component mixture is written as the
weighted sum of two shifted standard-normal expectations, and every
standard-normal expectation uses a :class:`QuadratureGrid`.  When the
tanh inside an integrand is steep the grid is refined automatically (see
:meth:`QuadratureGrid.refined`); pass ``adaptive=False`` to pin the order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    DomainError,
    MixtureParams,
    UnidentifiableError,
    delta_to_rho,
    rho_to_beta,
)
from .quadrature import MAX_ORDER_2D, QuadratureGrid, default_grid
from .trace import IterationTrace, iterate_map

MIN_GRID_ORDER = 40


def _check_delta(delta: float, name: str) -> float:
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {delta!r}")
    return delta


def _check_grid(grid: QuadratureGrid) -> QuadratureGrid:
    if grid.order < MIN_GRID_ORDER:
        raise DomainError(f"quadrature order must be >= {MIN_GRID_ORDER}, got {grid.order}")
    return grid


def _sech2(x):
    # exp(-2|x|) form: no overflow and no 1 - tanh^2 cancellation in the tails
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


@dataclass(frozen=True)
class PopMeanMap1D:
    """``theta -> E[X tanh(X theta + beta_iter)]`` for ``X ~ (1-d*) N(eta,1) + d* N(-eta,1)``.

    ``delta_iter`` is the weight assumed inside the iteration; it defaults to
    the true ``delta_star`` (the matched iteration).
    """

    eta: float
    delta_star: float
    delta_iter: float | None = None
    grid: QuadratureGrid = field(default_factory=default_grid)
    adaptive: bool = True

    def __post_init__(self):
        if not self.eta >= 0:
            raise DomainError(f"eta must be >= 0, got {self.eta}")
        _check_delta(self.delta_star, "delta_star")
        if self.delta_iter is None:
            object.__setattr__(self, "delta_iter", self.delta_star)
        _check_delta(self.delta_iter, "delta_iter")
        _check_grid(self.grid)

    @property
    def beta(self) -> float:
        return rho_to_beta(delta_to_rho(self.delta_iter))

    def _grid_for(self, theta) -> QuadratureGrid:
        if not self.adaptive:
            return self.grid
        return self.grid.refined(float(np.max(np.abs(theta), initial=0.0)))

    def _expect(self, theta, integrand):
        # integrand(x, arg) with x the sample value and arg = x * theta + beta
        theta = np.asarray(theta, dtype=float)
        g = self._grid_for(theta)
        th = theta.reshape(-1, 1)
        out = np.zeros(th.shape[0])
        for mass, loc in ((1.0 - self.delta_star, self.eta), (self.delta_star, -self.eta)):
            x = loc + g.nodes
            out += mass * (integrand(x, th * x + self.beta) @ g.weights)
        return out.reshape(theta.shape) if theta.ndim else float(out[0])

    def __call__(self, theta):
        return self._expect(theta, lambda x, u: x * np.tanh(u))

    def deriv(self, theta, order: int = 1):
        """First derivative ``E[X^2 sech^2]`` or second ``-2 E[X^3 tanh sech^2]``."""
        if order == 1:
            return self._expect(theta, lambda x, u: x * x * _sech2(u))
        if order == 2:
            return self._expect(theta, lambda x, u: -2.0 * x**3 * np.tanh(u) * _sech2(u))
        raise ValueError(f"derivative order must be 1 or 2, got {order!r}")


def _tanh_diff(a, b, a_minus_b):
    # tanh(a) - tanh(b) = sinh(a - b) / (cosh(a) cosh(b)); the caller supplies a - b
    # exactly so nothing cancels
    ea, eb = np.exp(-2.0 * np.abs(a)), np.exp(-2.0 * np.abs(b))
    return 4.0 * np.sinh(a_minus_b) * np.exp(-np.abs(a) - np.abs(b)) / ((1.0 + ea) * (1.0 + eb))


def mean_error_step(map: PopMeanMap1D, err: float) -> float:
    """``f(eta + err) - eta`` for the matched map, accurate relative to ``err``.

    Uses ``f(eta) = eta`` and expands ``f(eta + err) - f(eta)`` through a
    cancellation-free tanh difference, so errors far below the quadrature
    floor of ``f`` itself are still resolved.
    """
    if map.delta_iter != map.delta_star:
        raise DomainError("the error form needs the matched map (delta_iter == delta_star)")
    eta, err = map.eta, float(err)
    theta = eta + err
    g = map._grid_for(np.array([eta, theta]))
    out = 0.0
    for mass, loc in ((1.0 - map.delta_star, eta), (map.delta_star, -eta)):
        x = loc + g.nodes
        diff = _tanh_diff(x * theta + map.beta, x * eta + map.beta, x * err)
        out += mass * float(g.weights @ (x * diff))
    return out


def mean_error_trace(eta: float, delta: float, theta0: float, steps: int,
                     grid: QuadratureGrid | None = None) -> np.ndarray:
    """``theta_t - eta`` for ``t = 0..steps`` of the population iteration, in error form."""
    m = PopMeanMap1D(eta, delta, grid=grid or default_grid())
    errs = [float(theta0) - eta]
    for _ in range(steps):
        errs.append(mean_error_step(m, errs[-1]))
    return np.array(errs)


def pop_mean_1d(map: PopMeanMap1D, theta):
    return map(theta)


def pop_mean_1d_deriv(map: PopMeanMap1D, theta, order: int = 1):
    return map.deriv(theta, order)


@dataclass(frozen=True)
class SignalOrthogonalMap:
    """Signal and orthogonal components of the population mean iteration.

    With ``V ~ (1-delta) N(eta,1) + delta N(-eta,1)`` and an independent
    ``W ~ N(0,1)``::

        F(a, b) = E[V tanh(a V + b W + beta)]
        G(a, b) = E[W tanh(a V + b W + beta)]

    ``beta`` uses ``delta_iter`` (defaults to ``delta``).  Expectations are
    tensor-product Gauss-Hermite sums over ``(V, W)``.
    """

    eta: float
    delta: float
    grid: QuadratureGrid = field(default_factory=default_grid)
    delta_iter: float | None = None
    adaptive: bool = True

    def __post_init__(self):
        if not self.eta >= 0:
            raise DomainError(f"eta must be >= 0, got {self.eta}")
        _check_delta(self.delta, "delta")
        if self.delta_iter is None:
            object.__setattr__(self, "delta_iter", self.delta)
        _check_delta(self.delta_iter, "delta_iter")
        _check_grid(self.grid)

    @property
    def beta(self) -> float:
        return rho_to_beta(delta_to_rho(self.delta_iter))

    def _grids(self, a: float, b: float):
        if not self.adaptive:
            return self.grid, self.grid
        # along each axis the nearest tanh pole sits at distance pi / (2 |slope|)
        return (self.grid.refined(abs(a), MAX_ORDER_2D),
                self.grid.refined(abs(b), MAX_ORDER_2D))

    def _both(self, a: float, b: float) -> tuple[float, float]:
        a, b = float(a), float(b)
        gv, gw = self._grids(a, b)
        w_nodes = gw.nodes
        f_val = g_val = 0.0
        for mass, loc in ((1.0 - self.delta, self.eta), (self.delta, -self.eta)):
            v = loc + gv.nodes
            t = np.tanh(a * v[:, None] + b * w_nodes[None, :] + self.beta)
            inner_w = t @ gw.weights
            inner_wz = t @ (gw.weights * w_nodes)
            f_val += mass * float(gv.weights @ (v * inner_w))
            g_val += mass * float(gv.weights @ inner_wz)
        return f_val, g_val

    def F(self, a: float, b: float) -> float:
        return self._both(a, b)[0]

    def G(self, a: float, b: float) -> float:
        return self._both(a, b)[1]

    def step(self, state) -> np.ndarray:
        a, b = state
        return np.array(self._both(a, b))


def signal_map(map: SignalOrthogonalMap, a: float, b: float) -> float:
    return map.F(a, b)


def orthogonal_map(map: SignalOrthogonalMap, a: float, b: float) -> float:
    return map.G(a, b)


def pop_mean(theta, rho: float, params: MixtureParams,
             grid: QuadratureGrid | None = None) -> np.ndarray:
    """The d-dimensional population iteration ``f(theta, rho | theta*, rho*)``.

    Decomposes ``theta = a theta_hat* + b xi`` and evaluates ``F`` and ``G``
    (the iterate stays in the span of ``theta`` and ``theta*``).
    """
    grid = grid or default_grid()
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != params.theta_star.shape:
        raise DomainError(f"dimension mismatch: {theta.shape} vs {params.theta_star.shape}")
    eta = params.eta
    if eta > 0:
        u = params.theta_star / eta
    else:
        # V is symmetric when eta = 0; any unit direction works
        nrm = np.linalg.norm(theta)
        u = theta / nrm if nrm > 0 else np.eye(theta.size)[0]
    a = float(theta @ u)
    perp = theta - a * u
    b = float(np.linalg.norm(perp))
    xi = perp / b if b > 0 else np.zeros_like(theta)
    m = SignalOrthogonalMap(eta, params.delta_star, grid, delta_iter=(1.0 - rho) / 2.0)
    F, G = m._both(a, b)
    return F * u + G * xi


@dataclass(frozen=True)
class PopWeightMap:
    """``rho -> E[tanh(||theta|| V + beta_rho)]`` for the projected mixture ``V``.

    ``V ~ ((1+rho*)/2) N(c, 1) + ((1-rho*)/2) N(-c, 1)`` with
    ``c = <theta / ||theta||, theta_star>``.
    """

    theta: np.ndarray
    theta_star: np.ndarray
    rho_star: float
    grid: QuadratureGrid = field(default_factory=default_grid)
    adaptive: bool = True

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta, dtype=float))
        ts = np.atleast_1d(np.asarray(self.theta_star, dtype=float))
        if th.shape != ts.shape:
            raise DomainError(f"dimension mismatch: {th.shape} vs {ts.shape}")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "theta_star", ts)
        if not abs(self.rho_star) < 1:
            raise DomainError(f"|rho_star| must be < 1, got {self.rho_star}")
        _check_grid(self.grid)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.theta))

    @property
    def projection(self) -> float:
        """``<theta_hat, theta_star>``; zero when ``theta = 0``."""
        nrm = self.norm
        return float(self.theta @ self.theta_star) / nrm if nrm > 0 else 0.0

    @property
    def inner(self) -> float:
        return float(self.theta @ self.theta_star)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(np.abs(rho) >= 1.0 - 1e-12):
            raise DomainError("|rho| must be < 1 - 1e-12")
        beta = np.arctanh(rho).reshape(-1, 1)
        s = self.norm
        g = self.grid.refined(s) if self.adaptive else self.grid
        c = self.projection
        out = np.zeros(beta.shape[0])
        p_plus = (1.0 + self.rho_star) / 2.0
        for mass, loc in ((p_plus, c), (1.0 - p_plus, -c)):
            v = loc + g.nodes
            out += mass * (np.tanh(s * v + beta) @ g.weights)
        return out.reshape(rho.shape) if rho.ndim else float(out[0])

    def deriv_at_one(self) -> float:
        """Closed-form slope of ``h`` at ``rho = 1``."""
        s2 = self.norm**2
        c = self.inner
        p = (1.0 + self.rho_star) / 2.0
        return math.exp(2.0 * s2) * (p * math.exp(-2.0 * c) + (1.0 - p) * math.exp(2.0 * c))


def pop_weight(map: PopWeightMap, rho):
    return map(rho)


def weight_deriv_at_one(map: PopWeightMap) -> float:
    return map.deriv_at_one()


def _bisect(g, lo: float, hi: float, glo: float, tol: float, max_steps: int = 200) -> float:
    # stop once |g| <= tol and the bracket is below 1e-12 (relative); max_steps
    # bounds the loop when tol sits under the evaluation noise
    mid = 0.5 * (lo + hi)
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        gm = float(g(mid))
        if gm == 0.0:
            return mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if abs(gm) <= tol and hi - lo <= 1e-12 * max(1.0, abs(mid)):
            break
    return mid


def find_fixed_points_1d(fn, interval, scan_points: int = 2000, tol: float = 1e-10,
                         merge: float = 1e-6) -> list[float]:
    """Roots of ``fn(x) - x`` on ``[lo, hi]``.

    ``fn`` must accept numpy arrays.  Sign changes of ``fn(x) - x`` on a
    uniform scan are refined by bisection until ``|fn(x) - x| <= tol``;
    roots closer than ``merge`` collapse to one.  Tangential roots (no sign
    change) are not detected.
    """
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if scan_points < 100:
        raise ValueError(f"scan_points must be >= 100, got {scan_points}")
    xs = np.linspace(lo, hi, scan_points)
    gs = np.asarray(fn(xs), dtype=float) - xs

    def g(x):
        return float(np.asarray(fn(np.array([x])), dtype=float)[0]) - x

    roots = [float(x) for x, v in zip(xs, gs) if v == 0.0]
    for i in np.nonzero(gs[:-1] * gs[1:] < 0)[0]:
        roots.append(_bisect(g, xs[i], xs[i + 1], gs[i], tol))
    roots.sort()
    merged: list[float] = []
    for r in roots:
        if merged and r - merged[-1] < merge:
            continue
        merged.append(r)
    return merged


def find_weight_fixed_point(map: PopWeightMap, tol: float = 1e-10) -> float | None:
    """The interior fixed point of ``h`` if ``weight_deriv_at_one > 1``, else ``None``."""
    if map.inner == 0.0:
        raise UnidentifiableError("<theta, theta_star> = 0: the weight is not identifiable")
    if map.deriv_at_one() <= 1.0:
        return None
    edge = 1e-9
    lo, hi = -1.0 + edge, 1.0 - edge

    def g(r):
        return map(r) - r

    glo, ghi = g(lo), g(hi)
    if glo * ghi < 0:
        return _bisect(g, lo, hi, glo, tol)
    roots = find_fixed_points_1d(map, (lo, hi), scan_points=4000, tol=tol)
    return roots[0] if roots else None


def s_function(u, beta: float, delta: float):
    """``-tanh(u+b) + tanh(u-b) - sech^2(u+b)/(2 delta) + sech^2(u-b)/(2(1-delta))``.

    Evaluated in closed form: with ``E = exp(2u)`` the expression equals
    ``2 (2 delta - 1) E (1 + E) / ((E (1-delta) + delta)^2 (E delta + 1 - delta)^2)``,
    whose sign is visible term by term.  The direct form cancels to leading
    order for large ``|u|`` and loses its sign.
    """
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    delta = _check_delta(delta, "delta")
    if abs(beta - math.atanh(1.0 - 2.0 * delta)) > 1e-10:
        raise ValueError(f"beta={beta} inconsistent with delta={delta}")
    u = np.asarray(u, dtype=float)
    # for u > 0 multiply through by exp(-8u) so that y = exp(-2|u|) <= 1 throughout
    y = np.exp(-2.0 * np.abs(u))
    pos = u > 0
    a = np.where(pos, (1.0 - delta) + delta * y, y * (1.0 - delta) + delta)
    b = np.where(pos, delta + (1.0 - delta) * y, y * delta + (1.0 - delta))
    top = np.where(pos, y * y * (1.0 + y), y * (1.0 + y))
    s = 2.0 * (2.0 * delta - 1.0) * top / (a * a * b * b)
    return s if s.ndim else float(s)


def mean_iteration_trace(eta: float, delta: float, theta0: float, tol: float = 1e-8,
                         max_iter: int = 10_000, fixed_steps: bool = False,
                         grid: QuadratureGrid | None = None) -> IterationTrace:
    """Population iteration ``theta_{t+1} = f(theta_t | eta, delta)`` from ``theta0``."""
    m = PopMeanMap1D(eta, delta, grid=grid or default_grid())
    return iterate_map(m, float(theta0), tol, max_iter, fixed_steps)
