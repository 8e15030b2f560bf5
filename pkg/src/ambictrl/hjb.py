"""
Free-boundary HJB solver for the reduced game.

The value function V(.; eps) solves

    [V'' + H(x, V, V')] ^ V' ^ [r - V'] = 0 on [0, b],   V'(0) = 0,  V'(b) = r,

with H(x, y, z) = (2/sigma^2)(m z + sigma^2 eps z^2 / 2 - discount y + h(x)).

It is built by shooting: the Cauchy problem k'' = -H(x, k, F(k')), k(0) = s,
k'(0) = 0, with F a C^1 clamp of the slope, is integrated for trial values of s.
The smallest s whose slope touches r tangentially gives V = k on [0, beta] and
the affine continuation with slope r on [beta, b].
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit
from scipy.optimize import brentq

from ambictrl.bracketing import BracketConfig, BracketNotFoundError, find_bracket
from ambictrl.checks import CheckCollector
from ambictrl.model import InstanceValidationError, MultiClassInstance, ReducedInstance, holding_cost

logger = logging.getLogger(__name__)

DEFAULT_CELLS = 4096
MIN_CELLS = 1000
PASTE_REL_TOL = 1e-6
CLOSE_REL_TOL = 1e-3
SLOPE_TOL = 1e-8
GRADIENT_TOL = 1e-10
NEWTON_STEPS = 2

ArrayLike = Union[float, Sequence[float], np.ndarray]


class IntegrationError(ArithmeticError):
    """Raised when the Cauchy integration leaves the finite range."""

    def __init__(self, message: str, s: float) -> None:
        super().__init__(message)
        self.s = s


class ShootingError(RuntimeError):
    """Raised when the shooting bracket cannot be formed or bisection does not converge."""

    def __init__(self, message: str, eps: float, iterations: int = 0) -> None:
        super().__init__(message)
        self.eps = eps
        self.iterations = iterations


class SolverConfigError(ValueError):
    """Raised for out-of-range solver settings."""

    def __init__(self, message: str, field_name: str) -> None:
        super().__init__(message)
        self.field_name = field_name


class Classification(str, Enum):
    TOO_LOW = "TooLow"
    TOO_HIGH = "TooHigh"
    PASTED = "Pasted"


@dataclass(frozen=True)
class SolverConfig:
    """
    Numerical settings of the shooting solver.

    Attributes:
        cells: Number of uniform cells on [0, b]
        paste_tol: Pasting tolerance on k''(beta); None means 1e-6 * (2/sigma^2) * h(b)
        s_tol: Bracket width on s at which bisection stops looking for a pasted trace
        max_iter: Bisection iteration cap
        min_cells: Smallest admissible mesh
        bracket_attempts: Doublings allowed when searching the lower end of the bracket
    """

    cells: int = DEFAULT_CELLS
    paste_tol: Optional[float] = None
    s_tol: float = 1e-14
    max_iter: int = 200
    min_cells: int = MIN_CELLS
    bracket_attempts: int = 60

    def __post_init__(self) -> None:
        if self.min_cells < 1:
            raise SolverConfigError("min_cells must be positive", "min_cells")
        if self.cells < self.min_cells:
            raise SolverConfigError(f"cells must be at least {self.min_cells}, got {self.cells}", "cells")
        if self.paste_tol is not None and not self.paste_tol > 0.0:
            raise SolverConfigError("paste_tol must be positive", "paste_tol")
        if not self.s_tol > 0.0:
            raise SolverConfigError("s_tol must be positive", "s_tol")
        if self.max_iter < 1:
            raise SolverConfigError("max_iter must be positive", "max_iter")

    def resolve_paste_tol(self, red: ReducedInstance) -> float:
        return self.paste_tol if self.paste_tol is not None else default_paste_tol(red)


def default_paste_tol(red: ReducedInstance) -> float:
    return PASTE_REL_TOL * red.paste_scale


@dataclass(frozen=True)
class ClampSpec:
    """
    The slope clamp F induced by the rejection price r.

    F(z) = z on [-r, r], -r/2 + 2|z| - z^2/(2r) (with the sign of z) on r < |z| < 2r,
    and +-3r/2 beyond. F is C^1 with |F| <= 3r/2 and |F'| <= 1.
    """

    r: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and self.r > 0.0):
            raise InstanceValidationError("clamp level r must be positive", "r")

    def __call__(self, z: ArrayLike) -> Union[float, np.ndarray]:
        return clamp(self, z)

    def derivative(self, z: ArrayLike) -> Union[float, np.ndarray]:
        a = np.abs(np.asarray(z, dtype=np.float64))
        out = np.where(a <= self.r, 1.0, np.where(a < 2.0 * self.r, 2.0 - a / self.r, 0.0))
        return float(out) if out.ndim == 0 else out


def clamp(spec: ClampSpec, z: ArrayLike) -> Union[float, np.ndarray]:
    """Apply the clamp F to a slope or an array of slopes."""
    za = np.asarray(z, dtype=np.float64)
    a = np.abs(za)
    r = spec.r
    blend = -0.5 * r + 2.0 * a - a * a / (2.0 * r)
    out = np.where(a <= r, za, np.sign(za) * np.where(a < 2.0 * r, blend, 1.5 * r))
    return float(out) if out.ndim == 0 else out


def hamiltonian(red: ReducedInstance, eps: float, x: ArrayLike, y: ArrayLike, z: ArrayLike) -> Union[float, np.ndarray]:
    """
    H(x, y, z) = (2/sigma^2)(m z + sigma^2 eps z^2 / 2 - discount y + h(x)).

    Raises:
        InstanceValidationError: If x lies outside [0, b]
    """
    h = holding_cost(red, x)
    za = np.asarray(z, dtype=np.float64)
    s2 = red.sigma**2
    out = (2.0 / s2) * (red.m * za + 0.5 * s2 * eps * za * za - red.discount * np.asarray(y, dtype=np.float64) + h)
    return float(out) if np.ndim(out) == 0 else out


def hamiltonian_clamped(red: ReducedInstance, eps: float, x: ArrayLike, y: ArrayLike, z: ArrayLike) -> Union[float, np.ndarray]:
    """H_F(x, y, z) = H(x, y, F(z))."""
    return hamiltonian(red, eps, x, y, clamp(ClampSpec(red.r), z))


# Kernels. params = [m, sigma^2 eps / 2, discount, 2 / sigma^2, r]


@njit(cache=True, nogil=True)
def _h_value(x: float, knots_x: np.ndarray, knots_h: np.ndarray, slopes: np.ndarray) -> float:
    j = 0
    n = slopes.shape[0]
    while j < n - 1 and x >= knots_x[j + 1]:
        j += 1
    return knots_h[j] + slopes[j] * (x - knots_x[j])


@njit(cache=True, nogil=True)
def _clamp_scalar(z: float, r: float) -> float:
    a = abs(z)
    if a <= r:
        return z
    if a < 2.0 * r:
        v = -0.5 * r + 2.0 * a - a * a / (2.0 * r)
    else:
        v = 1.5 * r
    return v if z > 0.0 else -v


@njit(cache=True, nogil=True)
def _curvature(
    x: float, y: float, z: float, params: np.ndarray, knots_x: np.ndarray, knots_h: np.ndarray, slopes: np.ndarray
) -> float:
    zf = _clamp_scalar(z, params[4])
    return -params[3] * (params[0] * zf + params[1] * zf * zf - params[2] * y + _h_value(x, knots_x, knots_h, slopes))


@njit(cache=True, nogil=True)
def _rk4(
    x: float, k: float, kp: float, dx: float, params: np.ndarray, knots_x: np.ndarray, knots_h: np.ndarray, slopes: np.ndarray
) -> Tuple[float, float]:
    half = 0.5 * dx
    a1 = kp
    b1 = _curvature(x, k, kp, params, knots_x, knots_h, slopes)
    a2 = kp + half * b1
    b2 = _curvature(x + half, k + half * a1, a2, params, knots_x, knots_h, slopes)
    a3 = kp + half * b2
    b3 = _curvature(x + half, k + half * a2, a3, params, knots_x, knots_h, slopes)
    a4 = kp + dx * b3
    b4 = _curvature(x + dx, k + dx * a3, a4, params, knots_x, knots_h, slopes)
    k_new = k + dx / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    kp_new = kp + dx / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
    return k_new, kp_new


@njit(cache=True, nogil=True)
def _advance(
    x: float, k: float, kp: float, dx: float, params: np.ndarray, knots_x: np.ndarray, knots_h: np.ndarray, slopes: np.ndarray
) -> Tuple[float, float]:
    # split at interior kinks of h so each sub-step sees a linear cost
    x_end = x + dx
    guard = 1e-12 * dx
    for j in range(knots_x.shape[0]):
        xk = knots_x[j]
        if xk > x + guard and xk < x_end - guard:
            k, kp = _rk4(x, k, kp, xk - x, params, knots_x, knots_h, slopes)
            x = xk
    return _rk4(x, k, kp, x_end - x, params, knots_x, knots_h, slopes)


@njit(cache=True, nogil=True)
def _integrate(
    s: float,
    grid: np.ndarray,
    params: np.ndarray,
    knots_x: np.ndarray,
    knots_h: np.ndarray,
    slopes: np.ndarray,
    k: np.ndarray,
    kp: np.ndarray,
    kpp: np.ndarray,
) -> int:
    k[0] = s
    kp[0] = 0.0
    kpp[0] = _curvature(grid[0], s, 0.0, params, knots_x, knots_h, slopes)
    for j in range(grid.shape[0] - 1):
        kn, kpn = _advance(grid[j], k[j], kp[j], grid[j + 1] - grid[j], params, knots_x, knots_h, slopes)
        if not (math.isfinite(kn) and math.isfinite(kpn)):
            return j + 1
        k[j + 1] = kn
        kp[j + 1] = kpn
        kpp[j + 1] = _curvature(grid[j + 1], kn, kpn, params, knots_x, knots_h, slopes)
    return -1


class _CauchyKernel:
    """Binds the reduced data for one value of eps to the compiled kernels."""

    def __init__(self, red: ReducedInstance, eps: float) -> None:
        self.params = np.array([red.m, 0.5 * red.sigma**2 * eps, red.discount, 2.0 / red.sigma**2, red.r])
        self.knots_x = np.array(red.knots_x)
        self.knots_h = np.array(red.knots_h)
        self.slopes = np.array(red.slopes)

    def curvature(self, x: float, k: float, kp: float) -> float:
        return float(_curvature(x, k, kp, self.params, self.knots_x, self.knots_h, self.slopes))

    def advance(self, x: float, k: float, kp: float, dx: float) -> Tuple[float, float]:
        kn, kpn = _advance(x, k, kp, dx, self.params, self.knots_x, self.knots_h, self.slopes)
        return float(kn), float(kpn)

    def integrate(self, s: float, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = grid.shape[0]
        k = np.empty(n)
        kp = np.empty(n)
        kpp = np.empty(n)
        bad = _integrate(s, grid, self.params, self.knots_x, self.knots_h, self.slopes, k, kp, kpp)
        if bad >= 0:
            raise IntegrationError(f"non-finite state at x={grid[bad]:.6g} for s={s:.6g}", s)
        return k, kp, kpp


@dataclass(frozen=True, eq=False)
class CauchyTrace:
    """
    Solution of the Cauchy problem for one initial value s.

    Attributes:
        s: Initial value k(0)
        grid: Uniform mesh on [0, b]
        k, k_prime, k_second: Trace on the mesh
        beta_s: First point where k' reaches r (sub-grid accurate), or b
        pasting_curvature: k'' at beta_s
        classification: TooLow, TooHigh or Pasted
        value_at_beta: k(beta_s)
        paste_tol: Tolerance used for the classification
    """

    s: float
    grid: np.ndarray
    k: np.ndarray
    k_prime: np.ndarray
    k_second: np.ndarray
    beta_s: float
    pasting_curvature: float
    classification: Classification
    value_at_beta: float
    paste_tol: float

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def crosses(self) -> bool:
        return self.beta_s < self.grid[-1]


def _polish_crossing(ker: _CauchyKernel, x0: float, k0: float, kp0: float, width: float, kp_hi: float, r: float) -> float:
    """
    Offset in [0, width] where k' reaches r, starting from the node state (x0, k0, kp0).

    Linear inverse interpolation followed by Newton steps on partial RK4 steps;
    falls back to Brent's method when Newton leaves the cell.
    """

    def gap(delta: float) -> float:
        return ker.advance(x0, k0, kp0, delta)[1] - r

    delta = width * (r - kp0) / (kp_hi - kp0) if kp_hi > kp0 else width
    for _ in range(NEWTON_STEPS):
        k_d, kp_d = ker.advance(x0, k0, kp0, delta)
        curv = ker.curvature(x0 + delta, k_d, kp_d)
        if not curv > 0.0:
            delta = -1.0
            break
        delta -= (kp_d - r) / curv
        if not 0.0 <= delta <= width:
            break
    if 0.0 <= delta <= width and abs(gap(delta)) <= 1e-13 * max(1.0, r):
        return delta
    if gap(width) < 0.0:
        return width
    return float(brentq(gap, 0.0, width, xtol=1e-15, rtol=4.0 * np.finfo(float).eps))


def _locate_crossing(
    ker: _CauchyKernel, grid: np.ndarray, k: np.ndarray, kp: np.ndarray, kpp: np.ndarray, r: float
) -> Optional[Tuple[float, float, float, float]]:
    """First point where k' reaches r: (beta, k, k', k'') or None."""
    hits = np.flatnonzero(kp >= r)
    first_cell = int(hits[0]) - 1 if hits.size else grid.shape[0] - 1
    dx = grid[1] - grid[0]

    # sub-grid touches: k' peaks inside a cell without a node reaching r
    peaks = np.flatnonzero((kpp[:-1] > 0.0) & (kpp[1:] <= 0.0) & (kp[:-1] + kpp[:-1] * dx >= r))
    for j in peaks[peaks < first_cell]:
        x0, k0, kp0 = float(grid[j]), float(k[j]), float(kp[j])
        width = float(grid[j + 1] - grid[j])

        def curvature_at(delta: float) -> float:
            kd, kpd = ker.advance(x0, k0, kp0, delta)
            return ker.curvature(x0 + delta, kd, kpd)

        if curvature_at(width) > 0.0:
            continue
        peak = float(brentq(curvature_at, 0.0, width, xtol=1e-15))
        if ker.advance(x0, k0, kp0, peak)[1] >= r:
            kp_peak = ker.advance(x0, k0, kp0, peak)[1]
            delta = _polish_crossing(ker, x0, k0, kp0, peak, kp_peak, r)
            return _crossing_state(ker, x0, k0, kp0, delta)

    if not hits.size:
        return None
    j = first_cell
    x0, k0, kp0 = float(grid[j]), float(k[j]), float(kp[j])
    delta = _polish_crossing(ker, x0, k0, kp0, float(grid[j + 1] - grid[j]), float(kp[j + 1]), r)
    return _crossing_state(ker, x0, k0, kp0, delta)


def _crossing_state(ker: _CauchyKernel, x0: float, k0: float, kp0: float, delta: float) -> Tuple[float, float, float, float]:
    kb, kpb = ker.advance(x0, k0, kp0, delta)
    return x0 + delta, kb, kpb, ker.curvature(x0 + delta, kb, kpb)


def _uniform_grid(red: ReducedInstance, dx: float, min_cells: int) -> np.ndarray:
    if not (math.isfinite(dx) and dx > 0.0):
        raise SolverConfigError("dx must be a positive real", "dx")
    cells = int(round(red.b / dx))
    if cells < min_cells:
        raise SolverConfigError(f"dx={dx:.6g} gives {cells} cells on [0, b], need at least {min_cells}", "dx")
    return np.linspace(0.0, red.b, cells + 1)


def _trace(ker: _CauchyKernel, red: ReducedInstance, s: float, grid: np.ndarray, paste_tol: float) -> CauchyTrace:
    k, kp, kpp = ker.integrate(s, grid)
    r = red.r
    crossing = _locate_crossing(ker, grid, k, kp, kpp, r)
    if crossing is None or crossing[0] >= red.b:
        beta, k_beta, curv = red.b, float(k[-1]), float(kpp[-1])
        slope_b = float(kp[-1]) if crossing is None else crossing[2]
        if slope_b < r - paste_tol:
            cls = Classification.TOO_LOW
        elif abs(slope_b - r) <= paste_tol:
            cls = Classification.PASTED
        else:
            cls = Classification.TOO_HIGH
    else:
        beta, k_beta, _, curv = crossing
        cls = Classification.PASTED if abs(curv) <= paste_tol else Classification.TOO_HIGH
    return CauchyTrace(
        s=float(s),
        grid=grid,
        k=k,
        k_prime=kp,
        k_second=kpp,
        beta_s=float(beta),
        pasting_curvature=float(curv),
        classification=cls,
        value_at_beta=float(k_beta),
        paste_tol=paste_tol,
    )


def integrate_cauchy(
    red: ReducedInstance,
    eps: float,
    s: float,
    dx: float,
    paste_tol: Optional[float] = None,
    min_cells: int = MIN_CELLS,
) -> CauchyTrace:
    """
    Integrate k'' = -H_F(x, k, k') from k(0) = s, k'(0) = 0 across [0, b] and classify the trace.

    Args:
        red: Reduced instance
        eps: Ambiguity parameter (>= 0)
        s: Initial value
        dx: Mesh step; b/dx is rounded to the nearest number of cells
        paste_tol: Pasting tolerance (default 1e-6 * (2/sigma^2) * h(b))
        min_cells: Smallest admissible number of cells

    Returns:
        The classified trace

    Raises:
        IntegrationError: If the state becomes non-finite
    """
    _check_eps(eps)
    grid = _uniform_grid(red, dx, min_cells)
    tol = paste_tol if paste_tol is not None else default_paste_tol(red)
    return _trace(_CauchyKernel(red, eps), red, s, grid, tol)


def _check_eps(eps: float) -> None:
    if not (math.isfinite(eps) and eps >= 0.0):
        raise SolverConfigError("eps must be a nonnegative real", "eps")


def _is_high(trace: CauchyTrace) -> bool:
    return trace.classification is Classification.TOO_HIGH


@dataclass(frozen=True, eq=False)
class ValueSolution:
    """
    Grid representation of V(.; eps) with its thresholds and solver diagnostics.

    Attributes:
        reduced: Reduced instance (with ``eps`` set to the solved value)
        eps: Ambiguity parameter
        grid, V, V_prime, V_second: Value function and derivatives on the mesh
        s_star: V(0; eps)
        beta: Smallest optimal reflection threshold
        beta_hat: Largest optimal reflection threshold
        shoot_iterations: Bisection iterations used
        residual_sup: sup |V'' + H| over mesh points in [0, beta]
        paste_tol: Pasting tolerance used
        stopped_by_tolerance: Bisection ended on the bracket width rather than on a pasted trace
        classification: Classification of the accepted trace
    """

    reduced: ReducedInstance
    eps: float
    grid: np.ndarray
    V: np.ndarray
    V_prime: np.ndarray
    V_second: np.ndarray
    s_star: float
    beta: float
    beta_hat: float
    shoot_iterations: int
    residual_sup: float
    paste_tol: float
    stopped_by_tolerance: bool = False
    classification: Classification = Classification.PASTED

    @property
    def cells(self) -> int:
        return int(self.grid.shape[0] - 1)

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def value_at(self, x: ArrayLike) -> Union[float, np.ndarray]:
        out = np.interp(np.asarray(x, dtype=np.float64), self.grid, self.V)
        return float(out) if np.ndim(out) == 0 else out

    def slope_at(self, x: ArrayLike) -> Union[float, np.ndarray]:
        out = np.interp(np.asarray(x, dtype=np.float64), self.grid, self.V_prime)
        return float(out) if np.ndim(out) == 0 else out

    def feedback_drift(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """The maximizer's optimal drift eps * sigma * V'(x)."""
        return self.eps * self.reduced.sigma * np.asarray(self.slope_at(x))

    def to_summary(self) -> dict:
        return {
            "s_star": self.s_star,
            "beta": self.beta,
            "beta_hat": self.beta_hat,
            "eps": self.eps,
            "residual_sup": self.residual_sup,
            "iterations": self.shoot_iterations,
            "cells": self.cells,
            "paste_tol": self.paste_tol,
            "stopped_by_tolerance": self.stopped_by_tolerance,
            "classification": self.classification.value,
        }


def residual_profile(
    red: ReducedInstance, eps: float, grid: np.ndarray, V: np.ndarray, V_prime: np.ndarray, V_second: np.ndarray
) -> np.ndarray:
    """V'' + H(x, V, V') at each mesh point."""
    return V_second + np.asarray(hamiltonian(red, eps, grid, V, V_prime))


def _solution_from_trace(red: ReducedInstance, eps: float, trace: CauchyTrace, iterations: int, stopped: bool) -> ValueSolution:
    grid = trace.grid
    beta = trace.beta_s
    V = trace.k.copy()
    Vp = trace.k_prime.copy()
    Vpp = trace.k_second.copy()
    beyond = grid > beta
    V[beyond] = trace.value_at_beta + red.r * (grid[beyond] - beta)
    Vp[beyond] = red.r
    Vpp[beyond] = 0.0

    inside = ~beyond
    residual = residual_profile(red, eps, grid[inside], V[inside], Vp[inside], Vpp[inside])
    sol = ValueSolution(
        reduced=red.with_eps(eps),
        eps=float(eps),
        grid=grid,
        V=V,
        V_prime=Vp,
        V_second=Vpp,
        s_star=float(trace.s),
        beta=beta,
        beta_hat=beta,
        shoot_iterations=iterations,
        residual_sup=float(np.max(np.abs(residual))),
        paste_tol=trace.paste_tol,
        stopped_by_tolerance=stopped,
        classification=trace.classification,
    )
    level_tol = max(trace.paste_tol, abs(trace.pasting_curvature)) * red.sigma**2 / 2.0
    return replace(sol, beta_hat=beta_hat(sol, level_tol=level_tol))


def upper_shooting_bound(red: ReducedInstance, eps: float) -> float:
    """(2|m| r + 2 sigma^2 eps r^2 + h(b) + r sigma^2 / b) / discount, above which traces cross early."""
    s2, r = red.sigma**2, red.r
    return (2.0 * abs(red.m) * r + 2.0 * s2 * eps * r * r + red.h_max + r * s2 / red.b) / red.discount


def shoot(
    red: ReducedInstance,
    eps: float,
    dx: float,
    paste_tol: Optional[float] = None,
    s_tol: float = 1e-14,
    max_iter: int = 200,
    min_cells: int = MIN_CELLS,
    bracket: Optional[BracketConfig] = None,
) -> ValueSolution:
    """
    Solve HJB(eps) by bisection on the initial value of the Cauchy problem.

    Args:
        red: Reduced instance
        eps: Ambiguity parameter (0 gives the risk-neutral problem)
        dx: Mesh step
        paste_tol: Pasting tolerance (default 1e-6 * (2/sigma^2) * h(b))
        s_tol: Bisection width (or floating-point resolution) at which the upper end is
            accepted, provided its curvature at the crossing is within 1e-3 * (2/sigma^2) * h(b)
        max_iter: Bisection iteration cap
        min_cells: Smallest admissible number of cells
        bracket: Search settings for the lower end of the bracket

    Returns:
        The value solution

    Raises:
        ShootingError: If no bracket is found, bisection does not converge, or the
            bracket closes on a kink instead of a pasted trace
    """
    _check_eps(eps)
    grid = _uniform_grid(red, dx, min_cells)
    tol = paste_tol if paste_tol is not None else default_paste_tol(red)
    ker = _CauchyKernel(red, eps)

    def run(s: float) -> CauchyTrace:
        try:
            return _trace(ker, red, s, grid, tol)
        except IntegrationError as e:
            raise ShootingError(f"integration failed at s={s:.6g}: {e}", eps) from e

    s_hi = upper_shooting_bound(red, eps) + 1.0
    hi_trace = run(s_hi)
    if hi_trace.classification is Classification.TOO_LOW:
        raise ShootingError(f"upper bracket s={s_hi:.6g} is not above the pasting value", eps)
    if hi_trace.classification is Classification.PASTED:
        logger.info(f"eps={eps:.6g}: upper bracket pasted directly")
        return _solution_from_trace(red, eps, hi_trace, 0, False)

    bracket = bracket or BracketConfig()
    try:
        found = find_bracket(run, lambda tr: tr.classification is Classification.TOO_LOW, anchor=0.0, config=bracket)
    except BracketNotFoundError as e:
        raise ShootingError(f"no TooLow initial value found: {e}", eps) from e
    s_lo = found.point
    if s_lo >= s_hi:
        raise ShootingError(f"bracket is inverted: s_lo={s_lo:.6g} >= s_hi={s_hi:.6g}", eps)

    lo, hi = s_lo, s_hi
    for iteration in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        trace = run(mid)
        logger.debug(f"eps={eps:.6g} iter {iteration}: s={mid:.12g} -> {trace.classification.value} beta={trace.beta_s:.6g}")
        if trace.classification is Classification.PASTED:
            logger.info(f"eps={eps:.6g}: pasted after {iteration} iterations, s*={mid:.12g}, beta={trace.beta_s:.6g}")
            return _solution_from_trace(red, eps, trace, iteration, False)
        if _is_high(trace):
            hi, hi_trace = mid, trace
        else:
            lo = mid
        # s_tol or floating-point resolution, whichever comes first
        if hi - lo < s_tol or not lo < 0.5 * (lo + hi) < hi:
            curv = abs(hi_trace.pasting_curvature)
            close_tol = max(tol, CLOSE_REL_TOL * red.paste_scale)
            if not hi_trace.crosses or curv > close_tol:
                raise ShootingError(
                    f"bracket closed at s={hi:.12g} without pasting: k''(beta)={curv:.3g} > {close_tol:.3g}, "
                    f"beta={hi_trace.beta_s:.6g}",
                    eps,
                    iteration,
                )
            logger.warning(
                f"eps={eps:.6g}: bracket closed at width {hi - lo:.3g} with k''(beta)={curv:.3g} "
                f"(paste_tol={tol:.3g}); accepting upper end as {hi_trace.classification.value}"
            )
            return _solution_from_trace(red, eps, hi_trace, iteration, True)

    raise ShootingError(f"bisection did not converge in {max_iter} iterations (width {hi - lo:.3g})", eps, max_iter)


def solve(red: ReducedInstance, eps: Optional[float] = None, config: Optional[SolverConfig] = None) -> ValueSolution:
    """Shoot with a ``SolverConfig``; ``eps`` defaults to the instance's aggregated value."""
    config = config or SolverConfig()
    eps = red.eps if eps is None else eps
    return shoot(
        red,
        eps,
        red.b / config.cells,
        paste_tol=config.resolve_paste_tol(red),
        s_tol=config.s_tol,
        max_iter=config.max_iter,
        min_cells=config.min_cells,
        bracket=BracketConfig(max_attempts=config.bracket_attempts),
    )


def beta_hat(sol: ValueSolution, slope_tol: float = 1e-12, level_tol: Optional[float] = None) -> float:
    """
    Largest optimal threshold: sup of x >= beta with V' = r and V'' + H = 0 on [beta, x].

    Along the affine continuation this holds exactly where h' = discount * r and
    discount * V = m r + sigma^2 r^2 eps / 2 + h.

    Args:
        sol: Value solution
        slope_tol: Relative tolerance for h' = discount * r
        level_tol: Tolerance on the value level at beta (default paste_tol * sigma^2 / 2)

    Returns:
        beta_hat, equal to beta when the interval is degenerate
    """
    red = sol.reduced
    beta = sol.beta
    if beta >= red.b:
        return red.b
    if level_tol is None:
        level_tol = sol.paste_tol * red.sigma**2 / 2.0
    target = red.discount * red.r
    level = red.discount * sol.value_at(beta) - (
        red.m * red.r + 0.5 * red.sigma**2 * red.r**2 * sol.eps + float(holding_cost(red, beta))
    )
    if abs(level) > level_tol * (1.0 + 1e-9) + 1e-14 * max(1.0, red.value_scale):
        return beta

    x = beta
    j = int(np.searchsorted(red.knots_x, beta, side="right")) - 1
    while j < red.slopes.shape[0] and abs(red.slopes[j] - target) <= slope_tol * max(1.0, target):
        x = float(red.knots_x[j + 1])
        j += 1
    return min(max(x, beta), red.b)


def verify_solution(sol: ValueSolution, residual_tol: Optional[float] = None) -> CheckCollector:
    """
    Residual report of a value solution.

    Args:
        sol: Value solution
        residual_tol: Bound on |V'' + H| over [0, beta] (default the solution's paste_tol)

    Returns:
        Collected checks; ``passed`` is False if any gated check fails
    """
    red = sol.reduced
    tol = residual_tol if residual_tol is not None else sol.paste_tol
    report = CheckCollector("verify_solution")
    inside = sol.grid <= sol.beta
    beyond = ~inside

    residual = residual_profile(red, sol.eps, sol.grid, sol.V, sol.V_prime, sol.V_second)
    report.collect("hjb_residual_sup", float(np.max(np.abs(residual[inside]))), tol)
    extension_gap = float(np.max(np.abs(sol.V_prime[beyond] - red.r))) if beyond.any() else 0.0
    report.collect("extension_slope_sup", extension_gap, SLOPE_TOL)
    report.collect("slope_at_zero", abs(float(sol.V_prime[0])), SLOPE_TOL)
    # with no affine part V'(b) = r holds to the pasting tolerance only
    slope_tol = SLOPE_TOL if beyond.any() else max(SLOPE_TOL, sol.paste_tol)
    report.collect("slope_gap_at_b", abs(float(sol.V_prime[-1]) - red.r), slope_tol)
    min_slope = float(sol.V_prime.min())
    max_slope = float(sol.V_prime.max())
    report.collect("min_slope", min_slope, passed=min_slope >= -GRADIENT_TOL)
    report.collect("max_slope", max_slope, passed=max_slope <= red.r + GRADIENT_TOL)

    hjb_tail = residual[sol.grid >= sol.beta]
    tail_min = float(hjb_tail.min()) if hjb_tail.size else 0.0
    report.collect("hjb_inequality_min", tail_min, passed=tail_min >= -tol)

    plain = np.asarray(hamiltonian(red, sol.eps, sol.grid, sol.V, sol.V_prime))
    clamped = np.asarray(hamiltonian_clamped(red, sol.eps, sol.grid, sol.V, sol.V_prime))
    report.collect("clamp_inactive", float(np.max(np.abs(plain - clamped))), passed=bool(np.array_equal(plain, clamped)))

    fd = np.gradient(sol.V_prime, sol.grid)
    fd_residual = fd[inside][1:-1] + plain[inside][1:-1] if inside.sum() > 2 else np.zeros(1)
    report.collect("fd_residual_sup", float(np.max(np.abs(fd_residual))), gated=False)
    report.collect("beta", sol.beta, gated=False)
    report.collect("beta_hat", sol.beta_hat, gated=False)

    logger.info(f"verify_solution eps={sol.eps:.6g}: {'passed' if report.passed else 'FAILED'}")
    return report


def msdg_value(sol: ValueSolution, inst: MultiClassInstance, x_hat0: Sequence[float]) -> float:
    """Multiclass value at queue lengths x_hat0: V(theta . x_hat0; eps)."""
    x_hat = np.asarray(x_hat0, dtype=np.float64)
    if x_hat.shape != (inst.class_count,):
        raise InstanceValidationError(f"x_hat0 must have {inst.class_count} entries", "x_hat0")
    caps = np.asarray(inst.b_hat)
    if np.any(x_hat < 0.0) or np.any(x_hat > caps * (1.0 + 1e-12)):
        raise InstanceValidationError("x_hat0 must lie in the buffer box", "x_hat0")
    w = min(float(sol.reduced.theta @ x_hat), sol.reduced.b)
    return float(sol.value_at(w))


def auxiliary_trace(sol: ValueSolution) -> CauchyTrace:
    """The Cauchy trace started at s = V(0; eps) over all of [0, b]."""
    return integrate_cauchy(sol.reduced, sol.eps, sol.s_star, sol.dx, paste_tol=sol.paste_tol, min_cells=1)


def risk_neutral_limit_gap(sol: ValueSolution) -> float:
    """sup |eps sigma V'|, the size of the maximizer's optimal drift."""
    return float(sol.eps * sol.reduced.sigma * np.max(np.abs(sol.V_prime)))
