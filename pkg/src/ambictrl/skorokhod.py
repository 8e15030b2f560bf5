"""
Two-sided Skorokhod map on an interval for discretely sampled paths.

Given an input path eta on a uniform mesh and an interval [alpha, beta], the map
returns the constrained path chi = eta + zeta1 - zeta2 and two nondecreasing
regulators: zeta1 pushes up at alpha, zeta2 pushes down at beta. Regulators act
at step granularity, which is the exact map for the piecewise-constant
interpolation of eta. A start outside the interval is booked as a time-0 jump.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numba import njit

logger = logging.getLogger(__name__)

UNIFORM_TOL = 1e-12


class ReflectionError(ValueError):
    """Raised for an empty interval or a malformed path grid."""


@dataclass(frozen=True, eq=False)
class PathGrid:
    """
    Values sampled on a uniform time mesh starting at 0.

    Attributes:
        t: Strictly increasing times, t[0] = 0
        values: Path values, same length as t
    """

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if t.ndim != 1 or t.shape != values.shape or t.size < 1:
            raise ReflectionError("t and values must be 1-d arrays of equal, nonzero length")
        if t[0] != 0.0:
            raise ReflectionError("time mesh must start at 0")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(t)):
            raise ReflectionError("path values must be finite")
        if t.size > 1:
            steps = np.diff(t)
            if np.any(steps <= 0.0):
                raise ReflectionError("time mesh must be strictly increasing")
            if np.max(np.abs(steps - steps[0])) > UNIFORM_TOL * max(1.0, t[-1]):
                raise ReflectionError("time mesh must be uniform")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, dt: float, values: np.ndarray) -> "PathGrid":
        values = np.asarray(values, dtype=np.float64)
        return cls(t=dt * np.arange(values.shape[0]), values=values)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class ReflectionTriple:
    """
    Output of the Skorokhod map.

    Attributes:
        chi: Constrained path X
        zeta1: Lower regulator Y (acts at alpha)
        zeta2: Upper regulator R (acts at beta)
        double_violations: Step indices whose increment exceeded beta - alpha
    """

    chi: PathGrid
    zeta1: PathGrid
    zeta2: PathGrid
    double_violations: Tuple[int, ...] = ()

    @property
    def total_variation(self) -> float:
        return float(self.zeta1.values[-1] + self.zeta2.values[-1])


@njit(cache=True, nogil=True)
def reflect_step(x_prev: float, d_eta: float, alpha: float, beta: float) -> Tuple[float, float, float]:
    """One step of the map: new state and the lower/upper regulator increments."""
    y = x_prev + d_eta
    d_lower = 0.0
    d_upper = 0.0
    if y < alpha:
        d_lower = alpha - y
        y = alpha
    if y > beta:
        d_upper = y - beta
        y = beta
    return y, d_lower, d_upper


@njit(cache=True, nogil=True)
def _reflect_path(
    eta: np.ndarray, alpha: float, beta: float, chi: np.ndarray, z1: np.ndarray, z2: np.ndarray, flags: np.ndarray
) -> None:
    width = beta - alpha
    x, dl, du = reflect_step(0.0, eta[0], alpha, beta)
    chi[0] = x
    z1[0] = dl
    z2[0] = du
    for k in range(1, eta.shape[0]):
        d_eta = eta[k] - eta[k - 1]
        flags[k] = abs(d_eta) > width
        x, dl, du = reflect_step(chi[k - 1], d_eta, alpha, beta)
        chi[k] = x
        z1[k] = z1[k - 1] + dl
        z2[k] = z2[k - 1] + du


def reflect(eta: PathGrid, alpha: float, beta: float) -> ReflectionTriple:
    """
    Apply the two-sided Skorokhod map on [alpha, beta].

    Args:
        eta: Input path
        alpha: Lower boundary
        beta: Upper boundary

    Returns:
        Constrained path and regulators on the same mesh

    Raises:
        ReflectionError: If alpha >= beta
    """
    if not (math.isfinite(alpha) and math.isfinite(beta)) or alpha >= beta:
        raise ReflectionError(f"need alpha < beta, got [{alpha}, {beta}]")
    n = len(eta)
    chi = np.empty(n)
    z1 = np.empty(n)
    z2 = np.empty(n)
    flags = np.zeros(n, dtype=np.bool_)
    _reflect_path(eta.values, float(alpha), float(beta), chi, z1, z2, flags)

    violations = tuple(int(i) for i in np.flatnonzero(flags))
    if violations:
        logger.warning(f"{len(violations)} step(s) moved farther than the interval width; dt is too coarse for this interval")
    return ReflectionTriple(
        chi=PathGrid(eta.t, chi),
        zeta1=PathGrid(eta.t, z1),
        zeta2=PathGrid(eta.t, z2),
        double_violations=violations,
    )
