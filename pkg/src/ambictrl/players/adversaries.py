"""
Adversary drift perturbations.

The adversary shifts the Brownian drift by sigma * psi and pays psi^2 / (2 eps)
per unit time. Null realizes the reference measure; Feedback is the worst case
eps * sigma * V'(x) read off a solved value function.
"""

import logging
import math
from typing import Tuple

import numpy as np

from ambictrl.hjb import Classification, ValueSolution
from ambictrl.model import InstanceValidationError, ReducedInstance
from ambictrl.players.base import MODE_CONSTANT, MODE_TABLE, AdversarySpec, ArrayLike

logger = logging.getLogger(__name__)

_EMPTY = np.zeros(1)


class ConstantAdversary(AdversarySpec):
    """
    A state-independent perturbation psi(x) = psi0.

    Args:
        psi0: Constant drift perturbation
    """

    kind = "constant"

    def __init__(self, psi0: float) -> None:
        if not math.isfinite(psi0):
            raise InstanceValidationError(f"psi0 must be finite, got {psi0}", "psi0")
        self.psi0 = float(psi0)

    def drift(self, x: ArrayLike) -> ArrayLike:
        if np.ndim(x) == 0:
            return self.psi0
        return np.full(np.shape(x), self.psi0)

    def kernel_table(self) -> Tuple[int, float, float, float, np.ndarray]:
        return MODE_CONSTANT, self.psi0, 0.0, 1.0, _EMPTY

    def describe(self) -> str:
        return f"const({self.psi0:.6g})"

    def __repr__(self) -> str:
        return f"ConstantAdversary(psi0={self.psi0!r})"


class NullAdversary(ConstantAdversary):
    """psi = 0: the reference measure, no penalty paid."""

    kind = "null"

    def __init__(self) -> None:
        super().__init__(0.0)

    def describe(self) -> str:
        return "null"

    def __repr__(self) -> str:
        return "NullAdversary()"


class FeedbackAdversary(AdversarySpec):
    """
    The worst-case perturbation psi(x) = eps * sigma * V'(x).

    V' is interpolated linearly on the solver grid; states outside [0, b] are
    evaluated at the nearest end.

    Args:
        solution: A pasted value solution
    """

    kind = "feedback"

    def __init__(self, solution: ValueSolution) -> None:
        if solution.classification is not Classification.PASTED:
            raise InstanceValidationError("feedback adversary needs a pasted value solution", "solution")
        self.solution = solution
        red = solution.reduced
        self._values = np.ascontiguousarray(solution.eps * red.sigma * solution.V_prime, dtype=np.float64)

    @property
    def eps(self) -> float:
        return self.solution.eps

    def drift(self, x: ArrayLike) -> ArrayLike:
        sol = self.solution
        xa = np.clip(np.asarray(x, dtype=np.float64), 0.0, sol.reduced.b)
        out = np.interp(xa, sol.grid, self._values)
        return float(out) if np.ndim(out) == 0 else out

    def kernel_table(self) -> Tuple[int, float, float, float, np.ndarray]:
        return MODE_TABLE, 0.0, float(self.solution.grid[0]), self.solution.dx, self._values

    def validate(self, red: ReducedInstance) -> None:
        if not red.matches(self.solution.reduced):
            raise InstanceValidationError("feedback solution was solved on a different instance", "solution")

    def describe(self) -> str:
        return f"feedback(eps={self.eps:.6g})"

    def __repr__(self) -> str:
        return f"FeedbackAdversary(eps={self.eps!r})"


def grid_best_response(red: ReducedInstance, eps: float, z: float, p_grid: np.ndarray) -> float:
    """
    Maximize p -> (m + sigma p) z - p^2 / (2 eps) over a grid of perturbations.

    The exact maximizer is eps * sigma * z, which the feedback adversary plays with z = V'(x).

    Args:
        red: Reduced instance
        eps: Ambiguity parameter (> 0)
        z: Slope of the value function
        p_grid: Candidate perturbations

    Returns:
        The best grid point
    """
    if not (math.isfinite(eps) and eps > 0.0):
        raise InstanceValidationError("eps must be positive for the best response", "eps")
    p = np.asarray(p_grid, dtype=np.float64)
    payoff = (red.m + red.sigma * p) * z - p * p / (2.0 * eps)
    return float(p[int(np.argmax(payoff))])
