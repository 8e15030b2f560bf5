"""Controller strategies."""

import math
from typing import Tuple

from ambictrl.model import InstanceValidationError, ReducedInstance
from ambictrl.players.base import StrategySpec


class ReflectingStrategy(StrategySpec):
    """
    The beta-reflecting strategy: minimal idling at 0, minimal rejection at beta.

    Args:
        beta: Reflection threshold, 0 < beta <= b
    """

    kind = "reflecting"

    def __init__(self, beta: float) -> None:
        if not (math.isfinite(beta) and beta > 0.0):
            raise InstanceValidationError(f"beta must be positive, got {beta}", "beta")
        self.beta = float(beta)

    def interval(self) -> Tuple[float, float]:
        return 0.0, self.beta

    def validate(self, red: ReducedInstance) -> None:
        if self.beta > red.b * (1.0 + 1e-12):
            raise InstanceValidationError(f"beta={self.beta:.12g} exceeds b={red.b:.12g}", "beta")

    def describe(self) -> str:
        return f"reflecting(beta={self.beta:.6g})"

    def __repr__(self) -> str:
        return f"ReflectingStrategy(beta={self.beta!r})"
