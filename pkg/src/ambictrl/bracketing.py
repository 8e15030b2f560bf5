"""
Geometric bracket search.

This module provides the expanding search used to find the lower end of a
shooting bracket: starting from an anchor, it steps away by geometrically
growing amounts until a probe is accepted.
"""

import logging
import math
from typing import Callable, Generic, Iterator, Optional, TypeVar

T = TypeVar("T")

logger = logging.getLogger(__name__)


class BracketConfig:
    """
    Configuration for the geometric bracket search.

    Attributes:
        max_attempts: Maximum number of expansions after the anchor probe
        base_step: First excursion away from the anchor
        max_step: Largest single excursion
        backoff_factor: Factor by which the excursion grows after each attempt
        direction: -1.0 to search downward from the anchor, +1.0 to search upward
    """

    def __init__(
        self,
        max_attempts: int = 60,
        base_step: float = 1.0,
        max_step: float = math.inf,
        backoff_factor: float = 2.0,
        direction: float = -1.0,
    ) -> None:
        """Initialize bracket configuration."""
        if max_attempts < 0:
            raise ValueError("max_attempts must be nonnegative")
        if base_step <= 0.0 or backoff_factor < 1.0 or max_step < base_step:
            raise ValueError("base_step must be positive, backoff_factor >= 1 and max_step >= base_step")
        if direction not in (-1.0, 1.0):
            raise ValueError("direction must be -1.0 or +1.0")
        self.max_attempts = max_attempts
        self.base_step = base_step
        self.max_step = max_step
        self.backoff_factor = backoff_factor
        self.direction = direction

    def calculate_step(self, attempt: int) -> float:
        """
        Calculate the excursion for an expansion attempt.

        Args:
            attempt: Current attempt number (0-based)

        Returns:
            Distance from the anchor
        """
        step = self.base_step * (self.backoff_factor**attempt)
        return min(step, self.max_step)

    def probes(self, anchor: float) -> Iterator[float]:
        """Yield the anchor followed by the expanded probe points."""
        yield anchor
        for attempt in range(self.max_attempts):
            yield anchor + self.direction * self.calculate_step(attempt)


class BracketNotFoundError(RuntimeError):
    """Exception raised when the search exhausts its attempts."""

    def __init__(self, message: str, last_probe: float) -> None:
        super().__init__(message)
        self.last_probe = last_probe


class BracketResult(Generic[T]):
    """Accepted probe point, the evaluation there and the number of probes used."""

    def __init__(self, point: float, value: T, probes: int) -> None:
        self.point = point
        self.value = value
        self.probes = probes


def find_bracket(
    evaluate: Callable[[float], T],
    accept: Callable[[T], bool],
    anchor: float = 0.0,
    config: Optional[BracketConfig] = None,
) -> BracketResult[T]:
    """
    Search geometrically away from ``anchor`` until ``accept(evaluate(point))`` holds.

    Args:
        evaluate: Function evaluated at each probe point
        accept: Predicate on the evaluation that ends the search
        anchor: First probe point
        config: Search configuration (defaults to downward doubling, 60 attempts)

    Returns:
        The accepted probe

    Raises:
        BracketNotFoundError: If no probe is accepted
    """
    config = config or BracketConfig()
    point = anchor
    for count, point in enumerate(config.probes(anchor), start=1):
        value = evaluate(point)
        if accept(value):
            logger.debug(f"Bracket accepted at {point:.6g} after {count} probe(s)")
            return BracketResult(point, value, count)
        logger.debug(f"Bracket probe {count}/{config.max_attempts + 1} rejected at {point:.6g}")

    raise BracketNotFoundError(f"No accepted probe within {config.max_attempts} expansions (last probe {point:.6g})", point)
