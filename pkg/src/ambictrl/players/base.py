"""
Base player classes for ambictrl.

This module provides abstract base classes for the two players of the reduced
game: the controller's strategy and the adversary's drift perturbation.
"""

from abc import ABC, abstractmethod
from typing import Tuple, Union

import numpy as np

from ambictrl.model import ReducedInstance

ArrayLike = Union[float, np.ndarray]

# Kernel encodings of an adversary: mode 0 is a constant drift, mode 1 a table on a uniform grid.
MODE_CONSTANT = 0
MODE_TABLE = 1


class StrategySpec(ABC):
    """
    Abstract base class for the controller's strategies.

    A strategy decides where the workload is constrained. The simulator only
    needs the reflection interval, so every strategy reduces to one.
    """

    kind: str = "strategy"

    @abstractmethod
    def interval(self) -> Tuple[float, float]:
        """
        Get the reflection interval [alpha, beta].

        Returns:
            Lower and upper boundaries
        """

    @abstractmethod
    def validate(self, red: ReducedInstance) -> None:
        """
        Check the strategy against the game it is played in.

        Args:
            red: Reduced instance

        Raises:
            InstanceValidationError: If the strategy is not admissible
        """

    def describe(self) -> str:
        """Short label used in reports."""
        return self.kind


class AdversarySpec(ABC):
    """
    Abstract base class for the adversary's drift perturbations psi.

    The adversary is evaluated at the state at the start of every step.
    """

    kind: str = "adversary"

    @abstractmethod
    def drift(self, x: ArrayLike) -> ArrayLike:
        """
        Get the perturbation psi at workload x.

        Args:
            x: Workload or array of workloads

        Returns:
            psi(x)
        """

    @abstractmethod
    def kernel_table(self) -> Tuple[int, float, float, float, np.ndarray]:
        """
        Encoding for the compiled simulation loop.

        Returns:
            (mode, constant, grid start, grid step, table values)
        """

    def validate(self, red: ReducedInstance) -> None:
        """
        Check the adversary against the game it is played in.

        Default implementation accepts every instance.
        Subclasses should override if they depend on instance data.
        """

    def describe(self) -> str:
        """Short label used in reports."""
        return self.kind
