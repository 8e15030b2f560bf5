"""
ambictrl players.

This package contains the strategies of the controller and the drift
perturbations of the adversary that the simulator plays against each other.
"""

from typing import Optional

from ambictrl.hjb import ValueSolution
from ambictrl.model import InstanceValidationError
from ambictrl.players.adversaries import ConstantAdversary, FeedbackAdversary, NullAdversary, grid_best_response
from ambictrl.players.base import AdversarySpec, StrategySpec
from ambictrl.players.strategies import ReflectingStrategy

__all__ = [
    "StrategySpec",
    "AdversarySpec",
    "ReflectingStrategy",
    "NullAdversary",
    "ConstantAdversary",
    "FeedbackAdversary",
    "grid_best_response",
    "parse_adversary",
]


def parse_adversary(text: str, solution: Optional[ValueSolution] = None) -> AdversarySpec:
    """
    Parse the command-line adversary form ``feedback``, ``null`` or ``const:psi0``.

    Args:
        text: Adversary spec string
        solution: Value solution for the feedback adversary

    Returns:
        The adversary
    """
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    if name == "null" and not arg:
        return NullAdversary()
    if name == "const":
        try:
            return ConstantAdversary(float(arg))
        except ValueError as e:
            raise InstanceValidationError(f"bad constant adversary '{text}'", "adversary") from e
    if name == "feedback" and not arg:
        if solution is None:
            raise InstanceValidationError("feedback adversary needs a value solution", "adversary")
        return FeedbackAdversary(solution)
    raise InstanceValidationError(f"unknown adversary '{text}', expected feedback, null or const:psi0", "adversary")
