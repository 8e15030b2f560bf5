"""
CheckCollector: a utility class for collecting named numerical checks.

Reports produced by the solver, the simulator and the command line are
sequences of checks. Each check has a measured value, an optional threshold,
a pass flag and free-form metadata.
"""

import math
from typing import Any, Dict, List, Optional


class CheckCollector:
    """
    A class that collects numerical checks for reporting and gating.

    Attributes:
        checks (list): Collected checks, each a dict with keys name, value, threshold, passed, gated and metadata.
        title (str): Name of the report the checks belong to.
    """

    def __init__(self, title: str = "") -> None:
        """Initialize a CheckCollector."""
        self.title = title
        self.checks: List[Dict[str, Any]] = []

    def collect(
        self,
        name: str,
        value: float,
        threshold: Optional[float] = None,
        passed: Optional[bool] = None,
        gated: bool = True,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> None:
        """
        Collect a check.

        When ``passed`` is omitted it is derived as ``value <= threshold``; a check with
        neither is informational and always passes.

        Parameters:
            name (str): Name of the check.
            value (float): Measured value.
            threshold (Optional[float]): Upper bound the value must respect.
            passed (Optional[bool]): Explicit outcome, overriding the threshold comparison.
            gated (bool): Whether a failure of this check fails the report.
            metadata (Optional[Dict[str, Any]]): Optional metadata to associate with the check.
        """
        if passed is None:
            passed = True if threshold is None else bool(value <= threshold)
        self.checks.append(
            {
                "name": name,
                "value": value,
                "threshold": threshold,
                "passed": bool(passed),
                "gated": gated,
                "metadata": metadata or {},
            }
        )

    def clear(self) -> None:
        """Clear all collected checks."""
        self.checks = []

    def get_all(self) -> List[Dict[str, Any]]:
        """
        Get all collected checks.

        Returns:
            list: List of all collected checks with their metadata.
        """
        return self.checks

    def get_count(self) -> int:
        return len(self.checks)

    def get(self, name: str) -> Dict[str, Any]:
        """
        Get the first check with the given name.

        Raises:
            KeyError: If no check has that name.
        """
        for check in self.checks:
            if check["name"] == name:
                return check
        raise KeyError(name)

    def value(self, name: str) -> float:
        return float(self.get(name)["value"])

    def failed(self) -> List[Dict[str, Any]]:
        """Gated checks that did not pass."""
        return [c for c in self.checks if c["gated"] and not c["passed"]]

    @property
    def passed(self) -> bool:
        return not self.failed()

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready form; non-finite numbers become None."""

        def clean(v: Any) -> Any:
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        return {
            "title": self.title,
            "passed": self.passed,
            "checks": [
                {
                    "name": c["name"],
                    "value": clean(c["value"]),
                    "threshold": clean(c["threshold"]),
                    "passed": c["passed"],
                    "gated": c["gated"],
                    "metadata": {k: clean(v) for k, v in c["metadata"].items()},
                }
                for c in self.checks
            ],
        }
