"""
Test configuration and fixtures.
"""

from typing import Any, Dict, List

import pytest

from ambictrl.export import load_instance
from ambictrl.hjb import SolverConfig, ValueSolution, solve
from ambictrl.model import MultiClassInstance, ReducedInstance, reduce_instance


# Define test markers
def pytest_configure(config: Any) -> None:
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "core: fast deterministic tests")
    config.addinivalue_line("markers", "slow: Monte Carlo and dense-mesh acceptance runs")


def pytest_addoption(parser: Any) -> None:
    """Add command-line options for slow tests."""
    parser.addoption(
        "--slow",
        action="store_true",
        default=False,
        help="Run slow Monte Carlo and oracle tests",
    )


def pytest_collection_modifyitems(config: Any, items: List[Any]) -> None:
    """Skip slow tests unless --slow is given."""
    skip_slow = pytest.mark.skip(reason="slow test, use --slow to run")
    for item in items:
        if "slow" in item.keywords and not config.getoption("--slow"):
            item.add_marker(skip_slow)


def three_class_mapping() -> Dict[str, Any]:
    """The shipped default instance as a mapping."""
    return {
        "class_count": 3,
        "lambda": [1.0, 1.0 / 3.0, 0.5],
        "mu": [3.0, 1.0, 1.5],
        "lambda_hat": [0.0, 0.0, 0.0],
        "mu_hat": [1.0, 1.0, 1.0],
        "h_hat": [1.0, 2.5, 1.5],
        "r_hat": [1.0, 1.0, 1.0],
        "b_hat": [4.0, 7.0, 6.0],
        "eps_hat": [1.0, 1.0, 1.0],
        "discount": 1.0,
    }


@pytest.fixture(scope="session")
def three_class() -> MultiClassInstance:
    """The default instance loaded from package data."""
    inst, _ = load_instance()
    return inst


@pytest.fixture(scope="session")
def reduced(three_class: MultiClassInstance) -> ReducedInstance:
    """The reduced default instance."""
    return reduce_instance(three_class)


@pytest.fixture(scope="session")
def solved(reduced: ReducedInstance) -> ValueSolution:
    """V(.; 1) on the default 4096-cell mesh."""
    return solve(reduced, 1.0, SolverConfig())


@pytest.fixture(scope="session")
def solved_coarse(reduced: ReducedInstance) -> ValueSolution:
    """V(.; 1) on a 1024-cell mesh, used by the simulation tests."""
    return solve(reduced, 1.0, SolverConfig(cells=1024))
