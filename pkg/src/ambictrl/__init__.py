"""
ambictrl - Robust Brownian control of a critically loaded multiclass queue

ambictrl reduces a multiclass single-server queue in heavy traffic to a
one-dimensional workload game against a drift-perturbing adversary, solves the
free-boundary HJB equation of that game by shooting, and checks the resulting
reflecting strategy by Monte Carlo, both on workload and lifted back to queue
lengths.

Examples:
    Basic usage:

    >>> from ambictrl import load_instance, reduce_instance, solve
    >>> inst, digest = load_instance()
    >>> red = reduce_instance(inst)
    >>> sol = solve(red, eps=1.0)
    >>> print(f"V(0) = {sol.s_star:.4f}, beta = {sol.beta:.4f}")
"""

from ambictrl.analysis import epsilon_sweep, uniqueness_check
from ambictrl.export import load_instance
from ambictrl.hjb import SolverConfig, ValueSolution, shoot, solve, verify_solution
from ambictrl.model import MultiClassInstance, ReducedInstance, gamma_lift, holding_cost, reduce_instance
from ambictrl.simulate import SimulationConfig, discounted_cost, lift_path, mc_estimate, simulate_path
from ambictrl.skorokhod import PathGrid, reflect

__version__ = "0.1.0"


__all__ = [
    "MultiClassInstance",
    "ReducedInstance",
    "reduce_instance",
    "holding_cost",
    "gamma_lift",
    "load_instance",
    "SolverConfig",
    "ValueSolution",
    "shoot",
    "solve",
    "verify_solution",
    "PathGrid",
    "reflect",
    "SimulationConfig",
    "simulate_path",
    "discounted_cost",
    "mc_estimate",
    "lift_path",
    "epsilon_sweep",
    "uniqueness_check",
]
