"""
Command-line front end.

Commands:
    solve     value CSV and a JSON sidecar with thresholds and solver diagnostics
    simulate  Monte Carlo estimate JSON (and optionally the first path as CSV)
    lift      lifted-path CSV and the per-path identity summary
    sweep     sweep CSV with one row per eps and a summary JSON; exits 3 when a sweep gate or the threshold sandwich fails
    verify    residual report JSON; exits 3 when a gated check fails

Exit status: 0 success, 1 invalid input, 2 solver failure, 3 failed checks.
"""

import argparse
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ambictrl.analysis import SweepError, epsilon_sweep, uniqueness_check
from ambictrl.bracketing import BracketNotFoundError
from ambictrl.checks import CheckCollector
from ambictrl.export import load_instance, write_json, write_lifted_csv, write_path_csv, write_sweep_csv, write_value_csv
from ambictrl.hjb import IntegrationError, ShootingError, SolverConfig, ValueSolution, solve, verify_solution
from ambictrl.model import reduce_instance
from ambictrl.players import ReflectingStrategy, parse_adversary
from ambictrl.simulate import (
    LIFT_TOL,
    SimulationConfig,
    equilibrium_report,
    estimate,
    instance_at_eps,
    lift_path,
    path_seed,
    simulate_path,
)

logger = logging.getLogger(__name__)

COMMANDS = ("solve", "simulate", "lift", "sweep", "verify")
DEFAULT_EPS_GRID = (0.0, 0.05, 0.1, 0.2, 0.4)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2
EXIT_CHECKS = 3


class RunConfigError(ValueError):
    """Raised for an inconsistent command-line configuration."""

    def __init__(self, message: str, field_name: str) -> None:
        super().__init__(message)
        self.field_name = field_name


@dataclass(frozen=True)
class RunConfig:
    """Resolved command-line configuration; embedded in every output JSON."""

    command: str
    instance_path: Optional[str] = None
    eps: Optional[float] = None
    eps_grid: Optional[Tuple[float, ...]] = None
    cells: int = 4096
    paste_tol: Optional[float] = None
    s_tol: float = 1e-14
    x0: float = 0.0
    dt: float = 1e-3
    horizon: Optional[float] = None
    n_paths: Optional[int] = None
    seed: Optional[int] = None
    beta: Optional[float] = None
    adversary: str = "feedback"
    antithetic: bool = False
    save_paths: bool = False
    renormalize: bool = False
    output_dir: str = "."

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise RunConfigError(f"unknown command '{self.command}'", "command")
        if self.instance_path is not None and not Path(self.instance_path).is_file():
            raise RunConfigError(f"instance file {self.instance_path} does not exist", "instance")
        if self.eps is not None and not (math.isfinite(self.eps) and self.eps >= 0.0):
            raise RunConfigError("eps must be a nonnegative real", "eps")
        if self.eps_grid is not None and self.command != "sweep":
            raise RunConfigError("--eps-grid only applies to sweep", "eps_grid")
        if self.cells < 1:
            raise RunConfigError(f"cells must be a positive integer, got {self.cells}", "cells")
        if self.paste_tol is not None and not self.paste_tol > 0.0:
            raise RunConfigError("paste_tol must be positive", "paste_tol")
        if not self.s_tol > 0.0:
            raise RunConfigError("s_tol must be positive", "s_tol")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise RunConfigError("dt must be positive", "dt")
        if self.horizon is not None and not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise RunConfigError("horizon must be positive", "horizon")
        if self.n_paths is not None and self.n_paths < 2:
            raise RunConfigError("paths must be at least 2", "paths")
        if self.command in ("simulate", "lift") and self.seed is None:
            raise RunConfigError(f"--seed is required for {self.command}", "seed")
        if self.seed is not None and self.seed < 0:
            raise RunConfigError("seed must be nonnegative", "seed")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(cells=self.cells, paste_tol=self.paste_tol, s_tol=self.s_tol)

    def simulation_config(self, default_paths: int) -> SimulationConfig:
        return SimulationConfig(
            dt=self.dt,
            horizon=self.horizon,
            n_paths=self.n_paths if self.n_paths is not None else default_paths,
            seed=self.seed if self.seed is not None else 0,
            antithetic=self.antithetic,
        )


def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ambictrl", description="Robust Brownian control of a multiclass queue")
    parser.add_argument("--command", required=True, choices=COMMANDS, help="What to run")
    parser.add_argument("--instance", dest="instance_path", help="Instance JSON file (default: shipped instance)")
    parser.add_argument("--renormalize", action="store_true", help="Rescale lambda to exact critical load")
    eps = parser.add_mutually_exclusive_group()
    eps.add_argument("--eps", type=float, help="Ambiguity parameter (default: aggregated from the instance)")
    eps.add_argument("--eps-grid", type=_float_list, help="Comma-separated eps values for sweep")
    parser.add_argument("--cells", type=int, default=4096, help="Solver cells on [0, b]")
    parser.add_argument("--paste-tol", type=float, help="Pasting tolerance on k''(beta)")
    parser.add_argument("--s-tol", type=float, default=1e-14, help="Bisection tolerance on s")
    parser.add_argument("--x0", type=float, default=0.0, help="Initial workload")
    parser.add_argument("--dt", type=float, default=1e-3, help="Euler step")
    parser.add_argument("--horizon", type=float, help="Horizon T (default: from the tail budget)")
    parser.add_argument("--paths", dest="n_paths", type=int, help="Number of Monte Carlo paths")
    parser.add_argument("--seed", type=int, help="Base seed (required for simulate and lift)")
    parser.add_argument("--beta", type=float, help="Reflection threshold (default: beta_eps)")
    parser.add_argument("--adversary", default="feedback", help="feedback, null or const:psi0")
    parser.add_argument("--antithetic", action="store_true", help="Use antithetic path pairs")
    parser.add_argument("--save-paths", action="store_true", help="Also write the first path as CSV")
    parser.add_argument("--out", dest="output_dir", default=".", help="Output directory")
    parser.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    return RunConfig(**{k: v for k, v in vars(args).items() if k in fields})


class _Context:
    """Instance, reduction and provenance shared by the command handlers."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.inst, self.digest = load_instance(config.instance_path, renormalize=config.renormalize)
        self.red = reduce_instance(self.inst)
        self.out = Path(config.output_dir)

    @property
    def eps(self) -> float:
        return self.config.eps if self.config.eps is not None else self.red.eps

    def provenance(self) -> Dict[str, Any]:
        return {"config": self.config.to_dict(), "instance_sha256": self.digest}

    def solve(self, eps: Optional[float] = None) -> ValueSolution:
        return solve(self.red, self.eps if eps is None else eps, self.config.solver_config())


def _cmd_solve(ctx: _Context) -> int:
    sol = ctx.solve()
    write_value_csv(ctx.out / "value.csv", sol)
    payload = ctx.provenance()
    payload["solution"] = sol.to_summary()
    payload["uniqueness"] = uniqueness_check(ctx.red, sol.eps).to_dict()
    write_json(ctx.out / "solution.json", payload)
    return EXIT_OK


def _cmd_simulate(ctx: _Context) -> int:
    config = ctx.config
    sol = ctx.solve()
    strat = ReflectingStrategy(config.beta if config.beta is not None else sol.beta)
    adv = parse_adversary(config.adversary, sol)
    sim = config.simulation_config(default_paths=10_000)
    est = estimate(ctx.red, strat, adv, config.x0, sol.eps, sim)
    payload = ctx.provenance()
    payload["estimate"] = est.to_dict()
    payload["strategy"] = strat.describe()
    payload["adversary"] = adv.describe()
    payload["value_at_x0"] = sol.value_at(config.x0)
    write_json(ctx.out / "estimate.json", payload)
    if config.save_paths:
        seed, mirrored = path_seed(sim.seed, 0, sim.antithetic)
        path = simulate_path(ctx.red, strat, adv, config.x0, sim.dt, est.horizon, seed, antithetic=mirrored)
        write_path_csv(ctx.out / "path_0.csv", path)
    return EXIT_OK


def _cmd_lift(ctx: _Context) -> int:
    config = ctx.config
    sol = ctx.solve()
    strat = ReflectingStrategy(config.beta if config.beta is not None else sol.beta)
    adv = parse_adversary(config.adversary, sol)
    sim = config.simulation_config(default_paths=100)
    inst = instance_at_eps(ctx.inst, sol.eps) if sol.eps > 0.0 else ctx.inst
    horizon = sim.resolve_horizon(ctx.red, sol.eps)

    worst: Dict[str, float] = {}
    costs: List[Dict[str, float]] = []
    for index in range(sim.n_paths):
        seed, mirrored = path_seed(sim.seed, index, sim.antithetic)
        path = simulate_path(ctx.red, strat, adv, config.x0, sim.dt, horizon, seed, antithetic=mirrored)
        lifted = lift_path(path, ctx.red, inst)
        if index == 0:
            write_lifted_csv(ctx.out / "lifted_0.csv", lifted)
            if config.save_paths:
                write_path_csv(ctx.out / "path_0.csv", path)
        for key, value in lifted.identity_residuals.items():
            worst[key] = max(worst.get(key, 0.0), value)
        costs.append({"seed": seed, "reduced_cost": lifted.reduced_cost, "lifted_cost": lifted.cost})

    passed = all(v <= LIFT_TOL for v in worst.values())
    payload = ctx.provenance()
    payload["identity_residuals"] = worst
    payload["tolerance"] = LIFT_TOL
    payload["passed"] = passed
    payload["paths"] = costs
    write_json(ctx.out / "lift.json", payload)
    return EXIT_OK if passed else EXIT_CHECKS


def _cmd_sweep(ctx: _Context) -> int:
    config = ctx.config
    grid = config.eps_grid if config.eps_grid is not None else DEFAULT_EPS_GRID
    report = epsilon_sweep(ctx.red, grid, config.solver_config())
    write_sweep_csv(ctx.out / "sweep.csv", report.to_rows())
    payload = ctx.provenance()
    payload.update(report.summary())
    gates = report.gate_check()
    sandwich = report.sandwich_check()
    payload["gates"] = gates.to_dict()
    payload["sandwich"] = sandwich.to_dict()
    passed = gates.passed and sandwich.passed
    payload["passed"] = passed
    write_json(ctx.out / "sweep.json", payload)
    return EXIT_OK if passed else EXIT_CHECKS


def _cmd_verify(ctx: _Context) -> int:
    config = ctx.config
    sol = ctx.solve()
    reports: List[CheckCollector] = [verify_solution(sol)]
    if config.n_paths is not None:
        sim = config.simulation_config(default_paths=config.n_paths)
        reports.append(equilibrium_report(ctx.red, sol, mc_config=sim, x0=config.x0, inst=ctx.inst))
    payload = ctx.provenance()
    payload["solution"] = sol.to_summary()
    payload["uniqueness"] = uniqueness_check(ctx.red, sol.eps).to_dict()
    payload["reports"] = [r.to_dict() for r in reports]
    passed = all(r.passed for r in reports)
    payload["passed"] = passed
    write_json(ctx.out / "verify.json", payload)
    return EXIT_OK if passed else EXIT_CHECKS


HANDLERS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "lift": _cmd_lift,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
}


def _report_error(kind: str, exc: BaseException) -> None:
    payload = {"error": kind, "message": str(exc), "field": getattr(exc, "field_name", None)}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def run(config: RunConfig) -> int:
    """
    Execute one command and write its artifacts.

    Args:
        config: Resolved configuration

    Returns:
        Exit status: 0 success, 1 invalid input, 2 solver failure, 3 failed gated checks
    """
    try:
        ctx = _Context(config)
        status = HANDLERS[config.command](ctx)
    except (ShootingError, IntegrationError, SweepError, BracketNotFoundError) as e:
        logger.error(f"{config.command} failed: {e}")
        _report_error(type(e).__name__, e)
        return EXIT_SOLVER
    except ValueError as e:
        logger.error(f"{config.command} rejected its input: {e}")
        _report_error(type(e).__name__, e)
        return EXIT_INVALID
    if status == EXIT_CHECKS:
        _report_error("CheckFailure", RuntimeError(f"{config.command}: gated checks failed"))
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, configure logging and run."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = config_from_args(args)
    except ValueError as e:
        _report_error(type(e).__name__, e)
        return EXIT_INVALID
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
