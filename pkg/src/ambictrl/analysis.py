"""
Comparative statics in the ambiguity parameter.

A sweep solves the HJB for a grid of eps values (always including eps = 0) and
reports monotonicity of the value, the slack in the comparison bound

    V(x; eps1) <= V(x; eps2) + eps1 sigma^2 r^2 (eps1 - eps2) / (2 eps2 discount),

the sup-norm distance to the risk-neutral curve with a linear fit C * eps, and
the thresholds beta and beta_hat.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ambictrl.batching import map_ordered
from ambictrl.checks import CheckCollector
from ambictrl.hjb import IntegrationError, ShootingError, SolverConfig, ValueSolution, solve
from ambictrl.model import MultiClassInstance, ReducedInstance, reduce_instance

logger = logging.getLogger(__name__)

EQUALITY_RTOL = 1e-12
SANDWICH_PROBE = 1e-4
SLACK_REL_TOL = 1e-8
FIT_RESIDUAL_TOL = 0.25


class SweepError(RuntimeError):
    """Raised when a solve inside a sweep fails."""

    def __init__(self, message: str, eps: float) -> None:
        super().__init__(message)
        self.eps = eps


@dataclass(frozen=True, eq=False)
class SweepRecord:
    """
    Per-eps row of a sweep.

    Attributes:
        eps: Ambiguity parameter
        s_star: V(0; eps)
        beta, beta_hat: Smallest and largest optimal thresholds
        sup_diff: sup |V(.; eps) - V(.; 0)|
        monotonicity_margin: min (V(.; eps) - V(.; previous eps)), NaN for the first row
        bound_slack: min of the comparison bound slack against the previous eps; inf when that eps is 0
        solution: The solved value function
    """

    eps: float
    s_star: float
    beta: float
    beta_hat: float
    sup_diff: float
    monotonicity_margin: float
    bound_slack: float
    solution: ValueSolution = field(repr=False)

    def to_row(self) -> Dict[str, Any]:
        return {
            "eps": self.eps,
            "s_star": self.s_star,
            "beta": self.beta,
            "beta_hat": self.beta_hat,
            "sup_diff": self.sup_diff,
            "margin": self.monotonicity_margin,
            "slack": self.bound_slack,
        }


@dataclass(frozen=True, eq=False)
class SweepReport:
    """
    Result of ``epsilon_sweep``.

    Attributes:
        eps_grid: Requested eps values, increasing
        records: One record per eps in ``eps_grid``
        c_fit: Least-squares C in sup_diff ~ C * eps over the smallest positive eps
        fit_residual: Relative residual of that fit
        baseline: The eps = 0 solution
        reduced: Instance the sweep was solved for
        config: Solver settings shared by every solve
    """

    eps_grid: Tuple[float, ...]
    records: Tuple[SweepRecord, ...]
    c_fit: float
    fit_residual: float
    baseline: ValueSolution = field(repr=False)
    reduced: ReducedInstance = field(repr=False)
    config: SolverConfig = field(repr=False)

    @property
    def min_margin(self) -> float:
        """Smallest monotonicity margin over all pairs eps1 > eps2 of the sweep."""
        curves = [self.baseline] + [r.solution for r in self.records if r.eps > 0.0]
        margins = [float(np.min(hi.V - lo.V)) for i, hi in enumerate(curves) for lo in curves[:i]]
        return min(margins) if margins else math.nan

    @property
    def min_slack(self) -> float:
        slacks = [r.bound_slack for r in self.records if math.isfinite(r.bound_slack)]
        return min(slacks) if slacks else math.inf

    def to_rows(self) -> List[Dict[str, Any]]:
        return [r.to_row() for r in self.records]

    def summary(self) -> Dict[str, Any]:
        return {
            "C_fit": self.c_fit,
            "fit_residual": self.fit_residual,
            "min_margin": self.min_margin,
            "min_slack": self.min_slack,
            "eps_grid": list(self.eps_grid),
        }

    def gate_check(self, slack_tol: Optional[float] = None, fit_tol: float = FIT_RESIDUAL_TOL) -> CheckCollector:
        """
        Monotonicity, comparison-bound and linear-fit gates of the sweep.

        Args:
            slack_tol: Allowed negative slack (default 1e-8 * value_scale)
            fit_tol: Bound on the relative residual of the C * eps fit

        Returns:
            Collected checks; a grid too short for a margin or a fit leaves that check informational
        """
        if slack_tol is None:
            slack_tol = SLACK_REL_TOL * self.reduced.value_scale
        report = CheckCollector("epsilon_sweep")
        margin = self.min_margin
        report.collect("min_margin", margin, passed=margin > 0.0, gated=not math.isnan(margin))
        slack = self.min_slack
        report.collect("min_slack", slack, -slack_tol, passed=slack >= -slack_tol)
        report.collect("fit_residual", self.fit_residual, fit_tol, gated=not math.isnan(self.fit_residual))
        report.collect("C_fit", self.c_fit, gated=False)
        logger.info(f"sweep gates: {'passed' if report.passed else 'FAILED'}")
        return report

    def sandwich_check(self, delta: Optional[float] = None, probe: float = SANDWICH_PROBE, workers: Optional[int] = None) -> CheckCollector:
        """
        Check beta_eps' in [beta_eps - delta, beta_hat_eps + delta] for eps' = eps +- probe * max(1, eps).

        This is the finite-probe form of beta_eps <= liminf beta_eps' <= limsup beta_hat_eps' <= beta_hat_eps.

        Args:
            delta: Allowance; defaults to one solver cell
            probe: Relative distance of the neighbouring eps values
            workers: Worker threads for the neighbouring solves

        Returns:
            One check per neighbouring eps
        """
        if not (math.isfinite(probe) and probe > 0.0):
            raise SweepError(f"probe must be a positive real, got {probe}", math.nan)
        pairs = []
        for rec in self.records:
            step = probe * max(1.0, rec.eps)
            pairs.extend((rec, e) for e in (rec.eps - step, rec.eps + step) if e >= 0.0)
        neighbours = _solve_all(self.reduced, [e for _, e in pairs], self.config, workers)

        report = CheckCollector("sandwich_check")
        for (rec, e), near in zip(pairs, neighbours):
            d = delta if delta is not None else max(rec.solution.dx, near.dx)
            lower, upper = rec.beta - d, rec.beta_hat + d
            outside = max(lower - near.beta, near.beta - upper, 0.0)
            report.collect(
                f"beta({e:.6g}) near eps={rec.eps:g}",
                outside,
                0.0,
                metadata={"beta": near.beta, "lower": lower, "upper": upper},
            )
        return report


def _check_grid(eps_grid: Sequence[float]) -> Tuple[float, ...]:
    grid = tuple(float(e) for e in eps_grid)
    if not grid:
        raise SweepError("eps_grid is empty", math.nan)
    for e in grid:
        if not (math.isfinite(e) and e >= 0.0):
            raise SweepError(f"eps values must be nonnegative reals, got {e}", e)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise SweepError("eps_grid must be strictly increasing", grid[0])
    return grid


def _solve_all(red: ReducedInstance, eps_values: Sequence[float], config: SolverConfig, workers: Optional[int]) -> List[ValueSolution]:
    def run(eps: float) -> ValueSolution:
        try:
            return solve(red, eps, config)
        except (ShootingError, IntegrationError) as e:
            raise SweepError(f"solve failed at eps={eps:g}: {e}", eps) from e

    return map_ordered(run, list(eps_values), workers)


def epsilon_sweep(
    inst: Union[MultiClassInstance, ReducedInstance],
    eps_grid: Sequence[float],
    config: Optional[SolverConfig] = None,
    workers: Optional[int] = None,
    fit_points: int = 3,
) -> SweepReport:
    """
    Solve the HJB over an eps grid and collect comparative statics.

    Args:
        inst: Multiclass or reduced instance
        eps_grid: Strictly increasing nonnegative eps values
        config: Solver settings shared by every solve
        workers: Worker threads for the solves
        fit_points: Number of smallest positive eps used in the C * eps fit

    Returns:
        The sweep report

    Raises:
        SweepError: If any solve fails, naming its eps
    """
    red = inst if isinstance(inst, ReducedInstance) else reduce_instance(inst)
    grid = _check_grid(eps_grid)
    config = config or SolverConfig()
    to_solve = grid if grid[0] == 0.0 else (0.0,) + grid
    solutions = _solve_all(red, to_solve, config, workers)
    baseline = solutions[0]
    by_eps = dict(zip(to_solve, solutions))

    records = []
    previous: Optional[ValueSolution] = None
    s2, r, rate = red.sigma**2, red.r, red.discount
    for eps in grid:
        sol = by_eps[eps]
        margin = math.nan
        slack = math.inf
        if previous is not None:
            margin = float(np.min(sol.V - previous.V))
            if previous.eps > 0.0:
                bound = eps * s2 * r * r * (eps - previous.eps) / (2.0 * previous.eps * rate)
                slack = float(np.min(previous.V + bound - sol.V))
            if not margin > 0.0:
                logger.warning(f"value not increasing between eps={previous.eps:g} and eps={eps:g} (margin {margin:.3g})")
        records.append(
            SweepRecord(
                eps=eps,
                s_star=sol.s_star,
                beta=sol.beta,
                beta_hat=sol.beta_hat,
                sup_diff=float(np.max(np.abs(sol.V - baseline.V))),
                monotonicity_margin=margin,
                bound_slack=slack,
                solution=sol,
            )
        )
        previous = sol

    positive = [rec for rec in records if rec.eps > 0.0][:fit_points]
    c_fit, fit_residual = math.nan, math.nan
    if positive:
        e = np.array([rec.eps for rec in positive])
        d = np.array([rec.sup_diff for rec in positive])
        c_fit = float(e @ d / (e @ e))
        norm = float(np.linalg.norm(d))
        fit_residual = float(np.linalg.norm(d - c_fit * e)) / norm if norm > 0.0 else 0.0

    logger.info(f"sweep over {len(grid)} eps value(s): C_fit={c_fit:.6g}, fit_residual={fit_residual:.3g}")
    return SweepReport(
        eps_grid=grid,
        records=tuple(records),
        c_fit=c_fit,
        fit_residual=fit_residual,
        baseline=baseline,
        reduced=red,
        config=config,
    )


class Verdict(str, Enum):
    UNIQUE = "Unique"
    POSSIBLY_NON_UNIQUE = "PossiblyNonUnique"


@dataclass(frozen=True)
class UniquenessVerdict:
    """
    Outcome of ``uniqueness_check``.

    Attributes:
        verdict: Unique or PossiblyNonUnique
        reason: Human-readable explanation
        offending_index: User class index whose h_hat * mu equals discount * r, if any
    """

    verdict: Verdict
    reason: str
    offending_index: Optional[int] = None

    @property
    def unique(self) -> bool:
        return self.verdict is Verdict.UNIQUE

    def to_dict(self) -> Dict[str, Any]:
        return {"verdict": self.verdict.value, "reason": self.reason, "offending_index": self.offending_index}


def uniqueness_check(red: ReducedInstance, eps: float) -> UniquenessVerdict:
    """
    Sufficient condition for a single optimal threshold.

    Unique if no slope h_hat_i * mu_i equals discount * r, or if
    m r + sigma^2 eps r^2 / 2 + h(b) <= 0. Equalities use a relative tolerance of 1e-12.
    """
    target = red.discount * red.r
    level = red.m * red.r + 0.5 * red.sigma**2 * eps * red.r**2 + red.h_max
    if level <= 0.0:
        return UniquenessVerdict(Verdict.UNIQUE, f"m r + sigma^2 eps r^2 / 2 + h(b) = {level:.6g} <= 0")

    fill = red.fill_order
    for j, slope in enumerate(red.slopes):
        if math.isclose(float(slope), target, rel_tol=EQUALITY_RTOL):
            index = fill[j]
            return UniquenessVerdict(
                Verdict.POSSIBLY_NON_UNIQUE,
                f"class {index} has h_hat * mu = {slope:.12g} = discount * r and m r + sigma^2 eps r^2 / 2 + h(b) = {level:.6g} > 0",
                index,
            )
    return UniquenessVerdict(Verdict.UNIQUE, f"no h_hat * mu equals discount * r = {target:.12g}")


def divergence_trend(
    red: ReducedInstance,
    eps_values: Sequence[float] = (1.0, 10.0, 100.0),
    config: Optional[SolverConfig] = None,
    growth: float = 2.0,
    workers: Optional[int] = None,
) -> CheckCollector:
    """
    Coarse check that V(0; eps) grows without bound in eps.

    Passes if V(0; eps) is strictly increasing over ``eps_values`` and the last value
    exceeds ``growth`` times the first. No rate is asserted.
    """
    grid = _check_grid(eps_values)
    solutions = _solve_all(red, grid, config or SolverConfig(), workers)
    values = [sol.s_star for sol in solutions]
    report = CheckCollector("divergence_trend")
    for eps, value in zip(grid, values):
        report.collect(f"s_star({eps:g})", value, gated=False)
    steps = [b - a for a, b in zip(values, values[1:])]
    report.collect("min_increment", min(steps) if steps else 0.0, passed=all(s > 0.0 for s in steps))
    ratio = values[-1] / values[0] if values[0] > 0.0 else math.inf
    report.collect("growth_ratio", ratio, passed=ratio > growth)
    return report
