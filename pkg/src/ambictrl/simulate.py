"""
Monte Carlo engine for the reduced game.

Paths of the controlled workload

    X(t) = x0 + m t + int sigma psi ds + sigma B(t) + Y(t) - R(t)

are simulated by Euler-Maruyama with per-step two-sided reflection, under a
strategy and an adversary from ``ambictrl.players``. Discounted costs are
averaged over independently seeded paths, and paths can be lifted to the
multiclass game through the cheapest-fill map gamma.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy.optimize import brentq

from ambictrl.batching import Moments, PathBatcher
from ambictrl.bracketing import BracketConfig, find_bracket
from ambictrl.checks import CheckCollector
from ambictrl.hjb import Classification, ValueSolution
from ambictrl.model import InstanceValidationError, MultiClassInstance, ReducedInstance, gamma_lift, holding_cost, reduce_instance
from ambictrl.players import AdversarySpec, ConstantAdversary, FeedbackAdversary, NullAdversary, ReflectingStrategy, StrategySpec
from ambictrl.skorokhod import reflect_step

logger = logging.getLogger(__name__)

COARSE_DT_FACTOR = 1e-2
TAIL_TARGET = 0.01
LIFT_TOL = 1e-10


class SimulationError(ValueError):
    """Raised for inadmissible simulation inputs or an undefined cost."""


@dataclass(frozen=True)
class SimulationConfig:
    """
    Monte Carlo settings.

    Attributes:
        dt: Euler step
        horizon: Truncation horizon T; None picks it from the tail budget
        n_paths: Number of paths (even when antithetic)
        seed: Base seed; path i uses seed XOR i
        antithetic: Pair each path with its mirrored noise
        batch_size: Paths per worker batch
        workers: Requested worker threads (capped by AMBICTRL_THREADS)
    """

    dt: float = 1e-3
    horizon: Optional[float] = None
    n_paths: int = 10_000
    seed: int = 0
    antithetic: bool = False
    batch_size: int = 256
    workers: Optional[int] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise SimulationError("dt must be a positive real")
        if self.horizon is not None and not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise SimulationError("horizon must be a positive real")
        if self.n_paths < 2:
            raise SimulationError("n_paths must be at least 2")
        if self.antithetic and self.n_paths % 2:
            raise SimulationError("n_paths must be even for antithetic pairs")
        if self.seed < 0:
            raise SimulationError("seed must be nonnegative")
        if self.batch_size < 1:
            raise SimulationError("batch_size must be positive")

    def resolve_horizon(self, red: ReducedInstance, eps: float) -> float:
        return self.horizon if self.horizon is not None else tail_horizon(red, eps)


@dataclass(frozen=True, eq=False)
class SimPath:
    """
    One simulated path on the mesh t_k = k dt, k = 0..n.

    ``psi[k]`` is the perturbation applied on the step starting at t_k; values at
    t_0 already include the time-0 regulator jumps.
    """

    dt: float
    horizon: float
    t: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    R: np.ndarray
    B: np.ndarray
    psi: np.ndarray
    seed: int
    x0: float
    beta: float
    antithetic: bool = False
    double_violations: Tuple[int, ...] = ()

    @property
    def steps(self) -> int:
        return int(self.t.shape[0] - 1)


@dataclass(frozen=True)
class CostEstimate:
    """
    Monte Carlo estimate of a discounted cost.

    Attributes:
        mean: Sample mean of the path costs
        std_error: Sample standard deviation over sqrt(number of samples)
        n_paths: Number of simulated paths
        tail_bound: Bound on the cost discarded by truncating at the horizon
        bias_budget: Heuristic bound on the time-discretization bias
    """

    mean: float
    std_error: float
    n_paths: int
    tail_bound: float
    bias_budget: float
    dt: float
    horizon: float
    seed: int
    antithetic: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "dt": self.dt,
            "T": self.horizon,
            "tail_bound": self.tail_bound,
            "bias_budget": self.bias_budget,
            "seed": self.seed,
            "antithetic": self.antithetic,
        }


@njit(cache=True, nogil=True)
def _adversary_drift(x: float, mode: int, psi0: float, table_x0: float, table_dx: float, table: np.ndarray) -> float:
    if mode == 0:
        return psi0
    u = (x - table_x0) / table_dx
    last = table.shape[0] - 1
    if u <= 0.0:
        return table[0]
    if u >= last:
        return table[last]
    j = int(math.floor(u))
    if j >= last:
        j = last - 1
    w = u - j
    return table[j] + w * (table[j + 1] - table[j])


@njit(cache=True, nogil=True)
def _simulate_kernel(
    x0: float,
    m: float,
    sigma: float,
    alpha: float,
    beta: float,
    dt: float,
    xi: np.ndarray,
    mode: int,
    psi0: float,
    table_x0: float,
    table_dx: float,
    table: np.ndarray,
    X: np.ndarray,
    Y: np.ndarray,
    R: np.ndarray,
    B: np.ndarray,
    psi: np.ndarray,
    flags: np.ndarray,
) -> None:
    sq = math.sqrt(dt)
    width = beta - alpha
    x, dl, du = reflect_step(0.0, x0, alpha, beta)
    X[0] = x
    Y[0] = dl
    R[0] = du
    B[0] = 0.0
    psi[0] = _adversary_drift(x, mode, psi0, table_x0, table_dx, table)
    for k in range(xi.shape[0]):
        d_b = sq * xi[k]
        d_eta = (m + sigma * psi[k]) * dt + sigma * d_b
        flags[k + 1] = abs(d_eta) > width
        x, dl, du = reflect_step(X[k], d_eta, alpha, beta)
        X[k + 1] = x
        Y[k + 1] = Y[k] + dl
        R[k + 1] = R[k] + du
        B[k + 1] = B[k] + d_b
        psi[k + 1] = _adversary_drift(x, mode, psi0, table_x0, table_dx, table)


def _check_players(red: ReducedInstance, strat: StrategySpec, adv: AdversarySpec) -> None:
    try:
        strat.validate(red)
        adv.validate(red)
    except InstanceValidationError as e:
        raise SimulationError(str(e)) from e


def step_count(dt: float, horizon: float) -> int:
    return max(1, int(math.ceil(horizon / dt - 1e-9)))


def simulate_path(
    red: ReducedInstance,
    strat: StrategySpec,
    adv: AdversarySpec,
    x0: float,
    dt: float,
    T: float,
    seed: int,
    antithetic: bool = False,
) -> SimPath:
    """
    Simulate one reflected path.

    Args:
        red: Reduced instance
        strat: Controller strategy
        adv: Adversary, evaluated at the state at the start of each step
        x0: Initial workload in [0, b]
        dt: Euler step, at most 1e-2 * b / sigma
        T: Horizon, rounded up to a whole number of steps
        seed: Seed of the path's normal draws
        antithetic: Use the mirrored draws -xi

    Returns:
        The simulated path

    Raises:
        SimulationError: For a mismatched adversary, coarse dt or bad inputs
    """
    _check_players(red, strat, adv)
    if not (math.isfinite(x0) and 0.0 <= x0 <= red.b * (1.0 + 1e-12)):
        raise SimulationError(f"x0 must lie in [0, b] = [0, {red.b:.12g}], got {x0}")
    if not (math.isfinite(dt) and dt > 0.0) or not (math.isfinite(T) and T > 0.0):
        raise SimulationError("dt and T must be positive reals")
    if red.sigma > 0.0 and dt > COARSE_DT_FACTOR * red.b / red.sigma:
        raise SimulationError(f"dt={dt:.3g} exceeds the coarse-reflection guard {COARSE_DT_FACTOR * red.b / red.sigma:.3g}")
    if seed < 0:
        raise SimulationError("seed must be nonnegative")

    n = step_count(dt, T)
    xi = np.random.default_rng(seed).standard_normal(n)
    if not np.all(np.isfinite(xi)):
        raise SimulationError(f"non-finite normal draw for seed {seed}")
    if antithetic:
        xi = -xi

    alpha, beta = strat.interval()
    mode, psi0, table_x0, table_dx, table = adv.kernel_table()
    X = np.empty(n + 1)
    Y = np.empty(n + 1)
    R = np.empty(n + 1)
    B = np.empty(n + 1)
    psi = np.empty(n + 1)
    flags = np.zeros(n + 1, dtype=np.bool_)
    _simulate_kernel(
        float(x0), red.m, red.sigma, alpha, beta, dt, xi, mode, psi0, table_x0, table_dx, table, X, Y, R, B, psi, flags
    )

    violations = tuple(int(i) for i in np.flatnonzero(flags))
    if violations:
        logger.warning(f"seed {seed}: {len(violations)} step(s) crossed the whole interval; dt is too coarse")
    return SimPath(
        dt=float(dt),
        horizon=n * float(dt),
        t=float(dt) * np.arange(n + 1),
        X=X,
        Y=Y,
        R=R,
        B=B,
        psi=psi,
        seed=int(seed),
        x0=float(x0),
        beta=float(beta),
        antithetic=antithetic,
        double_violations=violations,
    )


def dynamics_residual(red: ReducedInstance, path: SimPath) -> float:
    """sup_k |X_k - (x0 + m t_k + sigma sum psi dt + sigma B_k + Y_k - R_k)|."""
    drift = np.concatenate(([0.0], np.cumsum(path.psi[:-1]) * path.dt))
    rebuilt = path.x0 + red.m * path.t + red.sigma * drift + red.sigma * path.B + path.Y - path.R
    return float(np.max(np.abs(path.X - rebuilt)))


def cost_components(red: ReducedInstance, path: SimPath, eps: float) -> Dict[str, float]:
    """
    Discounted holding, rejection and penalty parts of the path cost.

    Holding and penalty use left endpoints; rejection is a Stieltjes sum that
    includes the time-0 jump.
    """
    if not (math.isfinite(eps) and eps >= 0.0):
        raise SimulationError("eps must be a nonnegative real")
    disc = np.exp(-red.discount * path.t)
    left = disc[:-1]
    holding = path.dt * float(left @ np.asarray(holding_cost(red, path.X[:-1])))
    rejection = red.r * (float(path.R[0]) + float(disc[1:] @ np.diff(path.R)))
    psi = path.psi[:-1]
    if eps == 0.0:
        if np.any(psi != 0.0):
            raise SimulationError("eps = 0 with a nonzero perturbation: the penalty is undefined")
        penalty = 0.0
    else:
        penalty = path.dt * float(left @ (psi * psi)) / (2.0 * eps)
    return {"holding": holding, "rejection": rejection, "penalty": penalty}


def discounted_cost(red: ReducedInstance, path: SimPath, eps: float) -> float:
    """
    J = sum e^(-discount t) (h(X) dt + r dR - psi^2 / (2 eps) dt) along the path.

    Raises:
        SimulationError: If eps = 0 and the path carries a nonzero psi
    """
    parts = cost_components(red, path, eps)
    return parts["holding"] + parts["rejection"] - parts["penalty"]


def tail_bound(red: ReducedInstance, eps: float, horizon: float) -> float:
    """e^(-discount T) (h(b)/discount + r (|m| + sigma eps r + sigma)(T + 1))."""
    growth = red.r * (abs(red.m) + red.sigma * eps * red.r + red.sigma) * (horizon + 1.0)
    return math.exp(-red.discount * horizon) * (red.value_scale + growth)


def tail_horizon(red: ReducedInstance, eps: float, target: float = TAIL_TARGET) -> float:
    """
    Smallest horizon whose tail bound is at most ``target`` times h(b)/discount.

    Args:
        red: Reduced instance
        eps: Ambiguity parameter
        target: Fraction of the value scale allowed in the tail

    Returns:
        The horizon T
    """
    budget = target * red.value_scale

    def excess(horizon: float) -> float:
        return tail_bound(red, eps, horizon) - budget

    found = find_bracket(excess, lambda v: v <= 0.0, anchor=1.0, config=BracketConfig(direction=1.0))
    if found.value == 0.0:
        return found.point
    return float(brentq(excess, 0.0, found.point, xtol=1e-12))


def bias_budget(red: ReducedInstance, eps: float, dt: float) -> float:
    """sqrt(dt) sigma (r + Lip(h)/discount), the discretization-bias allowance."""
    return math.sqrt(dt) * red.sigma * (red.r + red.lipschitz_h / red.discount)


def path_seed(seed: int, index: int, antithetic: bool = False) -> Tuple[int, bool]:
    """Seed and mirroring of path ``index``; antithetic pairs share the seed of the even member."""
    if antithetic:
        return seed ^ (index - index % 2), bool(index % 2)
    return seed ^ index, False


def mc_estimate(
    red: ReducedInstance,
    strat: StrategySpec,
    adv: AdversarySpec,
    x0: float,
    eps: float,
    dt: float = 1e-3,
    T: Optional[float] = None,
    n_paths: int = 10_000,
    seed: int = 0,
    antithetic: bool = False,
    workers: Optional[int] = None,
    batch_size: int = 256,
) -> CostEstimate:
    """
    Estimate the discounted cost of (strat, adv) from x0.

    Paths are independent; with ``antithetic`` each mirrored pair contributes one
    averaged sample. Results do not depend on the worker count.

    Returns:
        The cost estimate

    Raises:
        SimulationError: Propagated from ``simulate_path``
    """
    config = SimulationConfig(
        dt=dt, horizon=T, n_paths=n_paths, seed=seed, antithetic=antithetic, batch_size=batch_size, workers=workers
    )
    return estimate(red, strat, adv, x0, eps, config)


def estimate(
    red: ReducedInstance, strat: StrategySpec, adv: AdversarySpec, x0: float, eps: float, config: SimulationConfig
) -> CostEstimate:
    """``mc_estimate`` driven by a ``SimulationConfig``."""
    horizon = config.resolve_horizon(red, eps)
    _check_players(red, strat, adv)
    group = 2 if config.antithetic else 1

    def run_batch(units: List[int]) -> Moments:
        samples = []
        for unit in units:
            costs = []
            for index in range(unit * group, (unit + 1) * group):
                s, mirrored = path_seed(config.seed, index, config.antithetic)
                path = simulate_path(red, strat, adv, x0, config.dt, horizon, s, antithetic=mirrored)
                costs.append(discounted_cost(red, path, eps))
            samples.append(math.fsum(costs) / group)
        return Moments.from_samples(samples)

    batcher = PathBatcher(batch_size=max(1, config.batch_size // group), workers=config.workers)
    moments = Moments()
    for part in batcher.process_paths(range(config.n_paths // group), run_batch):
        moments = moments.merge(part)

    est = CostEstimate(
        mean=moments.mean,
        std_error=moments.std_error,
        n_paths=config.n_paths,
        tail_bound=tail_bound(red, eps, step_count(config.dt, horizon) * config.dt),
        bias_budget=bias_budget(red, eps, config.dt),
        dt=config.dt,
        horizon=step_count(config.dt, horizon) * config.dt,
        seed=config.seed,
        antithetic=config.antithetic,
    )
    if est.tail_bound > TAIL_TARGET * red.value_scale:
        logger.warning(f"tail bound {est.tail_bound:.3g} exceeds {TAIL_TARGET:g} of the value scale; increase the horizon")
    logger.info(
        f"{strat.describe()} vs {adv.describe()}: mean={est.mean:.6g} se={est.std_error:.3g} "
        f"({est.n_paths} paths, T={est.horizon:.4g})"
    )
    return est


@dataclass(frozen=True, eq=False)
class LiftedPath:
    """
    A reduced path lifted to queue lengths.

    Arrays indexed by class have shape (n + 1, I) in user class order.

    Attributes:
        X_hat: Queue lengths gamma(X)
        Y_hat: Per-class idleness recovered from the multiclass dynamics
        R_hat: Rejections, all from class i_star
        B_hat: Multiclass Brownian motion consistent with B
        psi_hat: Per-class split of the perturbation
        cost: Multiclass discounted cost of the lifted path
        reduced_cost: Discounted cost of the reduced path
        identity_residuals: Relative gaps of the per-path identities
    """

    t: np.ndarray
    X_hat: np.ndarray
    Y_hat: np.ndarray
    R_hat: np.ndarray
    B_hat: np.ndarray
    psi_hat: np.ndarray
    cost: float
    reduced_cost: float
    identity_residuals: Dict[str, float] = field(default_factory=dict)

    def identities_hold(self, tol: float = LIFT_TOL) -> bool:
        return all(v <= tol for v in self.identity_residuals.values())


def lift_path(path: SimPath, red: ReducedInstance, inst: MultiClassInstance) -> LiftedPath:
    """
    Lift a reduced path to the multiclass game.

    The perturbation is split as psi_hat_i proportional to (theta sigma_hat)_i eps_hat_i,
    and B_hat = u B + (I - u u^T) W with u = theta sigma_hat / sigma and W an independent
    Brownian motion seeded from the path seed. The costs use the ambiguity of ``inst``.

    Raises:
        SimulationError: If ``inst`` does not reduce to ``red``
    """
    if inst.class_count != red.class_count or not red.matches(reduce_instance(inst)):
        raise SimulationError("instance does not match the reduced instance of the path")
    eps_hat = np.asarray(inst.eps_hat)
    eps = float(red.eps_weights @ eps_hat)
    n = path.steps
    dt = path.dt
    mu = np.asarray(inst.mu)
    sigma_hat = np.sqrt(2.0 * np.asarray(inst.lam))
    m_hat = np.asarray(inst.lambda_hat) - inst.rho * np.asarray(inst.mu_hat)

    X_hat = gamma_lift(red, inst, path.X)
    x_hat0 = gamma_lift(red, inst, path.x0)
    R_hat = np.zeros_like(X_hat)
    R_hat[:, red.i_star] = path.R * mu[red.i_star]

    u = red.sigma_theta / red.sigma
    rng = np.random.default_rng([path.seed, 1])
    W = np.zeros((n + 1, red.class_count))
    W[1:] = np.cumsum(math.sqrt(dt) * rng.standard_normal((n, red.class_count)), axis=0)
    B_hat = np.outer(path.B, u) + W - np.outer(W @ u, u)

    weights = red.sigma_theta * eps_hat
    psi_hat = np.outer(red.sigma * path.psi, weights / float(red.sigma_theta @ weights))
    drift = np.zeros_like(X_hat)
    drift[1:] = np.cumsum(psi_hat[:-1] * sigma_hat, axis=0) * dt
    Y_hat = X_hat - x_hat0 - np.outer(path.t, m_hat) - drift - B_hat * sigma_hat + R_hat

    disc = np.exp(-red.discount * path.t)
    h_hat = np.asarray(inst.h_hat)
    rate_hat = (psi_hat**2 / (2.0 * eps_hat)).sum(axis=1)
    holding_hat = dt * float(disc[:-1] @ (X_hat[:-1] @ h_hat))
    rejection_hat = float(R_hat[0] @ np.asarray(inst.r_hat)) + float(disc[1:] @ (np.diff(R_hat, axis=0) @ np.asarray(inst.r_hat)))
    cost = holding_hat + rejection_hat - dt * float(disc[:-1] @ rate_hat[:-1])
    reduced = discounted_cost(red, path, eps)

    h_path = np.asarray(holding_cost(red, path.X))
    rate = path.psi**2 / (2.0 * eps)
    residuals = {
        "holding": float(np.max(np.abs(X_hat @ h_hat - h_path))) / max(1.0, red.h_max),
        "idleness": float(np.max(np.abs(Y_hat @ red.theta - path.Y))) / max(1.0, red.b),
        "penalty": float(np.max(np.abs(rate_hat - rate))) / max(1.0, float(rate.max())),
        "cost": abs(cost - reduced) / max(1.0, abs(reduced)),
    }
    return LiftedPath(
        t=path.t,
        X_hat=X_hat,
        Y_hat=Y_hat,
        R_hat=R_hat,
        B_hat=B_hat,
        psi_hat=psi_hat,
        cost=cost,
        reduced_cost=reduced,
        identity_residuals=residuals,
    )


def instance_at_eps(inst: MultiClassInstance, eps: float) -> MultiClassInstance:
    """Rescale eps_hat so that the aggregated ambiguity equals ``eps`` (> 0)."""
    current = float(reduce_instance(inst).eps_weights @ np.asarray(inst.eps_hat))
    if math.isclose(current, eps, rel_tol=1e-14):
        return inst
    return inst.with_eps_hat([e * eps / current for e in inst.eps_hat])


@dataclass(frozen=True)
class Deviations:
    """
    Unilateral deviations tested against the saddle.

    Attributes:
        beta_shifts: Relative threshold shifts under the feedback adversary
        constant_fractions: Constant adversaries psi0 = f * eps * sigma * r under the optimal threshold
        include_null: Also test the null adversary
        lift_paths: Number of saddle paths lifted to the multiclass game
    """

    beta_shifts: Sequence[float] = (-0.25, 0.25)
    constant_fractions: Sequence[float] = (0.5, 1.0)
    include_null: bool = True
    lift_paths: int = 100


def equilibrium_report(
    red: ReducedInstance,
    sol: ValueSolution,
    deviations: Optional[Deviations] = None,
    mc_config: Optional[SimulationConfig] = None,
    x0: float = 0.0,
    inst: Optional[MultiClassInstance] = None,
) -> CheckCollector:
    """
    Compare unilateral deviations with the saddle by Monte Carlo on common seeds.

    Controller deviations must not lower the cost and adversary deviations must
    not raise it, each up to three combined standard errors. With ``inst`` the
    first saddle paths are also lifted and their multiclass cost compared.

    Returns:
        Collected checks
    """
    if sol.classification is not Classification.PASTED:
        raise SimulationError("equilibrium report needs a pasted value solution")
    deviations = deviations or Deviations()
    config = mc_config or SimulationConfig()
    eps = sol.eps
    report = CheckCollector("equilibrium_report")
    feedback = FeedbackAdversary(sol)
    optimal = ReflectingStrategy(sol.beta)

    saddle = estimate(red, optimal, feedback, x0, eps, config)
    value = sol.value_at(x0)
    allowance = 3.0 * saddle.std_error + saddle.tail_bound + saddle.bias_budget
    report.collect(
        "saddle_vs_value",
        abs(saddle.mean - value),
        allowance,
        metadata={"mean": saddle.mean, "std_error": saddle.std_error, "value": value, "x0": x0},
    )

    for shift in deviations.beta_shifts:
        beta = min(sol.beta * (1.0 + shift), red.b)
        est = estimate(red, ReflectingStrategy(beta), feedback, x0, eps, config)
        gap = est.mean - saddle.mean
        slack = 3.0 * math.hypot(est.std_error, saddle.std_error)
        report.collect(
            f"beta_shift_{shift:+g}",
            gap,
            passed=gap >= -slack,
            metadata={"beta": beta, "mean": est.mean, "std_error": est.std_error, "slack": slack},
        )

    adversaries: List[Tuple[str, AdversarySpec]] = []
    if deviations.include_null:
        adversaries.append(("null", NullAdversary()))
    for frac in deviations.constant_fractions:
        adversaries.append((f"const_{frac:g}", ConstantAdversary(frac * eps * red.sigma * red.r)))
    for name, adv in adversaries:
        est = estimate(red, optimal, adv, x0, eps, config)
        gap = est.mean - saddle.mean
        slack = 3.0 * math.hypot(est.std_error, saddle.std_error)
        report.collect(
            f"adversary_{name}",
            gap,
            passed=gap <= slack,
            metadata={"psi0": getattr(adv, "psi0", 0.0), "mean": est.mean, "std_error": est.std_error, "slack": slack},
        )

    if inst is not None and deviations.lift_paths > 0:
        lifted_inst = instance_at_eps(inst, eps) if eps > 0.0 else inst
        horizon = config.resolve_horizon(red, eps)
        worst = 0.0
        count = min(deviations.lift_paths, config.n_paths)
        for index in range(count):
            s, mirrored = path_seed(config.seed, index, config.antithetic)
            path = simulate_path(red, optimal, feedback, x0, config.dt, horizon, s, antithetic=mirrored)
            lifted = lift_path(path, red, lifted_inst)
            worst = max(worst, max(lifted.identity_residuals.values()))
        report.collect("lift_identity_max", worst, LIFT_TOL, metadata={"paths": count})

    logger.info(f"equilibrium report eps={eps:.6g}: {'passed' if report.passed else 'FAILED'}")
    return report
