"""
Multiclass instance data and the workload reduction.

This module holds the I-class problem data, validates it, and projects it onto
the one-dimensional workload game: drift, volatility, aggregated ambiguity,
the piecewise-linear holding cost h, the rejection price r and the lifting map
gamma that fills the cheapest buffers first.

Queue lengths are always expressed in customers (queue-length coordinates).
A per-class workload vector w converts to queue lengths through xi_i = mu_i * w_i.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

CRITICAL_LOAD_TOL = 1e-12
DOMAIN_TOL = 1e-12


class InstanceValidationError(ValueError):
    """Raised when instance data violates a modelling invariant."""

    def __init__(self, message: str, field_name: Optional[str] = None) -> None:
        super().__init__(message)
        self.field_name = field_name


def _as_tuple(name: str, values: Sequence[float], count: int) -> Tuple[float, ...]:
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError) as e:
        raise InstanceValidationError(f"{name} must be a sequence of numbers", name) from e
    if len(out) != count:
        raise InstanceValidationError(f"{name} has {len(out)} entries, expected {count}", name)
    if not all(math.isfinite(v) for v in out):
        raise InstanceValidationError(f"{name} contains non-finite values", name)
    return out


def _require_positive(name: str, values: Tuple[float, ...]) -> None:
    if any(v <= 0.0 for v in values):
        raise InstanceValidationError(f"{name} must be strictly positive", name)


@dataclass(frozen=True)
class MultiClassInstance:
    """
    Full I-class problem data.

    Attributes:
        lam: First-order arrival rates (lambda_i)
        mu: First-order service rates
        lambda_hat: Second-order arrival rates
        mu_hat: Second-order service rates
        h_hat: Holding cost per customer per unit time
        r_hat: Rejection cost per customer
        b_hat: Buffer caps in customers
        eps_hat: Per-class ambiguity weights
        discount: Discount rate
    """

    lam: Tuple[float, ...]
    mu: Tuple[float, ...]
    lambda_hat: Tuple[float, ...]
    mu_hat: Tuple[float, ...]
    h_hat: Tuple[float, ...]
    r_hat: Tuple[float, ...]
    b_hat: Tuple[float, ...]
    eps_hat: Tuple[float, ...]
    discount: float

    def __post_init__(self) -> None:
        count = len(self.lam)
        if count < 1:
            raise InstanceValidationError("class_count must be a positive integer", "class_count")
        for name in ("lam", "mu", "lambda_hat", "mu_hat", "h_hat", "r_hat", "b_hat", "eps_hat"):
            object.__setattr__(self, name, _as_tuple(name, getattr(self, name), count))
        for name in ("lam", "mu", "h_hat", "r_hat", "b_hat", "eps_hat"):
            _require_positive(name, getattr(self, name))
        if not (math.isfinite(self.discount) and self.discount > 0.0):
            raise InstanceValidationError("discount must be a positive real", "discount")
        object.__setattr__(self, "discount", float(self.discount))

        load = math.fsum(l / m for l, m in zip(self.lam, self.mu))
        if abs(load - 1.0) > CRITICAL_LOAD_TOL:
            raise InstanceValidationError(
                f"instance is not critically loaded: sum(lambda/mu) = {load!r}; use renormalize=True to rescale lambda",
                "lambda",
            )

    @property
    def class_count(self) -> int:
        return len(self.lam)

    @property
    def rho(self) -> np.ndarray:
        return np.asarray(self.lam) / np.asarray(self.mu)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], renormalize: bool = False) -> "MultiClassInstance":
        """
        Build an instance from the JSON instance-file layout.

        Either ``eps_hat`` or ``kappa`` (a list of [kappa_1, kappa_2] pairs) must be given.

        Args:
            data: Mapping with the instance-file keys
            renormalize: Rescale lambda so that sum(lambda/mu) = 1 exactly

        Returns:
            The validated instance
        """
        required = ("class_count", "lambda", "mu", "lambda_hat", "mu_hat", "h_hat", "r_hat", "b_hat", "discount")
        for key in required:
            if key not in data:
                raise InstanceValidationError(f"missing key '{key}'", key)
        count = data["class_count"]
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise InstanceValidationError("class_count must be a positive integer", "class_count")

        if "eps_hat" in data:
            eps_hat: Sequence[float] = data["eps_hat"]
        elif "kappa" in data:
            eps_hat = epsilon_from_kappa(data["kappa"])
        else:
            raise InstanceValidationError("one of 'eps_hat' or 'kappa' is required", "eps_hat")

        lam = _as_tuple("lambda", data["lambda"], count)
        mu = _as_tuple("mu", data["mu"], count)
        if renormalize:
            _require_positive("lambda", lam)
            _require_positive("mu", mu)
            load = math.fsum(l / m for l, m in zip(lam, mu))
            logger.info(f"Renormalizing arrival rates by factor {1.0 / load:.15g}")
            lam = tuple(l / load for l in lam)

        return cls(
            lam=lam,
            mu=mu,
            lambda_hat=data["lambda_hat"],
            mu_hat=data["mu_hat"],
            h_hat=data["h_hat"],
            r_hat=data["r_hat"],
            b_hat=data["b_hat"],
            eps_hat=eps_hat,
            discount=data["discount"],
        )

    def to_mapping(self) -> dict:
        return {
            "class_count": self.class_count,
            "lambda": list(self.lam),
            "mu": list(self.mu),
            "lambda_hat": list(self.lambda_hat),
            "mu_hat": list(self.mu_hat),
            "h_hat": list(self.h_hat),
            "r_hat": list(self.r_hat),
            "b_hat": list(self.b_hat),
            "eps_hat": list(self.eps_hat),
            "discount": self.discount,
        }

    def with_eps_hat(self, eps_hat: Sequence[float]) -> "MultiClassInstance":
        return replace(self, eps_hat=tuple(eps_hat))


@dataclass(frozen=True, eq=False)
class ReducedInstance:
    """
    One-dimensional workload game.

    Vectors indexed by class (``theta``, ``sigma_theta``, ``eps_weights``) are in the
    user's class order. ``class_order`` lists user indices in canonical order
    (h_hat*mu descending, stable); buffers fill in the reverse of that order.

    Attributes:
        theta: theta_i = 1 / mu_i
        m: Workload drift
        sigma: Workload volatility
        b: Workload cap, sum of theta_i * b_hat_i
        eps: Aggregated ambiguity parameter
        discount: Discount rate
        knots_x: Workloads at the I+1 breakpoints of h
        knots_h: Values of h at the breakpoints
        slopes: Slope of h on each of the I segments
        r: Rejection price, min r_hat_i * mu_i
        i_star: User index attaining r (smallest on ties)
        class_order: Canonical order as a tuple of user indices
        sigma_theta: The vector theta_i * sqrt(2 lambda_i)
        eps_weights: Weights (theta sigma_hat)_i^2 / sigma^2 of the ambiguity aggregation
    """

    theta: np.ndarray
    m: float
    sigma: float
    b: float
    eps: float
    discount: float
    knots_x: np.ndarray
    knots_h: np.ndarray
    slopes: np.ndarray
    r: float
    i_star: int
    class_order: Tuple[int, ...]
    sigma_theta: np.ndarray = field(repr=False)
    eps_weights: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for name in ("theta", "knots_x", "knots_h", "slopes", "sigma_theta", "eps_weights"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def class_count(self) -> int:
        return int(self.theta.shape[0])

    @property
    def fill_order(self) -> Tuple[int, ...]:
        return tuple(reversed(self.class_order))

    @property
    def h_breakpoints(self) -> Tuple[Tuple[float, float, float], ...]:
        """(workload, cost, slope) knots; each slope is that of the segment to the right, the last repeats."""
        slopes = list(self.slopes) + [float(self.slopes[-1])]
        return tuple((float(x), float(h), float(s)) for x, h, s in zip(self.knots_x, self.knots_h, slopes))

    @property
    def h_max(self) -> float:
        return float(self.knots_h[-1])

    @property
    def lipschitz_h(self) -> float:
        return float(self.slopes.max())

    @property
    def value_scale(self) -> float:
        """h(b)/discount, the natural size of discounted costs."""
        return self.h_max / self.discount

    @property
    def paste_scale(self) -> float:
        """(2/sigma^2) h(b), the size of the curvature terms in the HJB."""
        return 2.0 / self.sigma**2 * self.h_max

    def with_eps(self, eps: float) -> "ReducedInstance":
        if not (math.isfinite(eps) and eps >= 0.0):
            raise InstanceValidationError("eps must be a nonnegative real", "eps")
        return replace(self, eps=float(eps))

    def matches(self, other: "ReducedInstance") -> bool:
        """True if both describe the same game up to the ambiguity parameter."""
        if self is other:
            return True
        scalars = (self.m, self.sigma, self.b, self.discount, self.r)
        other_scalars = (other.m, other.sigma, other.b, other.discount, other.r)
        if any(not math.isclose(a, c, rel_tol=1e-12, abs_tol=1e-14) for a, c in zip(scalars, other_scalars)):
            return False
        if self.knots_x.shape != other.knots_x.shape:
            return False
        return bool(
            np.allclose(self.knots_x, other.knots_x, rtol=1e-12, atol=1e-14)
            and np.allclose(self.knots_h, other.knots_h, rtol=1e-12, atol=1e-14)
        )

    def holding_slope(self, x: float) -> float:
        """Right derivative h'(x+) (the last slope at x = b)."""
        j = int(np.searchsorted(self.knots_x, x, side="right")) - 1
        return float(self.slopes[min(max(j, 0), self.slopes.shape[0] - 1)])


def epsilon_from_kappa(kappa_pairs: Sequence[Sequence[float]]) -> Tuple[float, ...]:
    """
    Per-class ambiguity from a pair of penalty weights: eps_hat_i = (kappa_1i + kappa_2i) / 2.

    Args:
        kappa_pairs: One (kappa_1, kappa_2) pair per class

    Returns:
        The eps_hat vector
    """
    out = []
    for i, pair in enumerate(kappa_pairs):
        if len(pair) != 2:
            raise InstanceValidationError(f"kappa entry {i} must be a pair", "kappa")
        k1, k2 = float(pair[0]), float(pair[1])
        if not (math.isfinite(k1) and math.isfinite(k2)) or k1 <= 0.0 or k2 <= 0.0:
            raise InstanceValidationError(f"kappa entry {i} must be positive and finite", "kappa")
        out.append(0.5 * (k1 + k2))
    return tuple(out)


def reduce_instance(inst: MultiClassInstance) -> ReducedInstance:
    """
    Project the multiclass game onto workload.

    Args:
        inst: Validated multiclass instance

    Returns:
        The reduced one-dimensional game
    """
    lam = np.asarray(inst.lam)
    mu = np.asarray(inst.mu)
    theta = 1.0 / mu
    rho = lam / mu
    m_hat = np.asarray(inst.lambda_hat) - rho * np.asarray(inst.mu_hat)
    m = float(theta @ m_hat)

    sigma_theta = theta * np.sqrt(2.0 * lam)
    sigma2 = float(sigma_theta @ sigma_theta)
    sigma = math.sqrt(sigma2)
    eps_weights = sigma_theta**2 / sigma2
    eps = float(eps_weights @ np.asarray(inst.eps_hat))

    hmu = np.asarray(inst.h_hat) * mu
    class_order = tuple(sorted(range(inst.class_count), key=lambda i: -hmu[i]))
    fill = list(reversed(class_order))

    b_hat = np.asarray(inst.b_hat)
    h_hat = np.asarray(inst.h_hat)
    knots_x = np.concatenate(([0.0], np.cumsum(theta[fill] * b_hat[fill])))
    knots_h = np.concatenate(([0.0], np.cumsum(h_hat[fill] * b_hat[fill])))
    slopes = hmu[fill]

    r_candidates = np.asarray(inst.r_hat) * mu
    i_star = int(np.argmin(r_candidates))

    red = ReducedInstance(
        theta=theta,
        m=m,
        sigma=sigma,
        b=float(knots_x[-1]),
        eps=eps,
        discount=inst.discount,
        knots_x=knots_x,
        knots_h=knots_h,
        slopes=slopes,
        r=float(r_candidates[i_star]),
        i_star=i_star,
        class_order=class_order,
        sigma_theta=sigma_theta,
        eps_weights=eps_weights,
    )
    logger.debug(f"Reduced instance: m={red.m:.6g}, sigma={red.sigma:.6g}, b={red.b:.6g}, eps={red.eps:.6g}, r={red.r:.6g}")
    return red


def _check_domain(red: ReducedInstance, x: np.ndarray, name: str = "x") -> np.ndarray:
    tol = DOMAIN_TOL * max(1.0, red.b)
    if x.size and (not np.all(np.isfinite(x)) or x.min() < -tol or x.max() > red.b + tol):
        raise InstanceValidationError(f"{name} must lie in [0, b] = [0, {red.b:.12g}]", name)
    return np.clip(x, 0.0, red.b)


def holding_cost(red: ReducedInstance, x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Evaluate the minimal holding cost h at workload x.

    Args:
        red: Reduced instance
        x: Workload or array of workloads in [0, b]

    Returns:
        h(x), a float for scalar input
    """
    xa = _check_domain(red, np.asarray(x, dtype=np.float64))
    out = np.interp(xa, red.knots_x, red.knots_h)
    return float(out) if out.ndim == 0 else out


def gamma_lift(red: ReducedInstance, inst: MultiClassInstance, x: ArrayLike) -> np.ndarray:
    """
    Map workload to the cheapest queue-length vector carrying it.

    Buffers are filled in increasing h_hat*mu order; at most one is partially
    filled. At an exact breakpoint the next buffer is left empty.

    Args:
        red: Reduced instance of ``inst``
        inst: Multiclass instance
        x: Workload or 1-d array of workloads in [0, b]

    Returns:
        Queue lengths in user class order, shape (I,) or (len(x), I)
    """
    if inst.class_count != red.class_count:
        raise InstanceValidationError("instance and reduced instance have different class counts", "class_count")
    xa = _check_domain(red, np.asarray(x, dtype=np.float64))
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)

    fill = list(red.fill_order)
    caps = red.theta[fill] * np.asarray(inst.b_hat)[fill]
    before = red.knots_x[:-1]
    excess = xa[:, None] - before[None, :]
    partial = np.clip(excess, 0.0, caps[None, :]) * np.asarray(inst.mu)[fill][None, :]
    filled = np.where(excess >= caps[None, :], np.asarray(inst.b_hat)[fill][None, :], partial)

    out = np.empty_like(filled)
    out[:, fill] = filled
    return out[0] if scalar else out


def eps_hat_order(inst: MultiClassInstance, eps_hat_a: Sequence[float], eps_hat_b: Sequence[float]) -> bool:
    """
    Partial order on ambiguity vectors: a precedes b if its aggregated eps is not larger.

    The multiclass value is nondecreasing along this order.
    """
    red = reduce_instance(inst)
    a = float(red.eps_weights @ np.asarray(eps_hat_a, dtype=np.float64))
    c = float(red.eps_weights @ np.asarray(eps_hat_b, dtype=np.float64))
    return a <= c
