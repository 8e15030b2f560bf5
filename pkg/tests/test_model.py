import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import linprog

from ambictrl.model import (
    InstanceValidationError,
    MultiClassInstance,
    epsilon_from_kappa,
    eps_hat_order,
    gamma_lift,
    holding_cost,
    reduce_instance,
)
from tests.conftest import three_class_mapping


@pytest.mark.core
class TestMultiClassInstance:
    """Test cases for instance parsing and validation."""

    def test_from_mapping(self) -> None:
        """Test building the default instance from its mapping."""
        inst = MultiClassInstance.from_mapping(three_class_mapping())
        assert inst.class_count == 3
        assert inst.mu == (3.0, 1.0, 1.5)
        assert_allclose(inst.rho, [1 / 3, 1 / 3, 1 / 3])

    def test_shipped_instance_matches_mapping(self, three_class: MultiClassInstance) -> None:
        """Test that the packaged instance file holds the documented defaults."""
        assert three_class == MultiClassInstance.from_mapping(three_class_mapping())

    def test_not_critically_loaded(self) -> None:
        """Test that an off-critical instance is rejected and names lambda."""
        data = three_class_mapping()
        data["lambda"] = [1.0, 0.5, 0.5]
        with pytest.raises(InstanceValidationError) as exc:
            MultiClassInstance.from_mapping(data)
        assert exc.value.field_name == "lambda"

    def test_renormalize(self) -> None:
        """Test that renormalization rescales lambda to exact critical load."""
        data = three_class_mapping()
        data["lambda"] = [2.0, 2.0 / 3.0, 1.0]
        inst = MultiClassInstance.from_mapping(data, renormalize=True)
        assert math.isclose(float(np.sum(inst.rho)), 1.0, abs_tol=1e-12)
        assert_allclose(inst.lam, [1.0, 1 / 3, 0.5])

    @pytest.mark.parametrize("key", ["mu", "h_hat", "r_hat", "b_hat", "eps_hat"])
    def test_nonpositive_entries(self, key: str) -> None:
        """Test that nonpositive rates, costs and caps are rejected."""
        data = three_class_mapping()
        data[key] = [0.0] + list(data[key][1:])
        with pytest.raises(InstanceValidationError) as exc:
            MultiClassInstance.from_mapping(data)
        assert exc.value.field_name in (key, "lambda")

    def test_wrong_length(self) -> None:
        """Test that vectors must have class_count entries."""
        data = three_class_mapping()
        data["h_hat"] = [1.0, 2.5]
        with pytest.raises(InstanceValidationError) as exc:
            MultiClassInstance.from_mapping(data)
        assert exc.value.field_name == "h_hat"

    def test_missing_key(self) -> None:
        """Test that a missing key is reported by name."""
        data = three_class_mapping()
        del data["discount"]
        with pytest.raises(InstanceValidationError) as exc:
            MultiClassInstance.from_mapping(data)
        assert exc.value.field_name == "discount"

    def test_nonpositive_discount(self) -> None:
        """Test that the discount rate must be positive."""
        data = three_class_mapping()
        data["discount"] = 0.0
        with pytest.raises(InstanceValidationError):
            MultiClassInstance.from_mapping(data)

    def test_kappa_in_place_of_eps_hat(self) -> None:
        """Test that kappa pairs give eps_hat as their mean."""
        data = three_class_mapping()
        del data["eps_hat"]
        data["kappa"] = [[1.0, 3.0], [2.0, 2.0], [0.5, 1.5]]
        inst = MultiClassInstance.from_mapping(data)
        assert inst.eps_hat == (2.0, 2.0, 1.0)

    def test_kappa_must_be_pairs(self) -> None:
        """Test kappa validation."""
        with pytest.raises(InstanceValidationError):
            epsilon_from_kappa([[1.0, 2.0, 3.0]])
        with pytest.raises(InstanceValidationError):
            epsilon_from_kappa([[1.0, -2.0]])

    def test_round_trip_mapping(self, three_class: MultiClassInstance) -> None:
        """Test that to_mapping feeds back into from_mapping."""
        assert MultiClassInstance.from_mapping(three_class.to_mapping()) == three_class


@pytest.mark.core
class TestReduceInstance:
    """Test cases for the workload reduction on the default instance."""

    @pytest.fixture(autouse=True)
    def setup_reduced(self, three_class: MultiClassInstance) -> None:
        """Set up test fixtures."""
        self.inst = three_class
        self.red = reduce_instance(three_class)

    def test_scalars(self) -> None:
        """Test drift, volatility, cap, ambiguity and rejection price."""
        assert math.isclose(self.red.m, -2.0 / 3.0, rel_tol=1e-13)
        assert math.isclose(self.red.sigma**2, 4.0 / 3.0, rel_tol=1e-13)
        assert math.isclose(self.red.b, 37.0 / 3.0, rel_tol=1e-13)
        assert math.isclose(self.red.eps, 1.0, rel_tol=1e-13)
        assert self.red.r == 1.0
        assert self.red.discount == 1.0

    def test_i_star_is_zero_based(self) -> None:
        """Test that the cheapest rejection class is the second class (index 1)."""
        assert self.red.i_star == 1

    def test_knots(self) -> None:
        """Test the breakpoints of h."""
        assert_allclose(self.red.knots_x, [0.0, 4.0, 11.0, 37.0 / 3.0], rtol=1e-13)
        assert_allclose(self.red.knots_h, [0.0, 9.0, 26.5, 30.5], rtol=1e-13)
        assert_allclose(self.red.slopes, [2.25, 2.5, 3.0], rtol=1e-13)
        assert self.red.class_order == (0, 1, 2)
        assert self.red.fill_order == (2, 1, 0)

    def test_eps_weights(self) -> None:
        """Test the aggregation weights of eps_hat."""
        assert_allclose(self.red.eps_weights, [1 / 6, 1 / 2, 1 / 3], rtol=1e-13)
        assert math.isclose(float(self.red.eps_weights.sum()), 1.0, rel_tol=1e-13)

    def test_arrays_are_read_only(self) -> None:
        """Test that the reduced arrays cannot be mutated."""
        with pytest.raises(ValueError):
            self.red.knots_x[0] = 1.0

    def test_eps_homogeneity(self) -> None:
        """Test that doubling every eps_hat doubles eps and leaves the rest unchanged."""
        doubled = reduce_instance(self.inst.with_eps_hat([2.0, 2.0, 2.0]))
        assert math.isclose(doubled.eps, 2.0 * self.red.eps, rel_tol=1e-13)
        assert doubled.matches(self.red)

    def test_with_eps(self) -> None:
        """Test replacing the ambiguity parameter."""
        red = self.red.with_eps(0.25)
        assert red.eps == 0.25
        assert red.matches(self.red)
        with pytest.raises(InstanceValidationError):
            self.red.with_eps(-1.0)

    def test_holding_slope(self) -> None:
        """Test right derivatives of h at and between knots."""
        assert self.red.holding_slope(0.0) == 2.25
        assert self.red.holding_slope(5.0) == 2.5
        assert self.red.holding_slope(12.0) == 3.0
        assert self.red.holding_slope(self.red.b) == 3.0
        assert self.red.lipschitz_h == 3.0

    def test_scales(self) -> None:
        """Test the value and curvature scales."""
        assert math.isclose(self.red.value_scale, 30.5, rel_tol=1e-13)
        assert math.isclose(self.red.paste_scale, 1.5 * 30.5, rel_tol=1e-13)


@pytest.mark.core
class TestHoldingCostAndLift:
    """Test cases for h and the cheapest-fill lift."""

    @pytest.fixture(autouse=True)
    def setup_reduced(self, three_class: MultiClassInstance) -> None:
        """Set up test fixtures."""
        self.inst = three_class
        self.red = reduce_instance(three_class)

    def test_holding_cost_values(self) -> None:
        """Test h at knots and inside segments."""
        assert holding_cost(self.red, 0.0) == 0.0
        assert math.isclose(holding_cost(self.red, 2.0), 4.5)
        assert math.isclose(holding_cost(self.red, 11.0), 26.5)
        assert math.isclose(holding_cost(self.red, 12.0), 29.5)
        assert math.isclose(holding_cost(self.red, self.red.b), 30.5)

    def test_holding_cost_vectorized(self) -> None:
        """Test that array input gives an array."""
        out = holding_cost(self.red, np.array([0.0, 4.0, 11.0]))
        assert isinstance(out, np.ndarray)
        assert_allclose(out, [0.0, 9.0, 26.5])

    def test_holding_cost_outside_domain(self) -> None:
        """Test that workloads outside [0, b] are rejected."""
        with pytest.raises(InstanceValidationError):
            holding_cost(self.red, -0.1)
        with pytest.raises(InstanceValidationError):
            holding_cost(self.red, self.red.b + 0.1)

    def test_gamma_fills_cheapest_first(self) -> None:
        """Test the lift at interior points and breakpoints."""
        assert_allclose(gamma_lift(self.red, self.inst, 2.0), [0.0, 0.0, 3.0], atol=1e-12)
        assert_allclose(gamma_lift(self.red, self.inst, 4.0), [0.0, 0.0, 6.0], atol=1e-12)
        assert_allclose(gamma_lift(self.red, self.inst, 5.0), [0.0, 1.0, 6.0], atol=1e-12)
        assert_allclose(gamma_lift(self.red, self.inst, self.red.b), [4.0, 7.0, 6.0], atol=1e-12)
        assert_allclose(gamma_lift(self.red, self.inst, 0.0), [0.0, 0.0, 0.0], atol=1e-12)

    def test_gamma_reproduces_workload_and_cost(self) -> None:
        """Test theta . gamma(x) = x and h_hat . gamma(x) = h(x) on a dense grid."""
        x = np.linspace(0.0, self.red.b, 997)
        lifted = gamma_lift(self.red, self.inst, x)
        assert lifted.shape == (997, 3)
        assert_allclose(lifted @ self.red.theta, x, atol=1e-12)
        assert_allclose(lifted @ np.asarray(self.inst.h_hat), holding_cost(self.red, x), atol=1e-12)
        assert np.all(lifted <= np.asarray(self.inst.b_hat))

    def test_gamma_at_most_one_partial_buffer(self) -> None:
        """Test that at most one class is strictly between empty and full."""
        x = np.linspace(0.0, self.red.b, 501)
        lifted = gamma_lift(self.red, self.inst, x)
        caps = np.asarray(self.inst.b_hat)
        partial = (lifted > 0.0) & (lifted < caps)
        assert int(partial.sum(axis=1).max()) <= 1


@pytest.mark.core
class TestEpsHatOrder:
    """Test cases for the partial order on ambiguity vectors."""

    def test_order(self, three_class: MultiClassInstance) -> None:
        """Test that raising one eps_hat moves up the order."""
        assert eps_hat_order(three_class, [1.0, 1.0, 1.0], [2.0, 1.0, 1.0])
        assert not eps_hat_order(three_class, [2.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        assert eps_hat_order(three_class, [1.0, 1.0, 1.0], [1.0, 1.0, 1.0])


@pytest.mark.core
class TestHoldingCostProperties:
    """Convexity of h and regularity of the lift, checked against independent minimizations."""

    @pytest.fixture(autouse=True)
    def setup_reduced(self, three_class: MultiClassInstance) -> None:
        """Set up test fixtures."""
        self.inst = three_class
        self.red = reduce_instance(three_class)
        self.h_hat = np.asarray(three_class.h_hat)
        self.b_hat = np.asarray(three_class.b_hat)

    @pytest.mark.parametrize("x, expected", [(0.0, [0.0, 0.0, 0.0]), (11.0, [0.0, 7.0, 6.0]), (12.0, [3.0, 7.0, 6.0])])
    def test_gamma_documented_points(self, x: float, expected) -> None:
        """Test the lift at the empty state, the last breakpoint and inside the last segment."""
        assert_allclose(gamma_lift(self.red, self.inst, x), expected, atol=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_holding_cost_convex(self, seed: int) -> None:
        """Test h(t x + (1 - t) y) <= t h(x) + (1 - t) h(y) on random triples."""
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(0.0, self.red.b, size=(2, 2000))
        t = rng.uniform(0.0, 1.0, size=2000)
        lhs = holding_cost(self.red, t * x + (1.0 - t) * y)
        rhs = t * holding_cost(self.red, x) + (1.0 - t) * holding_cost(self.red, y)
        assert np.all(lhs <= rhs + 1e-12 * self.red.value_scale)
        assert np.all(np.diff(self.red.slopes) >= 0.0)

    def test_gamma_monotone(self) -> None:
        """Test that every queue length is nondecreasing in workload."""
        lifted = gamma_lift(self.red, self.inst, np.linspace(0.0, self.red.b, 2001))
        assert np.all(np.diff(lifted, axis=0) >= -1e-12)

    @pytest.mark.parametrize("seed", [3, 4])
    def test_gamma_lipschitz(self, seed: int) -> None:
        """Test |gamma(x) - gamma(y)| <= max(mu) |x - y| componentwise."""
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(0.0, self.red.b, size=(2, 2000))
        gap = np.abs(gamma_lift(self.red, self.inst, x) - gamma_lift(self.red, self.inst, y)).max(axis=1)
        assert np.all(gap <= max(self.inst.mu) * np.abs(x - y) + 1e-12)

    def test_lattice_lower_bound(self) -> None:
        """Test h(theta . n) <= h_hat . n for every integer queue vector in the buffer box, with equality on the lift."""
        axes = [np.arange(int(cap) + 1, dtype=np.float64) for cap in self.b_hat]
        lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        work = np.minimum(lattice @ self.red.theta, self.red.b)
        assert np.all(holding_cost(self.red, work) <= lattice @ self.h_hat + 1e-12)

        attained = 0
        for n, w in zip(lattice, work):
            if np.allclose(gamma_lift(self.red, self.inst, w), n, atol=1e-9):
                assert math.isclose(holding_cost(self.red, w), float(n @ self.h_hat), abs_tol=1e-10)
                attained += 1
        # empty, (0, 0, k), (0, j, 6) and (i, 7, 6) runs
        assert attained == 1 + 6 + 7 + 4

    @pytest.mark.parametrize("x", [0.5, 3.0, 4.0, 7.25, 11.0, 11.9, 37.0 / 3.0])
    def test_linear_program_oracle(self, x: float) -> None:
        """Test h(x) against min h_hat . x_hat over the box with theta . x_hat = x."""
        res = linprog(
            self.h_hat,
            A_eq=self.red.theta[None, :],
            b_eq=[x],
            bounds=list(zip(np.zeros(3), self.b_hat)),
            method="highs",
        )
        assert res.status == 0
        assert math.isclose(holding_cost(self.red, x), res.fun, rel_tol=1e-9, abs_tol=1e-9)
