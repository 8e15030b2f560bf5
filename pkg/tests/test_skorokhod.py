import itertools
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ambictrl.skorokhod import PathGrid, ReflectionError, ReflectionTriple, reflect, reflect_step


def _lattice_min_variation(eta, alpha: int, beta: int) -> float:
    """Smallest zeta1(T) + zeta2(T) over all lattice triples with chi in [alpha, beta]."""
    levels = range(alpha, beta + 1)
    cost = {c: abs(c - eta[0]) for c in levels}
    for k in range(1, len(eta)):
        cost = {
            c: min(prev + abs((c - eta[k]) - (p - eta[k - 1])) for p, prev in cost.items())
            for c in levels
        }
    return float(min(cost.values()))


def _assert_triple_identities(eta: PathGrid, out: ReflectionTriple, alpha: float, beta: float) -> None:
    chi, z1, z2 = out.chi.values, out.zeta1.values, out.zeta2.values
    assert_allclose(chi, eta.values + z1 - z2, rtol=0.0, atol=1e-10)
    assert np.all(chi >= alpha) and np.all(chi <= beta)
    assert z1[0] >= 0.0 and z2[0] >= 0.0
    d1 = np.diff(z1, prepend=0.0)
    d2 = np.diff(z2, prepend=0.0)
    assert np.all(d1 >= 0.0) and np.all(d2 >= 0.0)
    assert np.all(chi[d1 > 0.0] == alpha)
    assert np.all(chi[d2 > 0.0] == beta)


@pytest.mark.core
class TestPathGrid:
    """Test cases for the path carrier."""

    def test_uniform(self) -> None:
        """Test the uniform constructor."""
        grid = PathGrid.uniform(0.5, [1.0, 2.0, 3.0])
        assert_allclose(grid.t, [0.0, 0.5, 1.0])
        assert grid.dt == 0.5
        assert len(grid) == 3

    def test_single_point(self) -> None:
        """Test a path with a single sample."""
        grid = PathGrid.uniform(0.1, [4.0])
        assert grid.dt == 0.0
        assert len(grid) == 1

    @pytest.mark.parametrize(
        "t, values",
        [
            ([0.0, 1.0], [1.0]),
            ([0.1, 0.2], [1.0, 2.0]),
            ([0.0, 1.0, 1.5], [1.0, 2.0, 3.0]),
            ([0.0, 1.0, 1.0], [1.0, 2.0, 3.0]),
            ([0.0, 1.0], [1.0, np.nan]),
            ([], []),
        ],
    )
    def test_invalid(self, t, values) -> None:
        """Test malformed meshes and values."""
        with pytest.raises(ReflectionError):
            PathGrid(np.asarray(t, dtype=float), np.asarray(values, dtype=float))


@pytest.mark.core
class TestReflect:
    """Test cases for the two-sided Skorokhod map."""

    def test_pure_upper_reflection(self) -> None:
        """Test eta(t) = t on [0, 2] against [0, 1]."""
        t = np.linspace(0.0, 2.0, 201)
        out = reflect(PathGrid(t, t), 0.0, 1.0)
        assert_allclose(out.chi.values, np.minimum(t, 1.0), atol=1e-12)
        assert np.all(out.zeta1.values == 0.0)
        assert_allclose(out.zeta2.values, np.maximum(t - 1.0, 0.0), atol=1e-12)

    def test_pure_lower_reflection(self) -> None:
        """Test eta(t) = -t on [0, 1] against [0, 1]."""
        t = np.linspace(0.0, 1.0, 101)
        out = reflect(PathGrid(t, -t), 0.0, 1.0)
        assert np.all(out.chi.values == 0.0)
        assert_allclose(out.zeta1.values, t, atol=1e-12)
        assert np.all(out.zeta2.values == 0.0)

    def test_interior_constant(self) -> None:
        """Test that an interior constant path is left alone."""
        eta = PathGrid.uniform(0.01, np.full(50, 0.3))
        out = reflect(eta, 0.0, 1.0)
        assert np.all(out.chi.values == 0.3)
        assert out.total_variation == 0.0

    def test_initial_jump(self) -> None:
        """Test that a start above beta is booked as a time-0 rejection."""
        out = reflect(PathGrid.uniform(0.1, [2.5, 2.5, 2.0]), 0.0, 1.0)
        assert out.chi.values[0] == 1.0
        assert out.zeta2.values[0] == 1.5
        assert out.zeta1.values[0] == 0.0
        assert_allclose(out.chi.values, [1.0, 1.0, 0.5])

    def test_initial_jump_below(self) -> None:
        """Test that a start below alpha is booked as a time-0 idling jump."""
        out = reflect(PathGrid.uniform(0.1, [-0.75, -0.5]), 0.0, 1.0)
        assert out.chi.values[0] == 0.0
        assert out.zeta1.values[0] == 0.75
        assert out.chi.values[1] == 0.25

    def test_empty_interval(self) -> None:
        """Test that alpha >= beta is rejected."""
        eta = PathGrid.uniform(0.1, [0.0, 1.0])
        with pytest.raises(ReflectionError):
            reflect(eta, 1.0, 1.0)
        with pytest.raises(ReflectionError):
            reflect(eta, 2.0, 1.0)
        with pytest.raises(ReflectionError):
            reflect(eta, 0.0, float("inf"))

    def test_double_violation_flagged(self, caplog: pytest.LogCaptureFixture) -> None:
        """Test that steps wider than the interval are flagged and logged."""
        with caplog.at_level(logging.WARNING, logger="ambictrl.skorokhod"):
            out = reflect(PathGrid.uniform(0.1, [0.5, 3.0, -2.0, -1.9]), 0.0, 1.0)
        assert out.double_violations == (1, 2)
        assert "too coarse" in caplog.text
        _assert_triple_identities(PathGrid.uniform(0.1, [0.5, 3.0, -2.0, -1.9]), out, 0.0, 1.0)

    def test_reflect_step(self) -> None:
        """Test the scalar kernel."""
        assert reflect_step(0.5, 1.0, 0.0, 1.0) == (1.0, 0.0, 0.5)
        assert reflect_step(0.5, -1.0, 0.0, 1.0) == (0.0, 0.5, 0.0)
        assert reflect_step(0.5, 0.25, 0.0, 1.0) == (0.75, 0.0, 0.0)


@pytest.mark.core
class TestReflectProperties:
    """Randomized and exhaustive properties of the map."""

    def test_identities_on_random_paths(self) -> None:
        """Test constraint, containment, monotonicity and complementarity on 10^4 random paths."""
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            n = int(rng.integers(2, 60))
            eta = PathGrid.uniform(0.01, np.cumsum(rng.normal(0.0, 0.4, n)))
            alpha = float(rng.uniform(-1.0, 0.5))
            beta = alpha + float(rng.uniform(0.2, 2.0))
            _assert_triple_identities(eta, reflect(eta, alpha, beta), alpha, beta)

    def test_lipschitz_ratio(self) -> None:
        """Test that the measured stability constant of the constrained path stays at or below 4."""
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(10_000):
            n = int(rng.integers(2, 40))
            base = np.cumsum(rng.normal(0.0, 0.3, n))
            other = base + rng.normal(0.0, 0.05, n)
            a = reflect(PathGrid.uniform(0.01, base), 0.0, 1.0)
            b = reflect(PathGrid.uniform(0.01, other), 0.0, 1.0)
            gap = float(np.max(np.abs(base - other)))
            worst = max(worst, float(np.max(np.abs(a.chi.values - b.chi.values))) / gap)
        assert worst <= 4.0

    @pytest.mark.parametrize("length", range(1, 8))
    def test_minimal_total_variation(self, length: int) -> None:
        """Test minimality against every lattice triple for all lattice paths of a given length."""
        for start in range(-1, 4):
            for steps in itertools.product((-1, 0, 1), repeat=length - 1):
                eta = np.concatenate(([start], start + np.cumsum(steps))).astype(float)
                out = reflect(PathGrid.uniform(1.0, eta), 0.0, 2.0)
                assert out.total_variation == _lattice_min_variation(eta, 0, 2)

    def test_idempotence(self) -> None:
        """Test that a constrained path maps to itself with zero regulators."""
        rng = np.random.default_rng(3)
        eta = PathGrid.uniform(0.01, np.cumsum(rng.normal(0.0, 0.3, 500)))
        once = reflect(eta, -0.5, 0.5)
        twice = reflect(once.chi, -0.5, 0.5)
        assert_allclose(twice.chi.values, once.chi.values, rtol=0.0, atol=1e-12)
        assert twice.total_variation <= 1e-12

    def test_shift_equivariance(self) -> None:
        """Test that shifting path and interval shifts chi and leaves regulators unchanged."""
        rng = np.random.default_rng(5)
        values = np.cumsum(rng.normal(0.0, 0.3, 400))
        c = 2.75
        base = reflect(PathGrid.uniform(0.01, values), 0.0, 1.0)
        shifted = reflect(PathGrid.uniform(0.01, values + c), c, 1.0 + c)
        assert_allclose(shifted.chi.values, base.chi.values + c, rtol=0.0, atol=1e-10)
        assert_allclose(shifted.zeta1.values, base.zeta1.values, rtol=0.0, atol=1e-10)
        assert_allclose(shifted.zeta2.values, base.zeta2.values, rtol=0.0, atol=1e-10)


@pytest.mark.slow
class TestReflectExhaustive:
    """Exhaustive lattice minimality on longer paths."""

    @pytest.mark.parametrize("length", range(8, 13))
    def test_minimal_total_variation_long(self, length: int) -> None:
        """Test minimality for every step pattern of the given length started at 1."""
        for steps in itertools.product((-1, 0, 1), repeat=length - 1):
            eta = np.concatenate(([1], 1 + np.cumsum(steps))).astype(float)
            out = reflect(PathGrid.uniform(1.0, eta), 0.0, 2.0)
            assert out.total_variation == _lattice_min_variation(eta, 0, 2)
