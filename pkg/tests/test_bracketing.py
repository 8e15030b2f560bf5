"""Tests for the geometric bracket search."""

import math
import unittest
from unittest.mock import MagicMock

from ambictrl.bracketing import BracketConfig, BracketNotFoundError, find_bracket


class TestBracketConfig(unittest.TestCase):
    """Test the BracketConfig class."""

    def test_init_with_defaults(self):
        """Test initialization with default values."""
        config = BracketConfig()
        self.assertEqual(config.max_attempts, 60)
        self.assertEqual(config.base_step, 1.0)
        self.assertEqual(config.max_step, math.inf)
        self.assertEqual(config.backoff_factor, 2.0)
        self.assertEqual(config.direction, -1.0)

    def test_init_with_custom_values(self):
        """Test initialization with custom values."""
        config = BracketConfig(max_attempts=5, base_step=0.5, max_step=4.0, backoff_factor=3.0, direction=1.0)
        self.assertEqual(config.max_attempts, 5)
        self.assertEqual(config.base_step, 0.5)
        self.assertEqual(config.max_step, 4.0)
        self.assertEqual(config.backoff_factor, 3.0)
        self.assertEqual(config.direction, 1.0)

    def test_invalid_values(self):
        """Test that inconsistent settings are rejected."""
        with self.assertRaises(ValueError):
            BracketConfig(max_attempts=-1)
        with self.assertRaises(ValueError):
            BracketConfig(base_step=0.0)
        with self.assertRaises(ValueError):
            BracketConfig(backoff_factor=0.5)
        with self.assertRaises(ValueError):
            BracketConfig(direction=0.0)

    def test_calculate_step(self):
        """Test geometric step growth."""
        config = BracketConfig()
        self.assertEqual(config.calculate_step(0), 1.0)  # First expansion
        self.assertEqual(config.calculate_step(1), 2.0)
        self.assertEqual(config.calculate_step(2), 4.0)
        self.assertEqual(config.calculate_step(3), 8.0)

    def test_calculate_step_with_max_step(self):
        """Test step calculation capped by max_step."""
        config = BracketConfig(base_step=1.0, backoff_factor=10.0, max_step=5.0)
        self.assertEqual(config.calculate_step(0), 1.0)
        self.assertEqual(config.calculate_step(1), 5.0)  # capped
        self.assertEqual(config.calculate_step(2), 5.0)

    def test_probes_downward(self):
        """Test the probe sequence 0, -1, -2, -4, ..."""
        config = BracketConfig(max_attempts=4)
        self.assertEqual(list(config.probes(0.0)), [0.0, -1.0, -2.0, -4.0, -8.0])

    def test_probes_upward(self):
        """Test an upward probe sequence from a nonzero anchor."""
        config = BracketConfig(max_attempts=3, direction=1.0)
        self.assertEqual(list(config.probes(1.0)), [1.0, 2.0, 3.0, 5.0])


class TestFindBracket(unittest.TestCase):
    """Test the find_bracket function."""

    def test_anchor_accepted(self):
        """Test that an accepted anchor needs one probe."""
        evaluate = MagicMock(side_effect=lambda s: s)
        result = find_bracket(evaluate, lambda v: v <= 0.0)
        self.assertEqual(result.point, 0.0)
        self.assertEqual(result.probes, 1)
        evaluate.assert_called_once_with(0.0)

    def test_expands_until_accepted(self):
        """Test that the search stops at the first accepted probe."""
        evaluate = MagicMock(side_effect=lambda s: s)
        result = find_bracket(evaluate, lambda v: v < -3.0)
        self.assertEqual(result.point, -4.0)
        self.assertEqual(result.value, -4.0)
        self.assertEqual(result.probes, 4)
        self.assertEqual(evaluate.call_count, 4)

    def test_exhausted(self):
        """Test that running out of attempts raises with the last probe."""
        config = BracketConfig(max_attempts=3)
        with self.assertRaises(BracketNotFoundError) as ctx:
            find_bracket(lambda s: s, lambda v: False, config=config)
        self.assertEqual(ctx.exception.last_probe, -4.0)

    def test_evaluation_errors_propagate(self):
        """Test that errors from the evaluation are not swallowed."""

        def evaluate(s):
            raise ArithmeticError("blow-up")

        with self.assertRaises(ArithmeticError):
            find_bracket(evaluate, lambda v: True)


if __name__ == "__main__":
    unittest.main()
