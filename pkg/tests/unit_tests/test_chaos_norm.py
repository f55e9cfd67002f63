"""
Unit tests for the chaos norm solver and its brute-force oracle.
"""

import itertools
import math
import unittest

import numpy as np
import pytest

from chaos_norm import box_ball_linear_max, chaos_norm, chaos_norm_oracle
from kernels import rng_for
from models import ChaosMatrix, ConfigError

T_VALUES = (0.5, 1.0, 2.0, 4.0)


def _sign_matrices(k, l):
    for entries in itertools.product((-1.0, 0.0, 1.0), repeat=k * l):
        yield np.array(entries).reshape(k, l)


def _assert_matches_oracle(case, a, t):
    value = chaos_norm(a, t).value
    oracle = chaos_norm_oracle(a, t)
    scale = max(abs(value), abs(oracle), 1e-12)
    case.assertLessEqual(
        abs(value - oracle), 0.02 * scale, msg=f"t={t}, A={a.tolist()}: {value} vs {oracle}"
    )


class TestBoxBallLinearMax(unittest.TestCase):
    """Test the exact linear maximizer over the box-ball set."""

    def test_ball_active(self):
        """Test an unclipped maximizer is the scaled direction."""
        b, value = box_ball_linear_max([3.0, 4.0], 1.0)
        np.testing.assert_allclose(b, [0.6, 0.8], atol=1e-12)
        self.assertAlmostEqual(value, 5.0, places=12)

    def test_box_active(self):
        """Test the all-clipped point when the ball is not binding."""
        b, value = box_ball_linear_max([1.0, -2.0, 3.0], 5.0)
        np.testing.assert_array_equal(b, [1.0, -1.0, 1.0])
        self.assertEqual(value, 6.0)

    def test_mixed(self):
        """Test one clipped coordinate and one on the ball."""
        b, value = box_ball_linear_max([10.0, 1.0], 1.5)
        np.testing.assert_allclose(b, [1.0, 1.0 / math.sqrt(2.0)], atol=1e-12)
        self.assertAlmostEqual(value, 10.0 + 1.0 / math.sqrt(2.0), places=12)
        self.assertLessEqual(float(b @ b), 1.5 + 1e-12)

    def test_zero_entries_stay_zero(self):
        """Test coordinates with zero weight are set to zero."""
        b, value = box_ball_linear_max([0.0, 2.0, 0.0], 0.5)
        self.assertEqual(b[0], 0.0)
        self.assertEqual(b[2], 0.0)
        self.assertAlmostEqual(value, 2.0 * math.sqrt(0.5), places=12)

    def test_rejects_non_positive_t(self):
        """Test t <= 0 raises ConfigError."""
        with self.assertRaises(ConfigError):
            box_ball_linear_max([1.0], 0.0)


class TestChaosNorm(unittest.TestCase):
    """Test the multi-start alternating solver."""

    def test_identity_closed_form(self):
        """Test |||I_k|||_t = min(t, k)."""
        for k in (1, 2, 3, 5):
            for t in T_VALUES:
                value = chaos_norm(np.eye(k), t).value
                self.assertAlmostEqual(value, min(t, k), delta=1e-9)

    def test_all_ones_closed_form(self):
        """Test the all-ones k x k matrix has norm min(t k, k^2)."""
        for k in (1, 2, 3, 4):
            for t in T_VALUES:
                value = chaos_norm(np.ones((k, k)), t).value
                self.assertAlmostEqual(value, min(t * k, k * k), delta=1e-9)

    def test_i2_at_t1(self):
        """Test I_2 at t = 1 has norm 1."""
        self.assertAlmostEqual(chaos_norm(np.eye(2), 1.0).value, 1.0, delta=1e-9)

    def test_result_is_feasible(self):
        """Test the reported b, c are feasible and reproduce the value."""
        a = rng_for(0, 99).standard_normal((4, 6))
        for t in T_VALUES:
            result = chaos_norm(a, t)
            for vec in (result.b, result.c):
                self.assertLessEqual(float(vec @ vec), t * (1.0 + 1e-9))
                self.assertLessEqual(float(np.max(np.abs(vec))), 1.0 + 1e-12)
            self.assertAlmostEqual(result.value, float(result.b @ a @ result.c), places=10)
            self.assertTrue(result.converged)

    def test_zero_matrix(self):
        """Test the zero matrix has norm 0."""
        result = chaos_norm(np.zeros((2, 3)), 1.0)
        self.assertEqual(result.value, 0.0)

    def test_monotone_in_t(self):
        """Test the norm does not decrease as t grows."""
        a = ChaosMatrix(rng_for(1, 99).standard_normal((3, 3)))
        values = [chaos_norm(a, t).value for t in T_VALUES]
        for lo, hi in zip(values, values[1:]):
            self.assertLessEqual(lo, hi + 1e-9)

    def test_homogeneous(self):
        """Test |||lambda A|||_t = |lambda| |||A|||_t for lambda in {-2, 0.5, 3}."""
        a = rng_for(3, 99).standard_normal((4, 5))
        for t in (1.0, 2.0):
            base = chaos_norm(a, t).value
            for lam in (-2.0, 0.5, 3.0):
                value = chaos_norm(lam * a, t).value
                self.assertLessEqual(abs(value - abs(lam) * base), 1e-9 * abs(lam) * base)
        self.assertEqual(chaos_norm(0.0 * a, 1.0).value, 0.0)

    def test_upper_bound(self):
        """Test the norm never exceeds min(t sigma_max, sum |a_ij|)."""
        rng = rng_for(4, 99)
        for shape in ((2, 2), (3, 4), (5, 3)):
            a = rng.standard_normal(shape)
            sigma = float(np.linalg.norm(a, 2))
            for t in T_VALUES:
                bound = min(t * sigma, float(np.abs(a).sum()))
                self.assertLessEqual(chaos_norm(a, t).value, bound * (1.0 + 1e-9))

    def test_workers_do_not_change_result(self):
        """Test threads over restarts give the identical answer."""
        a = rng_for(2, 99).standard_normal((5, 5))
        serial = chaos_norm(a, 2.0, seed=3)
        threaded = chaos_norm(a, 2.0, seed=3, workers=4)
        self.assertEqual(serial.value, threaded.value)
        np.testing.assert_array_equal(serial.b, threaded.b)

    def test_invalid_arguments(self):
        """Test t and restarts are validated."""
        with self.assertRaises(ConfigError):
            chaos_norm(np.eye(2), -1.0)
        with self.assertRaises(ConfigError):
            chaos_norm(np.eye(2), 1.0, restarts=0)


class TestOracleAgreement(unittest.TestCase):
    """Test the solver against the grid oracle on small instances."""

    def test_all_sign_matrices_up_to_2x2(self):
        """Test every {-1, 0, 1} matrix up to 2 x 2."""
        for k, l in ((1, 1), (1, 2), (2, 1), (1, 3), (2, 2)):
            for a in _sign_matrices(k, l):
                for t in T_VALUES:
                    _assert_matches_oracle(self, a, t)

    def test_sampled_sign_matrices_2x3_and_3x3(self):
        """Test a seeded sample of 2 x 3 and 3 x 3 sign matrices."""
        rng = rng_for(0, 98)
        for shape, count in (((2, 3), 60), ((3, 3), 30)):
            for _ in range(count):
                a = rng.integers(-1, 2, size=shape).astype(float)
                for t in T_VALUES:
                    _assert_matches_oracle(self, a, t)

    def test_random_4x4(self):
        """Test a few Gaussian 4 x 4 matrices."""
        rng = rng_for(1, 98)
        for _ in range(10):
            a = rng.standard_normal((4, 4))
            for t in (1.0, 2.0):
                _assert_matches_oracle(self, a, t)

    def test_oracle_limits(self):
        """Test the oracle rejects large instances and coarse grids."""
        with self.assertRaises(ConfigError):
            chaos_norm_oracle(np.ones((5, 4)), 1.0)
        with self.assertRaises(ConfigError):
            chaos_norm_oracle(np.ones((2, 2)), 1.0, grid_step=0.2)

    def test_oracle_closed_forms(self):
        """Test the oracle hits the identity closed form on grid-aligned optima."""
        self.assertAlmostEqual(chaos_norm_oracle(np.eye(2), 4.0), 2.0, places=9)
        self.assertAlmostEqual(chaos_norm_oracle(np.ones((2, 2)), 4.0), 4.0, places=9)


@pytest.mark.slow
class TestOracleAgreementFull(unittest.TestCase):
    """Full enumeration of sign matrices up to 3 x 3 and 100 random 4 x 4."""

    def test_all_sign_matrices_up_to_3x3(self):
        """Test every {-1, 0, 1} matrix with k, l <= 3."""
        for k, l in ((2, 3), (3, 2), (3, 3)):
            for a in _sign_matrices(k, l):
                for t in T_VALUES:
                    _assert_matches_oracle(self, a, t)

    def test_hundred_random_4x4(self):
        """Test 100 Gaussian 4 x 4 matrices at every t."""
        rng = rng_for(2, 98)
        for _ in range(100):
            a = rng.standard_normal((4, 4))
            for t in T_VALUES:
                _assert_matches_oracle(self, a, t)


if __name__ == "__main__":
    unittest.main()
