"""
Unit tests for data models.
"""

import math
import unittest

import numpy as np

from models import (
    ChaosMatrix,
    Checkpoint,
    ConfigError,
    LimitSetEstimate,
    NumericalError,
    SumVariant,
    TalagrandQuery,
    TrajectoryResult,
    iterated_log,
    log_log,
)


class TestSumVariant(unittest.TestCase):
    """Test SumVariant parsing and flags."""

    def test_parse_accepts_hyphens_and_case(self):
        """Test parsing tolerates hyphens and upper case."""
        self.assertIs(SumVariant.parse("Plain-Offdiag"), SumVariant.PLAIN_OFFDIAG)
        self.assertIs(SumVariant.parse("decoupled_randomized"), SumVariant.DECOUPLED_RANDOMIZED)
        self.assertIs(SumVariant.parse(SumVariant.RANDOMIZED), SumVariant.RANDOMIZED)

    def test_parse_unknown_variant(self):
        """Test unknown variants raise ConfigError."""
        with self.assertRaises(ConfigError):
            SumVariant.parse("triangular")

    def test_flags_and_equation_tags(self):
        """Test decoupled/randomized flags and equation tags."""
        self.assertFalse(SumVariant.PLAIN_OFFDIAG.decoupled)
        self.assertFalse(SumVariant.PLAIN_OFFDIAG.randomized)
        self.assertTrue(SumVariant.RANDOMIZED.randomized)
        self.assertFalse(SumVariant.RANDOMIZED.decoupled)
        self.assertTrue(SumVariant.DECOUPLED.decoupled)
        self.assertFalse(SumVariant.DECOUPLED.randomized)
        self.assertTrue(SumVariant.DECOUPLED_RANDOMIZED.decoupled)
        self.assertTrue(SumVariant.DECOUPLED_RANDOMIZED.randomized)
        self.assertEqual(SumVariant.PLAIN_OFFDIAG.equation, "eq1.1")
        self.assertEqual(SumVariant.DECOUPLED_RANDOMIZED.equation, "eq1.6")


class TestIteratedLogs(unittest.TestCase):
    """Test the L and L_2 conventions."""

    def test_iterated_log_floor(self):
        """Test L(x) = 1 up to e and log x beyond."""
        self.assertEqual(iterated_log(1.0), 1.0)
        self.assertEqual(iterated_log(math.e), 1.0)
        self.assertAlmostEqual(iterated_log(100.0), math.log(100.0))

    def test_log_log(self):
        """Test L_2 is 1 below e^e and log log beyond."""
        self.assertEqual(log_log(15.0), 1.0)
        self.assertAlmostEqual(log_log(1e10), math.log(math.log(1e10)))


class TestChaosMatrix(unittest.TestCase):
    """Test ChaosMatrix validation."""

    def test_entries_are_read_only(self):
        """Test entries are frozen after construction."""
        m = ChaosMatrix(np.eye(2))
        self.assertEqual((m.k, m.l), (2, 2))
        with self.assertRaises(ValueError):
            m.entries[0, 0] = 5.0

    def test_non_finite_entries(self):
        """Test non-finite entries raise NumericalError."""
        with self.assertRaises(NumericalError):
            ChaosMatrix(np.array([[1.0, np.nan]]))

    def test_vector_is_promoted_to_row(self):
        """Test a vector becomes a 1 x l matrix."""
        m = ChaosMatrix(np.array([1.0, 2.0, 3.0]))
        self.assertEqual(m.entries.shape, (1, 3))


class TestTrajectoryResult(unittest.TestCase):
    """Test TrajectoryResult helpers."""

    def _result(self):
        return TrajectoryResult(
            seed=3,
            variant=SumVariant.PLAIN_OFFDIAG,
            engine="separable",
            checkpoints=[
                Checkpoint(n=1, raw_sum=0.0, normalized=0.0, normalized_half=0.0),
                Checkpoint(n=2, raw_sum=-2.0, normalized=-1.0, normalized_half=-0.5),
                Checkpoint(n=4, raw_sum=2.0, normalized=0.5, normalized_half=0.25),
            ],
        )

    def test_running_sup_from(self):
        """Test tail sup over absolute normalized values."""
        result = self._result()
        self.assertEqual(result.running_sup_from(1), 1.0)
        self.assertEqual(result.running_sup_from(3), 0.5)
        self.assertEqual(result.running_sup_from(8), 0.0)

    def test_records_carry_both_normalizations(self):
        """Test records expose both normalization columns and the equation tag."""
        records = self._result().records()
        self.assertEqual(len(records), 3)
        self.assertEqual(records[1]["normalized_eq11"], -1.0)
        self.assertEqual(records[1]["normalized_eq511"], -0.5)
        self.assertEqual(records[1]["equation"], "eq1.1")
        self.assertEqual(records[1]["variant"], "plain_offdiag")
        self.assertEqual(records[1]["seed"], 3)


class TestLimitSetEstimate(unittest.TestCase):
    """Test LimitSetEstimate coverage."""

    def test_coverage(self):
        """Test coverage is the overlap fraction of the predicted interval."""
        est = LimitSetEstimate(
            points=np.array([-0.5, 1.0]),
            hull=(-0.5, 1.0),
            predicted=(-1.0, 2.0),
            histogram=([1, 1], [-0.5, 0.25, 1.0]),
            max_consecutive_gap=1.5,
        )
        self.assertAlmostEqual(est.coverage, 0.5)
        self.assertEqual(est.to_dict()["equation"], "eq5.11")

    def test_coverage_without_prediction(self):
        """Test coverage is None when nothing is predicted."""
        est = LimitSetEstimate(
            points=np.zeros(2),
            hull=(0.0, 0.0),
            predicted=None,
            histogram=([2], [-0.5, 0.5]),
            max_consecutive_gap=0.0,
        )
        self.assertIsNone(est.coverage)


class TestTalagrandQuery(unittest.TestCase):
    """Test TalagrandQuery effective variance."""

    def test_effective_variance_from_parts(self):
        """Test V = sigma2 + 8 U E|Z| when V is absent."""
        q = TalagrandQuery(t=1.0, U=2.0, sigma2=1.0, EZ_abs=0.5)
        self.assertEqual(q.effective_variance(), 9.0)

    def test_effective_variance_requires_inputs(self):
        """Test a query without V or its parts raises ConfigError."""
        with self.assertRaises(ConfigError):
            TalagrandQuery(t=1.0, U=1.0).effective_variance()


if __name__ == "__main__":
    unittest.main()
