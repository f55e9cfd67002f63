"""
Unit tests for LIL trajectories, limsup and limit-set estimation.
"""

import unittest

import numpy as np
import pytest

from conditions import CertifyOptions, certify
from kernels import (
    GAUSSIAN01,
    RADEMACHER,
    STREAM_X,
    UNIFORM01,
    Kernel,
    SeparableExpansion,
    catalog,
    kernel_from_spec,
    sample_stream,
)
from models import ConfigError, SumVariant
from simulator import (
    SimulationRunner,
    TrajectoryConfig,
    limit_set_estimate,
    limsup_estimate,
    numerical_range,
    run_trajectory,
    sandwich_report,
)

RANK_TWO = {"name": "finite_rank", "eigenvalues": [2, -1]}


def _rank_two():
    return kernel_from_spec(RANK_TWO, GAUSSIAN01)


def _config(kernel=None, dist=RADEMACHER, **kwargs):
    return TrajectoryConfig(kernel=kernel or catalog("product"), dist=dist, **kwargs)


class TestTrajectoryConfig(unittest.TestCase):
    """Test configuration validation."""

    def test_engine_caps(self):
        """Test exponents beyond the engine cap raise ConfigError."""
        with self.assertRaises(ConfigError):
            _config(engine="generic", max_exponent=15)
        with self.assertRaises(ConfigError):
            _config(engine="separable", max_exponent=27)
        with self.assertRaises(ConfigError):
            _config(max_exponent=-1)
        self.assertEqual(_config(engine="generic", max_exponent=14).horizon, 1 << 14)

    def test_engine_selection(self):
        """Test auto engine resolution and unknown engines."""
        self.assertEqual(_config(engine="auto").engine, "separable")
        kernel = Kernel(name="min", func=np.minimum)
        self.assertEqual(_config(kernel, UNIFORM01, engine="auto").engine, "generic")
        self.assertEqual(_config(kernel, UNIFORM01).engine, "generic")
        with self.assertRaises(ConfigError):
            _config(kernel, UNIFORM01, engine="separable")
        with self.assertRaises(ConfigError):
            _config(engine="gpu")

    def test_seeds(self):
        """Test empty, duplicate and negative seeds are rejected."""
        for seeds in ([], [1, 1], [-1]):
            with self.assertRaises(ConfigError):
                _config(seeds=seeds)

    def test_variant_parsing(self):
        """Test variants given as strings are parsed."""
        self.assertIs(_config(variant="decoupled").variant, SumVariant.DECOUPLED)


class TestTrajectories(unittest.TestCase):
    """Test trajectory generation."""

    def test_rademacher_product_identity(self):
        """Test raw_sum == (sum x)^2 - n exactly at every checkpoint."""
        config = _config(max_exponent=12, seeds=[0, 1, 2])
        for result in run_trajectory(config):
            x = sample_stream(RADEMACHER, result.seed, STREAM_X, config.horizon)
            self.assertEqual(len(result.checkpoints), 13)
            for c in result.checkpoints:
                self.assertEqual(c.raw_sum, float(np.sum(x[: c.n])) ** 2 - c.n)

    def test_engines_agree(self):
        """Test separable and generic raw sums agree to 1e-10 relative."""
        seeds = list(range(10))
        for kernel, dist in ((catalog("product"), RADEMACHER), (_rank_two(), GAUSSIAN01)):
            fast = run_trajectory(_config(kernel, dist, max_exponent=10, seeds=seeds))
            slow = run_trajectory(
                _config(kernel, dist, max_exponent=10, seeds=seeds, engine="generic")
            )
            for a, b in zip(fast, slow):
                self.assertEqual(a.engine, "separable")
                self.assertEqual(b.engine, "generic")
                for ca, cb in zip(a.checkpoints, b.checkpoints):
                    self.assertEqual(ca.n, cb.n)
                    scale = max(abs(ca.raw_sum), ca.n)
                    self.assertLessEqual(abs(ca.raw_sum - cb.raw_sum), 1e-10 * scale)

    def test_engines_agree_for_every_variant(self):
        """Test the engines agree on randomized and decoupled sums too."""
        kernel = _rank_two()
        for variant in SumVariant:
            fast = run_trajectory(
                _config(kernel, GAUSSIAN01, variant=variant, max_exponent=8, seeds=[3, 4])
            )
            slow = run_trajectory(
                _config(
                    kernel, GAUSSIAN01, variant=variant, max_exponent=8, seeds=[3, 4],
                    engine="generic",
                )
            )
            for a, b in zip(fast, slow):
                for ca, cb in zip(a.checkpoints, b.checkpoints):
                    scale = max(abs(ca.raw_sum), ca.n)
                    self.assertLessEqual(abs(ca.raw_sum - cb.raw_sum), 1e-10 * scale)

    def test_deterministic_and_worker_invariant(self):
        """Test reruns and thread counts give identical records."""
        config = _config(_rank_two(), GAUSSIAN01, max_exponent=9, seeds=[5, 1, 3])
        first = run_trajectory(config)
        again = run_trajectory(config)
        threaded = run_trajectory(config, workers=3)
        self.assertEqual([r.seed for r in first], [1, 3, 5])
        for a, b, c in zip(first, again, threaded):
            self.assertEqual(a.records(), b.records())
            self.assertEqual(a.records(), c.records())
            self.assertEqual(a.block_maxima, c.block_maxima)

    def test_scaling_is_exact(self):
        """Test doubling the kernel doubles every raw sum and the limsup estimate."""
        base = run_trajectory(_config(max_exponent=10, seeds=[0, 1, 2]))
        doubled = run_trajectory(
            _config(
                kernel_from_spec({"name": "product", "scale": 2}),
                max_exponent=10,
                seeds=[0, 1, 2],
            )
        )
        for a, b in zip(base, doubled):
            for ca, cb in zip(a.checkpoints, b.checkpoints):
                self.assertEqual(cb.raw_sum, 2.0 * ca.raw_sum)
        self.assertEqual(limsup_estimate(doubled)["median"], 2.0 * limsup_estimate(base)["median"])

    def test_block_maxima_bound_checkpoints(self):
        """Test each dyadic block maximum dominates its checkpoint."""
        result = run_trajectory(_config(_rank_two(), GAUSSIAN01, max_exponent=10))[0]
        self.assertEqual(len(result.block_maxima), 11)
        for k, c in enumerate(result.checkpoints):
            self.assertEqual(c.n, 1 << k)
            self.assertLessEqual(c.abs_normalized, result.block_maxima[k] + 1e-15)
        sups = [result.running_sup_from(c.n) for c in result.checkpoints]
        self.assertTrue(all(a >= b for a, b in zip(sups, sups[1:])))
        self.assertFalse(result.overflow_flag)

    def test_generic_engine_for_kernel_without_expansion(self):
        """Test the generic engine handles an arbitrary kernel."""
        kernel = Kernel(name="min", func=np.minimum)
        results = run_trajectory(_config(kernel, UNIFORM01, max_exponent=6))
        x = sample_stream(UNIFORM01, 0, STREAM_X, 64)
        m = np.minimum(x[:, None], x[None, :])
        expected = float(m.sum() - np.trace(m))
        self.assertAlmostEqual(results[0].checkpoints[-1].raw_sum, expected, places=9)


class TestLimsupEstimate(unittest.TestCase):
    """Test tail-supremum summaries."""

    def setUp(self):
        self.results = run_trajectory(_config(max_exponent=10, seeds=[0, 1, 2, 3]))

    def test_summary_fields(self):
        """Test per-seed sups, the median and both normalizations."""
        stats = limsup_estimate(self.results, burn_in_exponent=4)
        self.assertEqual(stats["equation"], "eq1.1")
        self.assertEqual(stats["seeds"], 4)
        self.assertEqual(sorted(stats["per_seed_tail_sup"]), ["0", "1", "2", "3"])
        expected = self.results[0].running_sup_from(16)
        self.assertEqual(stats["per_seed_tail_sup"]["0"], expected)
        half = limsup_estimate(self.results, burn_in_exponent=4, convention="eq5.11")
        self.assertAlmostEqual(half["median"], stats["median"] / 2.0)

    def test_default_burn_in(self):
        """Test the burn-in defaults to half the horizon exponent."""
        self.assertEqual(limsup_estimate(self.results)["burn_in_exponent"], 5)

    def test_errors(self):
        """Test invalid burn-ins, conventions and empty input."""
        with self.assertRaises(ConfigError):
            limsup_estimate(self.results, burn_in_exponent=10)
        with self.assertRaises(ConfigError):
            limsup_estimate(self.results, burn_in_exponent=-1)
        with self.assertRaises(ConfigError):
            limsup_estimate(self.results, convention="eq9.9")
        with self.assertRaises(ConfigError):
            limsup_estimate([])


class TestNumericalRange(unittest.TestCase):
    """Test the numerical range of separable kernels."""

    def test_finite_rank(self):
        """Test eigenvalues (2, -1) give [-1, 2]."""
        self.assertEqual(numerical_range(_rank_two()), (-1.0, 2.0))

    def test_nonnegative_spectrum_includes_zero(self):
        """Test a positive rank-one kernel gives [0, lambda]."""
        self.assertEqual(numerical_range(catalog("product")), (0.0, 1.0))
        block = catalog("block", {"a": [0.5, 0.2, 0.9], "b": [0.25, 0.25, 0.25]})
        self.assertEqual(numerical_range(block), (0.0, 0.9))
        self.assertEqual(numerical_range(catalog("zero")), (0.0, 0.0))

    def test_gram_check_failure(self):
        """Test functions that are not orthonormal under the law are refused."""
        with self.assertRaises(ConfigError):
            numerical_range(_rank_two(), UNIFORM01)
        with self.assertRaises(ConfigError):
            numerical_range(Kernel(name="min", func=np.minimum), UNIFORM01)

    def test_non_canonical_kernels_refused(self):
        """Test kernels with a nonzero conditional mean get no numerical range."""
        with self.assertRaises(ConfigError):
            numerical_range(catalog("constant"))
        with self.assertRaises(ConfigError):
            numerical_range(catalog("product", dist=UNIFORM01))
        shifted = Kernel(
            name="shifted_product",
            func=lambda x, y: (x + 1.0) * (y + 1.0) / 2.0,
            separable=SeparableExpansion(
                weights=np.array([1.0]), phis=(lambda x: (x + 1.0) / np.sqrt(2.0),)
            ),
        )
        with self.assertRaises(ConfigError):
            numerical_range(shifted, GAUSSIAN01)


class TestLimitSetEstimate(unittest.TestCase):
    """Test limit-set estimation."""

    def test_rank_two(self):
        """Test pooled points, hull and the predicted interval."""
        results = run_trajectory(
            _config(_rank_two(), GAUSSIAN01, max_exponent=10, seeds=[0, 1, 2])
        )
        est = limit_set_estimate(results, burn_in_exponent=6, kernel=_rank_two())
        self.assertEqual(est.points.size, 3 * 5)
        self.assertEqual(est.predicted, (-1.0, 2.0))
        self.assertEqual(est.hull, (float(est.points.min()), float(est.points.max())))
        self.assertEqual(sum(est.histogram[0]), est.points.size)
        self.assertGreaterEqual(est.max_consecutive_gap, 0.0)
        self.assertIsNotNone(est.coverage)

    def test_without_kernel(self):
        """Test no prediction is made without a kernel."""
        results = run_trajectory(_config(max_exponent=6))
        self.assertIsNone(limit_set_estimate(results).predicted)

    def test_no_prediction_for_block_families(self):
        """Test sequence-defined block kernels get no predicted interval."""
        results = run_trajectory(_config(max_exponent=6))
        harmonic = kernel_from_spec({"name": "block", "sequence": "harmonic", "count": 10})
        self.assertIsNone(limit_set_estimate(results, kernel=harmonic).predicted)

    def test_no_prediction_for_non_canonical_kernel(self):
        """Test a constant kernel leaves the predicted interval open."""
        results = run_trajectory(_config(catalog("constant"), max_exponent=6))
        self.assertIsNone(limit_set_estimate(results, kernel=catalog("constant")).predicted)

    def test_plain_variant_only(self):
        """Test other variants raise ConfigError."""
        results = run_trajectory(_config(variant="randomized", max_exponent=6))
        with self.assertRaises(ConfigError):
            limit_set_estimate(results)


class TestSandwichReport(unittest.TestCase):
    """Test the comparison of the empirical limsup with the condition constants."""

    options = CertifyOptions(mc_samples=2000, bootstrap=0, truncation_range=None)

    def test_zero_kernel(self):
        """Test K = 0 with an empirical 0 has ratio 1."""
        report = certify(catalog("zero"), RADEMACHER, self.options)
        record = sandwich_report(report, {"median": 0.0, "equation": "eq1.1"})
        self.assertEqual(record["K"], 0.0)
        self.assertEqual(record["ratio"], 1.0)
        self.assertFalse(record["flagged"])
        self.assertEqual(record["equation"], "eq5.6")

    def test_flagged_outside_band(self):
        """Test a ratio outside the band is flagged."""
        report = certify(catalog("product"), RADEMACHER, self.options)
        record = sandwich_report(report, {"median": 1000.0}, band=(0.5, 2.0))
        self.assertGreater(record["K"], 1.0)
        self.assertTrue(record["flagged"])


class TestSimulationRunner(unittest.TestCase):
    """Test the runner wrapper."""

    def test_run(self):
        """Test stats and the summary are filled in."""
        runner = SimulationRunner(_config(max_exponent=8, seeds=[0, 1]), workers=2)
        results = runner.run()
        self.assertEqual(len(results), 2)
        self.assertEqual(runner.stats, {"seeds": 2, "checkpoints": 18, "overflow": 0})
        self.assertEqual(runner.summary["burn_in_exponent"], 4)

    def test_no_summary_for_single_checkpoint(self):
        """Test max_exponent 0 skips the summary."""
        runner = SimulationRunner(_config(max_exponent=0))
        runner.run()
        self.assertIsNone(runner.summary)


@pytest.mark.slow
class TestLilAcceptance(unittest.TestCase):
    """Long Monte Carlo runs at n up to 2^22."""

    seeds = list(range(20))

    def test_product_kernel_limsup_band(self):
        """Test the median tail sup of |S_n|/(2 n L_2 n) sits near Var X = 1."""
        results = run_trajectory(_config(max_exponent=22, seeds=self.seeds), workers=4)
        stats = limsup_estimate(results, burn_in_exponent=11, convention="eq5.11")
        self.assertGreaterEqual(stats["median"], 0.3)
        self.assertLessEqual(stats["median"], 1.5)

    def test_rank_two_limit_set(self):
        """Test the signed values stay near [-1, 2] and cover most of it."""
        kernel = _rank_two()
        results = run_trajectory(
            _config(kernel, GAUSSIAN01, max_exponent=22, seeds=self.seeds), workers=4
        )
        est = limit_set_estimate(results, burn_in_exponent=11, kernel=kernel)
        delta = 2.5
        self.assertGreaterEqual(est.hull[0], -1.0 - delta)
        self.assertLessEqual(est.hull[1], 2.0 + delta)
        self.assertGreaterEqual(est.coverage, 0.6)


if __name__ == "__main__":
    unittest.main()
