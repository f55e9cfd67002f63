"""
Unit tests for configuration.
"""

import json
import os
import tempfile
import unittest
from argparse import Namespace
from unittest.mock import patch

from config import (
    DEFAULT_OUTPUT_DIR,
    ENV_OUTPUT_DIR,
    BoundsConfig,
    ChaosNormConfig,
    ConditionsConfig,
    LimitSetConfig,
    RunConfig,
    SimulateConfig,
    load_config_file,
    manifest,
    parse_matrix,
    parse_seeds,
    parse_spec,
)
from models import ConfigError


def _args(**values):
    return Namespace(**values)


class TestRunConfig(unittest.TestCase):
    """Test settings shared by every command."""

    def test_defaults(self):
        """Test default values when nothing is given."""
        with patch.dict(os.environ, {}, clear=True):
            config = RunConfig.from_args(_args(command="bounds"))
        self.assertEqual(config.command, "bounds")
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.out, DEFAULT_OUTPUT_DIR)
        self.assertEqual(config.workers, 1)
        self.assertFalse(config.verbose)
        self.assertEqual(config.manifest_path, os.path.join(DEFAULT_OUTPUT_DIR, "manifest.json"))

    def test_precedence(self):
        """Test flag > file > environment > default."""
        file_values = {"out": "from-file", "seed": 7, "workers": 2}
        with patch.dict(os.environ, {ENV_OUTPUT_DIR: "from-env"}):
            flagged = RunConfig.from_args(_args(command="bounds", out="from-flag"), file_values)
            filed = RunConfig.from_args(_args(command="bounds", out=None), file_values)
            env = RunConfig.from_args(_args(command="bounds"), {})
        self.assertEqual(flagged.out, "from-flag")
        self.assertEqual(filed.out, "from-file")
        self.assertEqual(filed.seed, 7)
        self.assertEqual(filed.workers, 2)
        self.assertEqual(env.out, "from-env")

    def test_command_from_file(self):
        """Test the command may come from the config file."""
        config = RunConfig.from_args(_args(command=None), {"command": "simulate"})
        self.assertEqual(config.command, "simulate")
        with self.assertRaises(ConfigError):
            RunConfig.from_args(_args(command=None), {})

    def test_invalid_values(self):
        """Test non-positive workers and negative seeds raise ConfigError."""
        with self.assertRaises(ConfigError):
            RunConfig.from_args(_args(command="bounds", workers=0))
        with self.assertRaises(ConfigError):
            RunConfig.from_args(_args(command="bounds", seed=-3))


class TestConfigFile(unittest.TestCase):
    """Test loading JSON config files."""

    def test_hyphenated_keys(self):
        """Test keys are normalized to underscores."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"max-exponent": 12, "kernel": "product"}, f)
            self.assertEqual(load_config_file(path), {"max_exponent": 12, "kernel": "product"})

    def test_errors(self):
        """Test missing, malformed and non-object files."""
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError):
                load_config_file(os.path.join(tmp, "missing.json"))
            bad = os.path.join(tmp, "bad.json")
            with open(bad, "w", encoding="utf-8") as f:
                f.write("{not json")
            with self.assertRaises(ConfigError):
                load_config_file(bad)
            array = os.path.join(tmp, "array.json")
            with open(array, "w", encoding="utf-8") as f:
                f.write("[1, 2]")
            with self.assertRaises(ConfigError):
                load_config_file(array)


class TestParsers(unittest.TestCase):
    """Test value parsers."""

    def test_parse_spec(self):
        """Test names, inline JSON and mappings."""
        self.assertEqual(parse_spec(" product ", "kernel"), "product")
        self.assertEqual(
            parse_spec('{"name": "block", "a": [1]}', "kernel"), {"name": "block", "a": [1]}
        )
        self.assertEqual(parse_spec({"name": "zero"}, "kernel"), {"name": "zero"})
        for bad in ("", "{oops", None, 3):
            with self.assertRaises(ConfigError):
                parse_spec(bad, "kernel")

    def test_parse_seeds(self):
        """Test ranges, comma lists and argparse lists."""
        self.assertEqual(parse_seeds("0:4"), [0, 1, 2, 3])
        self.assertEqual(parse_seeds("1, 5 9"), [1, 5, 9])
        self.assertEqual(parse_seeds(["2:5"]), [2, 3, 4])
        self.assertEqual(parse_seeds([3, 4]), [3, 4])
        self.assertEqual(parse_seeds(8), [8])
        for bad in ("a:b", "x", [], "3:3"):
            with self.assertRaises(ConfigError):
                parse_seeds(bad)

    def test_parse_matrix(self):
        """Test inline JSON, nested lists and CSV files."""
        self.assertEqual(parse_matrix("[[1, 0], [0, 1]]"), [[1.0, 0.0], [0.0, 1.0]])
        self.assertEqual(parse_matrix([1, 2]), [[1.0, 2.0]])
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "a.csv")
            with open(path, "w", encoding="utf-8") as f:
                f.write("1,2\n3,4\n")
            self.assertEqual(parse_matrix(path), [[1.0, 2.0], [3.0, 4.0]])
            with self.assertRaises(ConfigError):
                parse_matrix(os.path.join(tmp, "missing.csv"))
        for bad in ("[oops", [["a"]], []):
            with self.assertRaises(ConfigError):
                parse_matrix(bad)


class TestCommandConfigs(unittest.TestCase):
    """Test per-command configuration."""

    def test_simulate_defaults_and_file_values(self):
        """Test defaults and values taken from a config file."""
        config = SimulateConfig.from_args(_args())
        self.assertEqual(config.kernel, "product")
        self.assertIsNone(config.dist)
        self.assertEqual(config.variant, "plain_offdiag")
        self.assertEqual(config.seeds, [0])
        self.assertEqual(config.engine, "auto")

        filed = SimulateConfig.from_args(
            _args(max_exponent=None, sandwich=None),
            {"max_exponent": 12, "sandwich": True, "variant": "Decoupled", "seeds": "0:3"},
        )
        self.assertEqual(filed.max_exponent, 12)
        self.assertTrue(filed.sandwich)
        self.assertEqual(filed.variant, "decoupled")
        self.assertEqual(filed.seeds, [0, 1, 2])

    def test_limit_set(self):
        """Test the limit-set defaults and the plain-variant restriction."""
        config = LimitSetConfig.from_args(_args())
        self.assertEqual(config.kernel, {"name": "finite_rank", "eigenvalues": [2, -1]})
        self.assertEqual(config.dist, "gaussian01")
        self.assertNotIn("sandwich", config.to_dict())
        with self.assertRaises(ConfigError):
            LimitSetConfig.from_args(_args(variant="randomized"))

    def test_conditions(self):
        """Test sample sizes are validated."""
        config = ConditionsConfig.from_args(_args(m=500, monte_carlo=True))
        self.assertEqual(config.m, 500)
        self.assertTrue(config.monte_carlo)
        with self.assertRaises(ConfigError):
            ConditionsConfig.from_args(_args(bootstrap=-1))
        with self.assertRaises(ConfigError):
            ConditionsConfig.from_args(_args(samples=0))

    def test_chaos_norm(self):
        """Test the matrix is required and the mode checked."""
        config = ChaosNormConfig.from_args(_args(matrix="[[1, 2]]", t=2.0))
        self.assertEqual(config.matrix, [[1.0, 2.0]])
        self.assertEqual(config.t, 2.0)
        with self.assertRaises(ConfigError):
            ChaosNormConfig.from_args(_args())
        with self.assertRaises(ConfigError):
            ChaosNormConfig.from_args(_args(matrix="[[1]]", mode="grid"))
        with self.assertRaises(ConfigError):
            ChaosNormConfig.from_args(_args(matrix="[[1]]", t=0))

    def test_bounds(self):
        """Test positivity of the bound inputs."""
        config = BoundsConfig.from_args(_args(V=2.0))
        self.assertEqual((config.t, config.U, config.V, config.K), (1.0, 1.0, 2.0, 1.0))
        with self.assertRaises(ConfigError):
            BoundsConfig.from_args(_args(U=-1))
        with self.assertRaises(ConfigError):
            BoundsConfig.from_args(_args(ez_abs=-0.5))

    def test_manifest(self):
        """Test the manifest holds every result-relevant value and nothing else."""
        run = RunConfig(command="bounds", seed=4, out="somewhere", workers=8, verbose=True)
        record = manifest(run, BoundsConfig(V=1.0))
        self.assertEqual(record["command"], "bounds")
        self.assertEqual(record["seed"], 4)
        self.assertEqual(record["V"], 1.0)
        for key in ("out", "workers", "verbose"):
            self.assertNotIn(key, record)


if __name__ == "__main__":
    unittest.main()
