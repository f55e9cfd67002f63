"""
U-statistic LIL laboratory.
"""

from chaos_norm import chaos_norm, chaos_norm_oracle
from conditions import certify, operator_norm, truncated_moment_curve
from config import RunConfig
from hoeffding import project, sum_exact, sum_separable
from kernels import Distribution, Kernel, catalog, kernel_from_spec
from log_utils import setup_logging
from models import ConfigError, LabError, NumericalError, SumVariant
from simulator import TrajectoryConfig, limit_set_estimate, limsup_estimate, run_trajectory
from tail_bounds import latala_lower_check, talagrand_bound

__all__ = [
    "chaos_norm",
    "chaos_norm_oracle",
    "certify",
    "operator_norm",
    "truncated_moment_curve",
    "RunConfig",
    "project",
    "sum_exact",
    "sum_separable",
    "Distribution",
    "Kernel",
    "catalog",
    "kernel_from_spec",
    "setup_logging",
    "ConfigError",
    "LabError",
    "NumericalError",
    "SumVariant",
    "TrajectoryConfig",
    "limit_set_estimate",
    "limsup_estimate",
    "run_trajectory",
    "latala_lower_check",
    "talagrand_bound",
]
