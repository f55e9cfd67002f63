"""
Data models for the U-statistic LIL laboratory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np


class LabError(Exception):
    """Base class for all errors raised by the laboratory."""


class ConfigError(LabError, ValueError):
    """Invalid user input: unknown names, bad parameters, length mismatches."""


class NumericalError(LabError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class SumVariant(Enum):
    """Which U-statistic sum a trajectory accumulates."""

    PLAIN_OFFDIAG = "plain_offdiag"
    RANDOMIZED = "randomized"
    DECOUPLED = "decoupled"
    DECOUPLED_RANDOMIZED = "decoupled_randomized"

    @property
    def decoupled(self) -> bool:
        return self in (SumVariant.DECOUPLED, SumVariant.DECOUPLED_RANDOMIZED)

    @property
    def randomized(self) -> bool:
        return self in (SumVariant.RANDOMIZED, SumVariant.DECOUPLED_RANDOMIZED)

    @property
    def equation(self) -> str:
        return {
            SumVariant.PLAIN_OFFDIAG: "eq1.1",
            SumVariant.RANDOMIZED: "eq2.9",
            SumVariant.DECOUPLED: "eq2.8",
            SumVariant.DECOUPLED_RANDOMIZED: "eq1.6",
        }[self]

    @classmethod
    def parse(cls, value: "str | SumVariant") -> "SumVariant":
        if isinstance(value, SumVariant):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            choices = ", ".join(v.value for v in cls)
            raise ConfigError(
                f"Unknown sum variant '{value}' (expected one of: {choices})"
            ) from None


class CheckStatus(Enum):
    """Verdict of a single condition check."""

    PASSED = "passed"
    WARNING = "warning"
    FAILED = "failed"


def iterated_log(x: float) -> float:
    """L(x) = max(log x, 1)."""
    if x <= math.e:
        return 1.0
    return math.log(x)


def log_log(x: float) -> float:
    """L_2(x) = L(L(x))."""
    return iterated_log(iterated_log(x))


@dataclass(frozen=True)
class ChaosMatrix:
    """Dense coefficient matrix (a_ij) of a decoupled Rademacher chaos."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if arr.ndim != 2:
            raise ConfigError(f"Chaos matrix must be 2-dimensional, got {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise NumericalError("Chaos matrix has non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def k(self) -> int:
        return int(self.entries.shape[0])

    @property
    def l(self) -> int:  # noqa: E743
        return int(self.entries.shape[1])


@dataclass
class ChaosNormResult:
    """Maximizer and value of the t-parameterized chaos norm."""

    value: float
    b: np.ndarray
    c: np.ndarray
    t: float
    restarts_used: int
    converged: bool
    iterations: int = 0

    def to_dict(self) -> Dict:
        return {
            "equation": "eq2.14",
            "value": self.value,
            "t": self.t,
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass
class TruncatedMomentCurve:
    """E(h^2 ∧ u) over a geometric grid of truncation levels."""

    log10_u: np.ndarray
    values: np.ndarray
    ratio: np.ndarray
    limsup_estimate: float
    method: str  # "analytic" or "monte_carlo"
    standard_errors: Optional[np.ndarray] = None

    @property
    def u_grid(self) -> np.ndarray:
        """Truncation levels; entries beyond the double range read as inf."""
        with np.errstate(over="ignore"):
            return np.power(10.0, self.log10_u)

    def to_dict(self) -> Dict:
        return {
            "equation": "eq1.2",
            "method": self.method,
            "log10_u": self.log10_u.tolist(),
            "values": self.values.tolist(),
            "ratio": self.ratio.tolist(),
            "limsup_estimate": self.limsup_estimate,
            "standard_errors": (
                None if self.standard_errors is None else self.standard_errors.tolist()
            ),
        }


@dataclass
class OperatorNormEstimate:
    """Estimate of the L2 -> L2 norm of the integral operator with kernel h."""

    value: float
    method: str  # "analytic", "svd_empirical", "schur_bound"
    sample_m: int = 0
    bootstrap_ci: Optional[Tuple[float, float]] = None
    bootstrap_se: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "equation": "eq1.3",
            "value": self.value,
            "method": self.method,
            "sample_m": self.sample_m,
            "bootstrap_ci": list(self.bootstrap_ci) if self.bootstrap_ci else None,
            "bootstrap_se": self.bootstrap_se,
        }


@dataclass
class TruncationProfile:
    """Truncated conditional moments f_n, g_n and the block moments c_n."""

    n_values: np.ndarray
    probes: np.ndarray
    f_n: np.ndarray  # shape (len(n_values), len(probes))
    g_n: np.ndarray  # shape (len(n_values), len(probes))
    c_n: np.ndarray  # shape (len(n_values),)
    method: str
    clamped: bool = False

    def to_dict(self) -> Dict:
        return {
            "equations": ["eq3.6", "eq3.12", "eq3.13"],
            "method": self.method,
            "n": self.n_values.tolist(),
            "probes": self.probes.tolist(),
            "f_n": self.f_n.tolist(),
            "g_n": self.g_n.tolist(),
            "c_n": self.c_n.tolist(),
            "clamped": self.clamped,
        }


@dataclass
class ConditionCheck:
    """Outcome of one certified or estimated condition."""

    name: str
    status: CheckStatus
    value: float
    certified: bool
    equation: str
    message: str = ""
    details: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "status": self.status.value,
            "value": self.value,
            "certified": self.certified,
            "equation": self.equation,
            "message": self.message,
            "details": self.details,
        }


@dataclass
class ConditionReport:
    """Bundle of the canonicality, integrability and operator-norm checks."""

    kernel_name: str
    distribution: str
    checks: Dict[str, ConditionCheck]
    curve: Optional[TruncatedMomentCurve] = None
    operator_norm: Optional[OperatorNormEstimate] = None
    schur: Optional[float] = None
    truncation: Optional[TruncationProfile] = None
    diagnostics: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.status != CheckStatus.FAILED for c in self.checks.values())

    def value(self, name: str) -> float:
        return self.checks[name].value

    def to_dict(self) -> Dict:
        return {
            "kernel": self.kernel_name,
            "distribution": self.distribution,
            "passed": self.passed,
            "checks": {k: c.to_dict() for k, c in self.checks.items()},
            "curve": self.curve.to_dict() if self.curve else None,
            "operator_norm": (
                self.operator_norm.to_dict() if self.operator_norm else None
            ),
            "schur_bound": self.schur,
            "truncation": self.truncation.to_dict() if self.truncation else None,
            "diagnostics": self.diagnostics,
        }


@dataclass
class Checkpoint:
    """Normalized statistic at one dyadic sample size."""

    n: int
    raw_sum: float
    normalized: float  # raw_sum / (n L2 n)
    normalized_half: float  # raw_sum / (2 n L2 n)

    @property
    def abs_normalized(self) -> float:
        return abs(self.normalized)


@dataclass
class TrajectoryResult:
    """All checkpoints of one seed for one sum variant."""

    seed: int
    variant: SumVariant
    engine: str
    checkpoints: List[Checkpoint] = field(default_factory=list)
    block_maxima: List[float] = field(default_factory=list)
    overflow_flag: bool = False

    def running_sup_from(self, n_min: int) -> float:
        """sup of |S_n|/(n L2 n) over checkpoints with n >= n_min (0 if none)."""
        tail = [c.abs_normalized for c in self.checkpoints if c.n >= n_min]
        return max(tail) if tail else 0.0

    def records(self) -> List[Dict]:
        return [
            {
                "seed": self.seed,
                "variant": self.variant.value,
                "engine": self.engine,
                "equation": self.variant.equation,
                "n": c.n,
                "raw_sum": c.raw_sum,
                "normalized_eq11": c.normalized,
                "normalized_eq511": c.normalized_half,
            }
            for c in self.checkpoints
        ]


@dataclass
class LimitSetEstimate:
    """Empirical limit points of the LIL sequence versus the numerical range."""

    points: np.ndarray
    hull: Tuple[float, float]
    predicted: Optional[Tuple[float, float]]
    histogram: Tuple[List[int], List[float]]
    max_consecutive_gap: float

    @property
    def coverage(self) -> Optional[float]:
        """Fraction of the predicted interval's length spanned by the hull."""
        if self.predicted is None:
            return None
        lo, hi = self.predicted
        if hi - lo <= 0:
            return 1.0
        overlap = min(hi, self.hull[1]) - max(lo, self.hull[0])
        return max(overlap, 0.0) / (hi - lo)

    def to_dict(self) -> Dict:
        return {
            "equation": "eq5.11",
            "count": int(self.points.size),
            "hull": list(self.hull),
            "predicted": list(self.predicted) if self.predicted else None,
            "coverage": self.coverage,
            "histogram": {
                "counts": self.histogram[0],
                "edges": self.histogram[1],
            },
            "max_consecutive_gap": self.max_consecutive_gap,
        }


@dataclass
class TalagrandQuery:
    """Parameters of the uniform Prohorov (Talagrand) tail bound."""

    t: float
    U: float
    V: Optional[float] = None
    sigma2: Optional[float] = None
    EZ_abs: Optional[float] = None
    K: float = 1.0

    def effective_variance(self) -> float:
        if self.V is not None:
            return self.V
        if self.sigma2 is None or self.EZ_abs is None:
            raise ConfigError("Talagrand query needs V or both sigma2 and EZ_abs")
        return self.sigma2 + 8.0 * self.U * self.EZ_abs


@dataclass
class LatalaCheck:
    """Probability that a chaos exceeds c times its chaos norm."""

    probability: float
    threshold: float
    holds: bool
    norm: float
    mode: str
    standard_error: float = 0.0
    distribution: Optional[List[Tuple[float, float]]] = None

    def to_dict(self) -> Dict:
        return {
            "equation": "eq2.13",
            "probability": self.probability,
            "threshold": self.threshold,
            "holds": self.holds,
            "norm": self.norm,
            "mode": self.mode,
            "standard_error": self.standard_error,
        }
