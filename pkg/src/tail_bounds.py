"""
Concentration-bound calculators and the chaos lower-bound checker.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from chaos_norm import chaos_norm
from kernels import STREAM_LATALA, STREAM_LATALA_TILDE, sign_stream
from models import ChaosMatrix, ConfigError, LatalaCheck, TalagrandQuery

logger = logging.getLogger(__name__)

DEFAULT_LATALA_C = 0.05
DEFAULT_MC_SAMPLES = 100_000
MAX_EXHAUSTIVE_SIGNS = 24
MC_CHUNK = 1 << 16


def _require_positive(**values: Optional[float]) -> None:
    for name, value in values.items():
        if value is None or not math.isfinite(value) or value <= 0:
            raise ConfigError(f"{name} must be a positive finite number, got {value}")


def talagrand_bound(q: TalagrandQuery) -> float:
    """
    Uniform Prohorov bound K exp(-(t / (K U)) log(1 + t U / V)).

    V comes from the query directly or as sigma2 + 8 U E|Z|.
    """
    _require_positive(t=q.t, U=q.U, K=q.K)
    if q.V is None:
        if q.sigma2 is None or q.EZ_abs is None:
            raise ConfigError("Talagrand query needs V or both sigma2 and EZ_abs")
        if q.sigma2 < 0 or q.EZ_abs < 0:
            raise ConfigError("sigma2 and EZ_abs must be non-negative")
    V = q.effective_variance()
    _require_positive(V=V)
    exponent = (q.t / (q.K * q.U)) * math.log1p(q.t * q.U / V)
    return q.K * math.exp(-exponent)


def prohorov_bound(t: float, U: float, sigma2: float) -> float:
    """2 exp(-(t / (2U)) arcsinh(t U / (2 sigma2)))."""
    _require_positive(t=t, U=U, sigma2=sigma2)
    return 2.0 * math.exp(-(t / (2.0 * U)) * math.asinh(t * U / (2.0 * sigma2)))


def bernstein_bound(t: float, U: float, sigma2: float) -> float:
    """2 exp(-t^2 / (2 sigma2 + 2 U t / 3))."""
    _require_positive(t=t, U=U, sigma2=sigma2)
    return 2.0 * math.exp(-(t * t) / (2.0 * sigma2 + 2.0 * U * t / 3.0))


def _sign_patterns(size: int) -> np.ndarray:
    if size == 0:
        return np.ones((1, 0))
    return np.array(list(itertools.product((-1.0, 1.0), repeat=size)))


def chaos_values(A: Union[ChaosMatrix, np.ndarray], workers: int = 1) -> np.ndarray:
    """
    sum_ij a_ij eps_i eps~_j for every pair of sign vectors.

    Rows are sharded by sign prefix when ``workers`` > 1.

    Returns:
        Array of shape (2^k, 2^l)
    """
    a = A.entries if isinstance(A, ChaosMatrix) else np.asarray(A, dtype=float)
    k, l = a.shape
    if k + l > MAX_EXHAUSTIVE_SIGNS:
        raise ConfigError(
            f"Exhaustive enumeration needs k + l <= {MAX_EXHAUSTIVE_SIGNS}, got {k + l}"
        )
    left = _sign_patterns(k)
    right_t = _sign_patterns(l).T
    if workers <= 1:
        return (left @ a) @ right_t
    shards = np.array_split(left, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda rows: (rows @ a) @ right_t, shards))
    return np.vstack(parts)


def _exceeds(values: np.ndarray, threshold: float) -> np.ndarray:
    # tolerance for chaos values equal to the threshold up to rounding
    return np.abs(values) >= threshold - 1e-12 * max(1.0, threshold)


def latala_lower_check(
    A: Union[ChaosMatrix, np.ndarray, list],
    t: float,
    c: float = DEFAULT_LATALA_C,
    mode: str = "exhaustive",
    samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    restarts: int = 16,
    norm: Optional[float] = None,
    workers: int = 1,
) -> LatalaCheck:
    """
    Check Pr{|sum a_ij eps_i eps~_j| >= c |||A|||_t} >= min(c, e^{-t}).

    Args:
        A: Coefficient matrix
        t: Chaos-norm parameter
        c: Constant of the lower bound
        mode: "exhaustive" (all 2^(k+l) sign pairs) or "monte_carlo"
        samples: Monte Carlo sample count
        seed: Seed of the sign streams
        restarts: Restarts of the chaos-norm solver
        norm: Precomputed |||A|||_t
        workers: Threads for the exhaustive enumeration

    Returns:
        LatalaCheck; the exhaustive mode also carries the full distribution
    """
    matrix = A if isinstance(A, ChaosMatrix) else ChaosMatrix(np.asarray(A, dtype=float))
    _require_positive(t=t, c=c)
    if norm is None:
        norm = chaos_norm(matrix, t, restarts=restarts, seed=seed).value
    threshold = c * norm
    target = min(c, math.exp(-t))
    k, l = matrix.entries.shape

    if mode == "exhaustive":
        values = chaos_values(matrix, workers=workers).ravel()
        probability = float(np.mean(_exceeds(values, threshold)))
        support, counts = np.unique(np.round(values, 12), return_counts=True)
        distribution = [
            (float(v), float(n) / values.size) for v, n in zip(support, counts)
        ]
        se = 0.0
    elif mode == "monte_carlo":
        if samples < 1:
            raise ConfigError(f"samples must be >= 1, got {samples}")
        hits = 0
        for lo in range(0, samples, MC_CHUNK):
            size = min(MC_CHUNK, samples - lo)
            eps = sign_stream(seed, STREAM_LATALA, size * k, start=lo * k).reshape(size, k)
            eps2 = sign_stream(seed, STREAM_LATALA_TILDE, size * l, start=lo * l).reshape(
                size, l
            )
            values = np.einsum("si,ij,sj->s", eps, matrix.entries, eps2)
            hits += int(np.count_nonzero(_exceeds(values, threshold)))
        probability = hits / samples
        se = math.sqrt(probability * (1.0 - probability) / samples)
        distribution = None
    else:
        raise ConfigError(f"Unknown mode '{mode}' (expected exhaustive or monte_carlo)")

    holds = probability >= target
    logger.debug(
        f"Chaos lower bound {k}x{l}, t={t}, c={c}: P={probability:.6g} vs "
        f"{target:.6g} ({'holds' if holds else 'violated'})"
    )
    return LatalaCheck(
        probability=probability,
        threshold=target,
        holds=holds,
        norm=float(norm),
        mode=mode,
        standard_error=se,
        distribution=distribution,
    )


def calibrate_latala_constant(
    matrices: Iterable[Union[ChaosMatrix, np.ndarray, list]],
    t_values: Sequence[float],
    c_grid: Optional[Sequence[float]] = None,
    restarts: int = 16,
) -> Dict:
    """
    Largest c on a grid for which the lower bound holds on every instance.

    Uses exhaustive probabilities, so every matrix must satisfy k + l <= 24.

    Returns:
        {"c": largest passing grid value (0.0 if none), "instances": count,
         "worst": instance index limiting c}
    """
    grid = np.sort(
        np.asarray(
            c_grid if c_grid is not None else np.linspace(0.005, 1.0, 200), dtype=float
        )
    )
    if grid.size == 0 or np.any(grid <= 0):
        raise ConfigError("c grid must be non-empty and positive")
    first_fail = grid.size
    instances = 0
    worst: Optional[int] = None
    for A in matrices:
        matrix = A if isinstance(A, ChaosMatrix) else ChaosMatrix(np.asarray(A, dtype=float))
        values = chaos_values(matrix).ravel()
        for t in t_values:
            _require_positive(t=t)
            norm = chaos_norm(matrix, t, restarts=restarts).value
            probs = np.array([np.mean(_exceeds(values, c * norm)) for c in grid])
            ok = probs >= np.minimum(grid, math.exp(-t))
            fail = int(np.argmin(ok)) if not np.all(ok) else grid.size
            if worst is None or fail < first_fail:
                worst = instances
                first_fail = min(first_fail, fail)
            instances += 1
    best = float(grid[first_fail - 1]) if first_fail > 0 else 0.0
    logger.info(f"Calibrated chaos lower-bound constant c={best:.4g} over {instances} cases")
    return {"c": best, "instances": instances, "worst": worst}


def bound_records(
    t: float,
    U: float,
    sigma2: Optional[float] = None,
    V: Optional[float] = None,
    EZ_abs: Optional[float] = None,
    K: float = 1.0,
) -> List[Dict]:
    """Evaluate every calculator that the given inputs allow, as tagged records."""
    records: List[Dict] = []
    if V is not None or (sigma2 is not None and EZ_abs is not None):
        query = TalagrandQuery(t=t, U=U, V=V, sigma2=sigma2, EZ_abs=EZ_abs, K=K)
        records.append(
            {
                "equation": "eq2.15",
                "bound": "talagrand",
                "t": t,
                "U": U,
                "V": query.effective_variance(),
                "K": K,
                "value": talagrand_bound(query),
            }
        )
    if sigma2 is not None:
        for name, func in (("prohorov", prohorov_bound), ("bernstein", bernstein_bound)):
            records.append(
                {
                    "equation": "lemma3.3",
                    "bound": name,
                    "t": t,
                    "U": U,
                    "sigma2": sigma2,
                    "value": func(t, U, sigma2),
                }
            )
    if not records:
        raise ConfigError("Bounds need V, or sigma2 (with EZ_abs for the Talagrand form)")
    return records
