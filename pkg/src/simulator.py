"""
Monte Carlo LIL trajectories at dyadic checkpoints, limsup and limit-set
estimation against the numerical range of the kernel operator.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from hoeffding import CHUNK_CELLS, SeparableAccumulator
from kernels import (
    STREAM_BLOCK,
    STREAM_EPS,
    STREAM_EPS_TILDE,
    STREAM_GRAM,
    STREAM_X,
    STREAM_Y,
    Distribution,
    Kernel,
    evaluate_checked,
    sample_stream,
    sign_stream,
    stratified_sample,
)
from models import (
    Checkpoint,
    ConditionReport,
    ConfigError,
    LimitSetEstimate,
    SumVariant,
    TrajectoryResult,
)

logger = logging.getLogger(__name__)

ENGINE_CAPS = {"generic": 14, "separable": 26}
DEFAULT_BAND = (1.0 / 50.0, 50.0)
HISTOGRAM_BINS = 20
GRAM_SAMPLES = 20_000
GRAM_SE_THRESHOLD = 3.0


def log_log_vec(n: np.ndarray) -> np.ndarray:
    """L_2(n) = max(log max(log n, 1), 1), elementwise."""
    n = np.asarray(n, dtype=float)
    l1 = np.maximum(np.log(np.maximum(n, 1.0)), 1.0)
    return np.maximum(np.log(l1), 1.0)


def resolve_engine(kernel: Kernel, engine: str) -> str:
    """'auto' picks the separable engine whenever the kernel allows it."""
    if engine == "auto":
        return "separable" if kernel.separable is not None else "generic"
    return engine


@dataclass
class TrajectoryConfig:
    """One kernel, law and sum variant, run for a list of seeds."""

    kernel: Kernel
    dist: Distribution
    variant: SumVariant = SumVariant.PLAIN_OFFDIAG
    max_exponent: int = 10
    seeds: List[int] = field(default_factory=lambda: [0])
    engine: str = "auto"

    def __post_init__(self):
        self.variant = SumVariant.parse(self.variant)
        self.engine = resolve_engine(self.kernel, self.engine)
        if self.engine not in ENGINE_CAPS:
            raise ConfigError(
                f"Unknown engine '{self.engine}' (expected generic, separable or auto)"
            )
        cap = ENGINE_CAPS[self.engine]
        if not 0 <= self.max_exponent <= cap:
            raise ConfigError(
                f"{self.engine} engine supports max_exponent in [0, {cap}], "
                f"got {self.max_exponent}"
            )
        if self.engine == "separable" and self.kernel.separable is None:
            raise ConfigError(
                f"Kernel {self.kernel.name} has no separable expansion; use the generic engine"
            )
        if not self.seeds:
            raise ConfigError("At least one seed is required")
        if len(set(self.seeds)) != len(self.seeds) or min(self.seeds) < 0:
            raise ConfigError(f"Seeds must be distinct and non-negative: {self.seeds}")

    @property
    def horizon(self) -> int:
        return 1 << self.max_exponent


def _checkpoint(n: int, raw: float) -> Checkpoint:
    scale = n * float(log_log_vec(n))
    return Checkpoint(n=n, raw_sum=raw, normalized=raw / scale, normalized_half=raw / (2.0 * scale))


def _streams(config: TrajectoryConfig, seed: int, start: int, size: int):
    variant = config.variant
    x = sample_stream(config.dist, seed, STREAM_X, size, start)
    y = sample_stream(config.dist, seed, STREAM_Y, size, start) if variant.decoupled else None
    eps = sign_stream(seed, STREAM_EPS, size, start) if variant.randomized else None
    eps2 = (
        sign_stream(seed, STREAM_EPS_TILDE, size, start)
        if variant is SumVariant.DECOUPLED_RANDOMIZED
        else None
    )
    return x, y, eps, eps2


def _run_separable(config: TrajectoryConfig, seed: int) -> TrajectoryResult:
    acc = SeparableAccumulator(config.kernel, config.variant)
    result = TrajectoryResult(seed=seed, variant=config.variant, engine="separable")
    maxima = np.zeros(config.max_exponent + 1)
    horizon = config.horizon
    pos = 0
    while pos < horizon:
        size = min(STREAM_BLOCK, horizon - pos)
        x, y, eps, eps2 = _streams(config, seed, pos, size)
        running = acc.extend_batch(x, y, eps, eps2, running=True)
        if not np.all(np.isfinite(running)):
            result.overflow_flag = True
        n = np.arange(pos + 1, pos + size + 1, dtype=np.int64)
        with np.errstate(invalid="ignore"):
            normed = np.abs(running) / (n * log_log_vec(n))
        # dyadic block k holds 2^(k-1) < n <= 2^k; block 0 is n = 1
        block = np.frexp((n - 1).astype(float))[1]
        for k in np.unique(block):
            maxima[k] = max(maxima[k], float(np.nanmax(normed[block == k])))
        for i in np.nonzero((n & (n - 1)) == 0)[0]:
            result.checkpoints.append(_checkpoint(int(n[i]), float(running[i])))
        pos += size
    result.block_maxima = maxima.tolist()
    return result


def _increment(
    kernel: Kernel,
    variant: SumVariant,
    x: np.ndarray,
    y: Optional[np.ndarray],
    eps: Optional[np.ndarray],
    eps2: Optional[np.ndarray],
    lo: int,
    hi: int,
) -> List[float]:
    """Terms of S_hi - S_lo: all index pairs whose larger index lies in [lo, hi)."""
    left_w = eps if variant.randomized else np.ones(x.size)
    parts: List[float] = []
    rows = max(CHUNK_CELLS // max(hi, 1), 1)
    if not variant.decoupled:
        for r0 in range(lo, hi, rows):
            r1 = min(r0 + rows, hi)
            block = evaluate_checked(kernel, x[r0:r1, None], x[None, :hi])
            weighted = (left_w[r0:r1, None] * block) * left_w[None, :hi]
            diag = weighted[np.arange(r1 - r0), np.arange(r0, r1)]
            parts.append(2.0 * float(np.sum(weighted[:, :lo])))
            parts.append(float(np.sum(weighted[:, lo:hi])) - float(np.sum(diag)))
        return parts

    right_w = eps2 if variant is SumVariant.DECOUPLED_RANDOMIZED else np.ones(x.size)
    for r0 in range(lo, hi, rows):
        r1 = min(r0 + rows, hi)
        block = evaluate_checked(kernel, x[r0:r1, None], y[None, :hi])
        parts.append(float(np.sum((left_w[r0:r1, None] * block) * right_w[None, :hi])))
    for r0 in range(0, lo, rows):
        r1 = min(r0 + rows, lo)
        block = evaluate_checked(kernel, x[r0:r1, None], y[None, lo:hi])
        parts.append(float(np.sum((left_w[r0:r1, None] * block) * right_w[None, lo:hi])))
    return parts


def _run_generic(config: TrajectoryConfig, seed: int) -> TrajectoryResult:
    x, y, eps, eps2 = _streams(config, seed, 0, config.horizon)
    result = TrajectoryResult(seed=seed, variant=config.variant, engine="generic")
    parts: List[float] = []
    previous = 0
    for k in range(config.max_exponent + 1):
        n = 1 << k
        parts.extend(_increment(config.kernel, config.variant, x, y, eps, eps2, previous, n))
        raw = math.fsum(parts)
        if not math.isfinite(raw):
            result.overflow_flag = True
        result.checkpoints.append(_checkpoint(n, raw))
        previous = n
    return result


def run_seed(config: TrajectoryConfig, seed: int) -> TrajectoryResult:
    """One trajectory; a pure function of (config, seed)."""
    if config.engine == "separable":
        result = _run_separable(config, seed)
    else:
        result = _run_generic(config, seed)
    if result.overflow_flag:
        logger.warning(f"Seed {seed}: raw sum is not finite even with compensated summation")
    logger.debug(
        f"Seed {seed}: {len(result.checkpoints)} checkpoints, "
        f"final |S_n|/(n L2 n) = {result.checkpoints[-1].abs_normalized:.6g}"
    )
    return result


def run_trajectory(config: TrajectoryConfig, workers: int = 1) -> List[TrajectoryResult]:
    """
    Trajectories for every seed in the config, ordered by seed.

    Seeds are independent work units; the outcome does not depend on
    ``workers``.
    """
    seeds = sorted(config.seeds)
    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda s: run_seed(config, s), seeds))
    return [run_seed(config, s) for s in seeds]


def _max_exponent(results: Sequence[TrajectoryResult]) -> int:
    return max(r.checkpoints[-1].n for r in results).bit_length() - 1


def _burn_in(results: Sequence[TrajectoryResult], burn_in_exponent: Optional[int]) -> int:
    if not results:
        raise ConfigError("No trajectories to summarize")
    top = _max_exponent(results)
    burn = top // 2 if burn_in_exponent is None else int(burn_in_exponent)
    if burn < 0 or burn >= top:
        raise ConfigError(
            f"burn_in_exponent must lie in [0, {top - 1}] for max_exponent {top}, got {burn}"
        )
    return burn


def limsup_estimate(
    results: Sequence[TrajectoryResult],
    burn_in_exponent: Optional[int] = None,
    convention: str = "eq1.1",
) -> Dict:
    """
    Per-seed tail suprema of |S_n| / (n L_2 n) beyond the burn-in, with
    their median and interquartile range.

    ``convention="eq5.11"`` uses the 2 n L_2 n normalization instead.
    """
    if convention not in ("eq1.1", "eq5.11"):
        raise ConfigError(f"Unknown normalization '{convention}' (eq1.1 or eq5.11)")
    burn = _burn_in(results, burn_in_exponent)
    n_min = 1 << burn
    per_seed: Dict[str, float] = {}
    for r in results:
        tail = [
            abs(c.normalized if convention == "eq1.1" else c.normalized_half)
            for c in r.checkpoints
            if c.n >= n_min
        ]
        if not tail:
            raise ConfigError(f"Seed {r.seed} has no checkpoints beyond n = {n_min}")
        per_seed[str(r.seed)] = max(tail)
    values = np.array(list(per_seed.values()))
    return {
        "equation": convention,
        "burn_in_exponent": burn,
        "seeds": len(per_seed),
        "per_seed_tail_sup": per_seed,
        "median": float(np.median(values)),
        "iqr": float(stats.iqr(values)),
    }


def _check_orthonormal(kernel: Kernel, dist: Distribution, samples: int, seed: int) -> None:
    sep = kernel.separable
    if kernel.block is not None and dist.name == "uniform01":
        return  # disjoint supports with integral of I_n^2 equal to b_n
    support = dist.support
    rank = sep.rank
    eye = np.eye(rank)
    if support is not None:
        values, weights = support
        F = sep.features(values)
        gram = F.T @ (weights[:, None] * F)
        gap = float(np.max(np.abs(gram - eye)))
        if gap > 1e-9:
            raise ConfigError(
                f"Expansion of {kernel.name} is not orthonormal under {dist} (gap {gap:.3g})"
            )
        return
    F = sep.features(stratified_sample(dist, seed, STREAM_GRAM, samples))
    products = F[:, :, None] * F[:, None, :]
    gram = products.mean(axis=0)
    se = products.std(axis=0, ddof=1) / math.sqrt(samples)
    z = np.abs(gram - eye) - GRAM_SE_THRESHOLD * se
    if np.any(z > 1e-12):
        raise ConfigError(
            f"Expansion of {kernel.name} failed the Gram check under {dist} "
            f"(max deviation {float(np.max(np.abs(gram - eye))):.3g})"
        )


def _check_canonical(kernel: Kernel, dist: Distribution, samples: int, seed: int) -> None:
    """E phi_k(X) = 0 for every function with a nonzero weight."""
    sep = kernel.separable
    analytic = kernel.analytic
    same_law = kernel.distribution is None or kernel.distribution == dist
    if same_law and analytic is not None and analytic.conditional_mean is not None:
        means = np.asarray(analytic.conditional_mean(dist.quantile_probes(20)), dtype=float)
        worst = float(np.max(np.abs(means))) if means.size else 0.0
        if worst > 1e-12:
            raise ConfigError(
                f"Kernel {kernel.name} is not canonical under {dist} (|E_X h(X, y)| = {worst:.3g})"
            )
        return
    if kernel.block is not None and dist.name == "uniform01":
        return
    active = sep.weights != 0
    support = dist.support
    if support is not None:
        values, weights = support
        means = weights @ sep.features(values)
        if np.any(np.abs(means[active]) > 1e-9):
            raise ConfigError(f"Expansion of {kernel.name} is not centered under {dist}")
        return
    F = sep.features(stratified_sample(dist, seed, STREAM_GRAM, samples))
    means = F.mean(axis=0)
    se = F.std(axis=0, ddof=1) / math.sqrt(samples)
    if np.any((np.abs(means) - GRAM_SE_THRESHOLD * se)[active] > 1e-12):
        raise ConfigError(
            f"Expansion of {kernel.name} failed the centering check under {dist} "
            f"(max |mean| {float(np.max(np.abs(means[active]))):.3g})"
        )


def numerical_range(
    kernel: Kernel,
    dist: Optional[Distribution] = None,
    samples: int = GRAM_SAMPLES,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    (min(lambda_min, 0), max(lambda_max, 0)) for a kernel with an
    orthonormal separable expansion.

    Kernels whose conditional mean is not zero are refused.

    Raises:
        ConfigError: No expansion, or the functions fail the Gram check
            or the centering check
    """
    sep = kernel.separable
    if sep is None:
        raise ConfigError(f"Kernel {kernel.name} has no separable expansion")
    dist = dist or kernel.distribution
    if dist is None:
        raise ConfigError("numerical_range needs a distribution")
    if sep.rank == 0:
        return 0.0, 0.0
    _check_orthonormal(kernel, dist, samples, seed)
    _check_canonical(kernel, dist, samples, seed)
    lam = sep.weights
    return float(min(lam.min(), 0.0)), float(max(lam.max(), 0.0))


def limit_set_estimate(
    results: Sequence[TrajectoryResult],
    burn_in_exponent: Optional[int] = None,
    kernel: Optional[Kernel] = None,
    dist: Optional[Distribution] = None,
) -> LimitSetEstimate:
    """
    Signed values S_n / (2 n L_2 n) beyond the burn-in, pooled over seeds.

    The predicted interval is the numerical range when the kernel has an
    orthonormal expansion; otherwise it is left open.
    """
    if any(r.variant is not SumVariant.PLAIN_OFFDIAG for r in results):
        raise ConfigError("Limit sets are defined for the plain_offdiag variant only")
    burn = _burn_in(results, burn_in_exponent)
    n_min = 1 << burn
    points: List[float] = []
    gap = 0.0
    for r in sorted(results, key=lambda res: res.seed):
        tail = [c.normalized_half for c in r.checkpoints if c.n >= n_min]
        if len(tail) > 1:
            gap = max(gap, float(np.max(np.abs(np.diff(tail)))))
        points.extend(tail)
    if not points:
        raise ConfigError(f"No checkpoints beyond n = {n_min}")
    arr = np.asarray(points)

    predicted = None
    if kernel is not None and kernel.block is not None and kernel.block.source.get("sequence"):
        # truncated-moment limsup stays positive for these families
        logger.warning(
            f"No predicted interval for the {kernel.block.source['sequence']} block family"
        )
    elif kernel is not None and kernel.separable is not None:
        try:
            predicted = numerical_range(kernel, dist)
        except ConfigError as e:
            logger.warning(f"No predicted interval: {e}")

    counts, edges = np.histogram(arr, bins=HISTOGRAM_BINS)
    estimate = LimitSetEstimate(
        points=arr,
        hull=(float(arr.min()), float(arr.max())),
        predicted=predicted,
        histogram=(counts.tolist(), edges.tolist()),
        max_consecutive_gap=gap,
    )
    logger.info(
        f"Limit set: hull [{estimate.hull[0]:.4g}, {estimate.hull[1]:.4g}] from "
        f"{arr.size} points, predicted {predicted}"
    )
    return estimate


def sandwich_report(
    condition_report: ConditionReport,
    limsup_stats: Dict,
    band: Tuple[float, float] = DEFAULT_BAND,
) -> Dict:
    """
    Compare ||h|| + sqrt(limsup E(h^2 ∧ u)/L_2 u) with the empirical limsup.

    The constant relating the two is universal but unknown, so the ratio is
    only flagged when it leaves ``band``.
    """
    op = condition_report.value("cond_c")
    curve_limsup = condition_report.value("cond_b")
    K = op + math.sqrt(max(curve_limsup, 0.0))
    empirical = float(limsup_stats["median"])
    if K == 0.0:
        ratio = 1.0 if empirical == 0.0 else math.inf
    else:
        ratio = empirical / K
    flagged = not (band[0] <= ratio <= band[1])
    if flagged:
        logger.warning(f"Sandwich ratio {ratio:.4g} outside plausibility band {band}")
    return {
        "equation": "eq5.6",
        "kernel": condition_report.kernel_name,
        "K": K,
        "operator_norm": op,
        "truncated_moment_limsup": curve_limsup,
        "empirical_limsup": empirical,
        "normalization": limsup_stats.get("equation"),
        "ratio": ratio,
        "band": list(band),
        "flagged": flagged,
    }


class SimulationRunner:
    """Runs a trajectory config with a banner and a closing report."""

    def __init__(self, config: TrajectoryConfig, workers: int = 1, burn_in: Optional[int] = None):
        """
        Args:
            config: Trajectory configuration
            workers: Threads across seeds
            burn_in: Burn-in exponent of the summary (default max_exponent // 2)
        """
        self.config = config
        self.workers = workers
        self.burn_in = burn_in
        self.stats = {"seeds": 0, "checkpoints": 0, "overflow": 0}
        self.run_start_time: Optional[float] = None
        self.run_end_time: Optional[float] = None
        self.results: List[TrajectoryResult] = []
        self.summary: Optional[Dict] = None

    def run(self) -> List[TrajectoryResult]:
        cfg = self.config
        self.run_start_time = time.time()
        logger.info("=" * 70)
        logger.info("U-statistic LIL trajectories")
        logger.info("=" * 70)
        logger.info(f"Kernel: {cfg.kernel.name}")
        logger.info(f"Distribution: {cfg.dist}")
        logger.info(f"Variant: {cfg.variant.value} ({cfg.variant.equation})")
        logger.info(f"Engine: {cfg.engine}")
        logger.info(f"Max exponent: {cfg.max_exponent} (n up to {cfg.horizon})")
        logger.info(f"Seeds: {', '.join(str(s) for s in sorted(cfg.seeds))}")
        logger.info(f"Workers: {self.workers}")
        logger.info(f"Start time: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        logger.info("=" * 70)

        self.results = run_trajectory(cfg, workers=self.workers)
        self.stats["seeds"] = len(self.results)
        self.stats["checkpoints"] = sum(len(r.checkpoints) for r in self.results)
        self.stats["overflow"] = sum(1 for r in self.results if r.overflow_flag)
        if cfg.max_exponent > 0:
            self.summary = limsup_estimate(self.results, self.burn_in)
        self.run_end_time = time.time()
        self._print_report()
        return self.results

    def _format_duration(self, seconds: float) -> str:
        if seconds < 60:
            return f"{seconds:.1f}s"
        mins = int(seconds // 60)
        return f"{mins}m {seconds % 60:.0f}s"

    def _print_report(self):
        logger.info("")
        logger.info("=" * 70)
        logger.info("SIMULATION REPORT")
        logger.info("=" * 70)
        logger.info(
            f"Total duration:  {self._format_duration(self.run_end_time - self.run_start_time)}"
        )
        logger.info("")
        logger.info("STATISTICS")
        logger.info("-" * 40)
        for k, v in self.stats.items():
            logger.info(f"{k:20s}: {v}")
        if self.summary:
            logger.info("")
            logger.info(f"TAIL SUPREMA (n >= 2^{self.summary['burn_in_exponent']})")
            logger.info("-" * 40)
            logger.info(f"{'Seed':<10} {'sup |S_n|/(n L2 n)'}")
            for seed, value in self.summary["per_seed_tail_sup"].items():
                logger.info(f"{seed:<10} {value:.6g}")
            logger.info("-" * 40)
            logger.info(f"Median: {self.summary['median']:.6g}   IQR: {self.summary['iqr']:.6g}")
        logger.info("=" * 70)
