"""
Certifiers and estimators for the canonicality, truncated second moment and
operator-norm conditions of the U-statistic LIL, plus the truncation
statistics f_n, g_n and c_n.

Closed forms are used when the kernel carries them for the law in question
(reported as certified); everything else is a seeded Monte Carlo estimate.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from hoeffding import CHUNK_CELLS
from kernels import (
    STREAM_BOOTSTRAP,
    STREAM_MC_X,
    STREAM_MC_Y,
    STREAM_OPNORM_X,
    STREAM_OPNORM_Y,
    Distribution,
    Kernel,
    evaluate_checked,
    rng_for,
    safe_log_log,
    sample_stream,
    stratified_sample,
)
from models import (
    CheckStatus,
    ConditionCheck,
    ConditionReport,
    ConfigError,
    NumericalError,
    OperatorNormEstimate,
    TruncatedMomentCurve,
    TruncationProfile,
)

logger = logging.getLogger(__name__)

DEFAULT_ANALYTIC_LOG10_TOP = 300.0
DEFAULT_MC_LOG10_TOP = 12.0
DEFAULT_MC_SAMPLES = 100_000
MIN_MC_SAMPLES = 1000
DEFAULT_OPNORM_M = 2000
MIN_OPNORM_M = 50
MIN_PROBE_M = 100
BOOTSTRAP_RESAMPLES = 32
POWER_TOLERANCE = 1e-8
POWER_MAX_ITERATIONS = 10_000
POWER_START_INDEX = 1 << 20
CANONICAL_SE_THRESHOLD = 4.0
GROWTH_TOLERANCE = 0.25
GROWTH_SE = 3.0
NORM_SPREAD_LIMIT = 0.15
PROBE_COUNT = 20
TRUNCATION_N_MAX = 64
LN10 = math.log(10.0)


def _same_law(kernel: Kernel, dist: Distribution) -> bool:
    return kernel.distribution is None or kernel.distribution == dist


def default_log10_grid(analytic: bool) -> np.ndarray:
    """Geometric truncation levels 10..10^300 (closed form) or 10..10^12 (sampled)."""
    if analytic:
        return np.linspace(1.0, DEFAULT_ANALYTIC_LOG10_TOP, int(DEFAULT_ANALYTIC_LOG10_TOP))
    return np.linspace(1.0, DEFAULT_MC_LOG10_TOP, 45)


def _resolve_grid(
    u_grid: Optional[Sequence[float]],
    log10_u_grid: Optional[Sequence[float]],
    analytic: bool,
) -> np.ndarray:
    if log10_u_grid is not None:
        log10 = np.asarray(log10_u_grid, dtype=float).ravel()
    elif u_grid is not None:
        u = np.asarray(u_grid, dtype=float).ravel()
        if np.any(u <= 0):
            raise ConfigError("Truncation levels must be positive")
        log10 = np.log10(u)
    else:
        return default_log10_grid(analytic)
    if log10.size == 0 or not np.all(np.isfinite(log10)):
        raise ConfigError("Truncation grid must be non-empty and finite")
    if np.any(np.diff(log10) <= 0):
        raise ConfigError("Truncation grid must be strictly increasing")
    if log10[0] < 1.0 - 1e-12:
        raise ConfigError(f"Truncation grid must start at u >= 10, got 10^{log10[0]:g}")
    return log10


def _top_third_max(ratio: np.ndarray) -> float:
    start = (2 * ratio.size) // 3
    return float(np.max(ratio[start:]))


def truncated_moment_curve(
    kernel: Kernel,
    dist: Distribution,
    u_grid: Optional[Sequence[float]] = None,
    mc_samples: int = DEFAULT_MC_SAMPLES,
    seed: int = 0,
    log10_u_grid: Optional[Sequence[float]] = None,
    force_monte_carlo: bool = False,
) -> TruncatedMomentCurve:
    """
    E(h^2 ∧ u) and its ratio to L_2 u over a geometric grid.

    The closed form is evaluated in log u, so ``log10_u_grid`` may reach far
    beyond the double range. Monte Carlo mode pairs X_i with Y_i and reports
    standard errors.

    Args:
        kernel: Kernel under test
        dist: Law of X and Y
        u_grid: Truncation levels (>= 10, increasing)
        mc_samples: Pair count in Monte Carlo mode
        seed: Seed of the Monte Carlo streams
        log10_u_grid: Grid given as log10 u; takes precedence over u_grid
        force_monte_carlo: Ignore the closed form

    Returns:
        TruncatedMomentCurve
    """
    analytic = kernel.analytic
    use_analytic = (
        not force_monte_carlo
        and _same_law(kernel, dist)
        and analytic is not None
        and analytic.log_second_moment_curve is not None
    )
    log10 = _resolve_grid(u_grid, log10_u_grid, use_analytic)
    log_u = log10 * LN10

    if use_analytic:
        values = np.asarray(analytic.log_second_moment_curve(log_u), dtype=float)
        se = None
        method = "analytic"
    else:
        if mc_samples < MIN_MC_SAMPLES:
            raise ConfigError(
                f"Monte Carlo curve needs mc_samples >= {MIN_MC_SAMPLES}, got {mc_samples}"
            )
        x = sample_stream(dist, seed, STREAM_MC_X, mc_samples)
        y = sample_stream(dist, seed, STREAM_MC_Y, mc_samples)
        h = evaluate_checked(kernel, x, y)
        with np.errstate(over="ignore"):
            h2 = np.sort(h * h)
        sq = np.minimum(h2, np.finfo(float).max)
        prefix = np.concatenate(([0.0], np.cumsum(sq)))
        with np.errstate(over="ignore"):
            prefix_sq = np.concatenate(([0.0], np.cumsum(sq * sq)))
        u = np.exp(np.minimum(log_u, 709.0))
        below = np.searchsorted(h2, u, side="right")
        above = mc_samples - below
        values = (prefix[below] + u * above) / mc_samples
        second = (prefix_sq[below] + u * u * above) / mc_samples
        var = np.maximum(second - values * values, 0.0) * mc_samples / (mc_samples - 1)
        se = np.sqrt(var / mc_samples)
        method = "monte_carlo"

    ratio = values / safe_log_log(log_u)
    limsup = _top_third_max(ratio)
    logger.debug(
        f"Truncated moment curve for {kernel.name} ({method}): "
        f"{log10.size} levels up to 10^{log10[-1]:g}, limsup estimate {limsup:.6g}"
    )
    return TruncatedMomentCurve(
        log10_u=log10,
        values=values,
        ratio=ratio,
        limsup_estimate=limsup,
        method=method,
        standard_errors=se,
    )


class _SampleMatrix:
    """M[i, j] = h(x_i, y_j), held in factored form for separable kernels."""

    def __init__(self, kernel: Kernel, x: np.ndarray, y: np.ndarray):
        self.m = x.size
        self.dense: Optional[np.ndarray] = None
        self.fx: Optional[np.ndarray] = None
        self.fy: Optional[np.ndarray] = None
        if kernel.separable is not None:
            sep = kernel.separable
            self.weights = sep.weights
            self.fx = sep.features(x)
            self.fy = sep.features(y)
            if not (np.all(np.isfinite(self.fx)) and np.all(np.isfinite(self.fy))):
                # fall back to direct evaluation to name the offending point
                self.fx = self.fy = None
        if self.fx is None:
            rows = max(CHUNK_CELLS // max(y.size, 1), 1)
            self.dense = np.vstack(
                [
                    evaluate_checked(kernel, x[lo : lo + rows, None], y[None, :])
                    for lo in range(0, x.size, rows)
                ]
            )

    def operator(
        self, rows: Optional[np.ndarray] = None, cols: Optional[np.ndarray] = None
    ) -> LinearOperator:
        if self.dense is not None:
            mat = self.dense
            if rows is not None:
                mat = mat[np.ix_(rows, cols)]
            return aslinearoperator(mat)
        fx = self.fx if rows is None else self.fx[rows]
        fy = self.fy if cols is None else self.fy[cols]
        w = self.weights
        return LinearOperator(
            shape=(fx.shape[0], fy.shape[0]),
            matvec=lambda v: fx @ (w * (fy.T @ np.ravel(v))),
            rmatvec=lambda v: fy @ (w * (fx.T @ np.ravel(v))),
            dtype=float,
        )


def spectral_norm(
    op: LinearOperator,
    tol: float = POWER_TOLERANCE,
    max_iter: int = POWER_MAX_ITERATIONS,
    seed: int = 0,
) -> float:
    """
    Largest singular value by power iteration on M^T M.

    Raises:
        NumericalError: No convergence within ``max_iter`` steps
    """
    v = rng_for(seed, STREAM_OPNORM_Y, POWER_START_INDEX).standard_normal(op.shape[1])
    v /= np.linalg.norm(v)
    previous = 0.0
    for iteration in range(1, max_iter + 1):
        w = op.rmatvec(op.matvec(v))
        lam = float(v @ w)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        if not math.isfinite(norm_w):
            raise NumericalError("Power iteration produced non-finite values")
        v = w / norm_w
        if abs(lam - previous) <= tol * lam:
            logger.debug(f"Power iteration converged after {iteration} steps")
            return math.sqrt(max(lam, 0.0))
        previous = lam
    raise NumericalError(f"Power iteration did not converge in {max_iter} steps")


def operator_norm(
    kernel: Kernel,
    dist: Distribution,
    m: int = DEFAULT_OPNORM_M,
    seed: int = 0,
    method: str = "auto",
    bootstrap: int = BOOTSTRAP_RESAMPLES,
    sampling: str = "stratified",
    workers: int = 1,
) -> OperatorNormEstimate:
    """
    L2 -> L2 norm of the integral operator with kernel h.

    The empirical value is sigma_max(M) / m for M[i, j] = h(X_i, Y_j). By
    default X and Y are stratified samples (one point per probability
    stratum), which removes most of the count noise of i.i.d. draws. The
    bootstrap interval resamples rows and columns and is widened to contain
    the point estimate.

    Args:
        kernel: Kernel under test
        dist: Law of X and Y
        m: Sample size per axis (>= 50)
        seed: Seed of the samples and resamples
        method: "auto", "analytic" or "svd_empirical"
        bootstrap: Number of resamples (0 disables)
        sampling: "stratified" or "iid"
        workers: Threads for the bootstrap

    Returns:
        OperatorNormEstimate
    """
    analytic = kernel.analytic
    has_closed_form = (
        analytic is not None
        and analytic.operator_norm is not None
        and _same_law(kernel, dist)
    )
    if method not in ("auto", "analytic", "svd_empirical"):
        raise ConfigError(f"Unknown operator-norm method '{method}'")
    if method == "analytic" and not has_closed_form:
        raise ConfigError(f"Kernel {kernel.name} has no closed-form operator norm")
    if method != "svd_empirical" and has_closed_form:
        return OperatorNormEstimate(value=float(analytic.operator_norm), method="analytic")

    if m < MIN_OPNORM_M:
        raise ConfigError(f"Operator norm needs m >= {MIN_OPNORM_M}, got {m}")
    if sampling == "stratified":
        x = stratified_sample(dist, seed, STREAM_OPNORM_X, m)
        y = stratified_sample(dist, seed, STREAM_OPNORM_Y, m)
    elif sampling == "iid":
        x = sample_stream(dist, seed, STREAM_OPNORM_X, m)
        y = sample_stream(dist, seed, STREAM_OPNORM_Y, m)
    else:
        raise ConfigError(f"Unknown sampling '{sampling}' (expected stratified or iid)")

    sample = _SampleMatrix(kernel, x, y)
    value = spectral_norm(sample.operator(), seed=seed) / m

    ci = None
    se = None
    if bootstrap > 0:

        def resample(r: int) -> float:
            rng = rng_for(seed, STREAM_BOOTSTRAP, r)
            rows = rng.integers(0, m, size=m)
            cols = rng.integers(0, m, size=m)
            return spectral_norm(sample.operator(rows, cols), seed=seed) / m

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                draws = np.array(list(pool.map(resample, range(bootstrap))))
        else:
            draws = np.array([resample(r) for r in range(bootstrap)])
        lo, hi = np.percentile(draws, [2.5, 97.5])
        ci = (float(min(lo, value)), float(max(hi, value)))
        se = float(np.std(draws, ddof=1)) if bootstrap > 1 else 0.0

    logger.debug(f"Operator norm of {kernel.name}: {value:.6g} (m={m}, ci={ci})")
    return OperatorNormEstimate(
        value=float(value),
        method="svd_empirical",
        sample_m=m,
        bootstrap_ci=ci,
        bootstrap_se=se,
    )


def _mean_abs_rows(kernel: Kernel, probes: np.ndarray, sample: np.ndarray, first: bool) -> np.ndarray:
    rows = max(CHUNK_CELLS // max(sample.size, 1), 1)
    out = np.empty(probes.size)
    for lo in range(0, probes.size, rows):
        p = probes[lo : lo + rows, None]
        block = (
            evaluate_checked(kernel, p, sample[None, :])
            if first
            else evaluate_checked(kernel, sample[None, :], p)
        )
        out[lo : lo + rows] = np.abs(block).mean(axis=1)
    return out


def schur_bound(
    kernel: Kernel,
    dist: Distribution,
    probe_m: int = 1000,
    seed: int = 0,
    mc_samples: int = 10_000,
) -> float:
    """
    sqrt(s1 s2) with s1 = sup_x E_Y|h(x, Y)| and s2 = sup_y E_X|h(X, y)|.

    An estimate of an upper bound on the operator norm; ``inf`` when the
    row integrals are unbounded on the probes.
    """
    if probe_m < MIN_PROBE_M:
        raise ConfigError(f"Schur bound needs probe_m >= {MIN_PROBE_M}, got {probe_m}")

    spec = kernel.block
    if spec is not None and dist.name == "uniform01":
        # E_Y|h(x, Y)| = |a_n| on block n, which has positive measure
        all_a = spec.all_a
        s1 = s2 = float(np.max(np.abs(all_a))) if all_a.size else 0.0
    elif dist.support is not None:
        values, weights = dist.support
        keep = weights > 0
        values, weights = values[keep], weights[keep]
        H = np.abs(evaluate_checked(kernel, values[:, None], values[None, :]))
        s1 = float(np.max(H @ weights))
        s2 = float(np.max(weights @ H))
    else:
        probes = dist.quantile_probes(probe_m)
        xs = stratified_sample(dist, seed, STREAM_MC_X, mc_samples)
        ys = stratified_sample(dist, seed, STREAM_MC_Y, mc_samples)
        s1 = float(np.max(_mean_abs_rows(kernel, probes, ys, first=True)))
        s2 = float(np.max(_mean_abs_rows(kernel, probes, xs, first=False)))

    bound = math.sqrt(s1 * s2)
    if not math.isfinite(bound):
        logger.warning(f"Schur bound for {kernel.name} is unbounded on the probes")
        return math.inf
    return bound


def truncation_profile(
    kernel: Kernel,
    dist: Distribution,
    n_range: Tuple[int, int] = (1, 16),
    probes: Optional[Sequence[float]] = None,
    mc_samples: int = 20_000,
    seed: int = 0,
) -> TruncationProfile:
    """
    f_n(x) = E_Y min(h^2, 2^{4n}), g_n(x) = E_Y h I{|h| >= 2^n n^2} and
    c_n = E h^2 I{2^n n^-2 < |h| <= 2^n n^2}.

    Block kernels on uniform01 use per-block closed forms. Ranges outside
    [1, 64] are clamped and flagged.
    """
    lo, hi = int(n_range[0]), int(n_range[1])
    if lo > hi:
        raise ConfigError(f"Empty truncation range {n_range}")
    clamped = lo < 1 or hi > TRUNCATION_N_MAX
    if clamped:
        logger.warning(
            f"Truncation range {n_range} clamped to [1, {TRUNCATION_N_MAX}]"
        )
        lo, hi = max(lo, 1), min(hi, TRUNCATION_N_MAX)
        if lo > hi:
            lo = hi = 1 if n_range[1] < 1 else TRUNCATION_N_MAX
    n = np.arange(lo, hi + 1)
    nf = n.astype(float)
    points = (
        dist.quantile_probes(PROBE_COUNT)
        if probes is None
        else np.asarray(probes, dtype=float).ravel()
    )
    cap = np.ldexp(1.0, 4 * n)[:, None]
    upper = np.ldexp(1.0, n) * nf * nf
    lower = np.ldexp(1.0, n) / (nf * nf)

    spec = kernel.block
    if spec is not None and dist.name == "uniform01":
        idx, _ = spec.locate(points)
        inside = idx >= 0
        safe = np.clip(idx, 0, max(spec.count - 1, 0))
        if spec.count:
            a_m = np.where(inside, spec.a[safe], 0.0)
            b_m = np.where(inside, spec.b[safe], 1.0)
        else:
            a_m = np.zeros(points.size)
            b_m = np.ones(points.size)
        with np.errstate(over="ignore"):
            ratio_sq = (a_m / b_m) ** 2
        f = np.where(inside[None, :], b_m[None, :] * np.minimum(ratio_sq[None, :], cap), 0.0)
        g = np.zeros_like(f)
        all_a = spec.all_a
        nz = all_a != 0
        log_ratio = np.log(np.abs(all_a[nz])) - spec.all_log_b[nz]
        a2 = all_a[nz] ** 2
        in_band = (log_ratio[None, :] > np.log(lower)[:, None]) & (
            log_ratio[None, :] <= np.log(upper)[:, None]
        )
        c = in_band.astype(float) @ a2
        method = "analytic"
    else:
        if mc_samples < MIN_MC_SAMPLES:
            raise ConfigError(
                f"Truncation profile needs mc_samples >= {MIN_MC_SAMPLES}, got {mc_samples}"
            )
        ys = sample_stream(dist, seed, STREAM_MC_Y, mc_samples)
        xs = sample_stream(dist, seed, STREAM_MC_X, mc_samples)
        H = evaluate_checked(kernel, points[:, None], ys[None, :])
        pairs = evaluate_checked(kernel, xs, ys)
        with np.errstate(over="ignore"):
            H2 = H * H
            pairs2 = pairs * pairs
        f = np.stack([np.minimum(H2, cap[k]).mean(axis=1) for k in range(n.size)])
        g = np.stack(
            [np.where(np.abs(H) >= upper[k], H, 0.0).mean(axis=1) for k in range(n.size)]
        )
        abs_pairs = np.abs(pairs)
        c = np.array(
            [
                np.where((abs_pairs > lower[k]) & (abs_pairs <= upper[k]), pairs2, 0.0).mean()
                for k in range(n.size)
            ]
        )
        method = "monte_carlo"

    return TruncationProfile(
        n_values=n,
        probes=points,
        f_n=np.asarray(f, dtype=float),
        g_n=np.asarray(g, dtype=float),
        c_n=np.asarray(c, dtype=float),
        method=method,
        clamped=clamped,
    )


@dataclass
class CertifyOptions:
    """Sample sizes and switches for ``certify``."""

    seed: int = 0
    mc_samples: int = DEFAULT_MC_SAMPLES
    opnorm_m: int = DEFAULT_OPNORM_M
    bootstrap: int = BOOTSTRAP_RESAMPLES
    probe_m: int = 1000
    log10_u_grid: Optional[Sequence[float]] = None
    monte_carlo: bool = False
    truncation_range: Optional[Tuple[int, int]] = (1, 16)
    delta: float = 0.1
    workers: int = 1


def _canonical_check(kernel: Kernel, dist: Distribution, options: CertifyOptions) -> ConditionCheck:
    probes = dist.quantile_probes(PROBE_COUNT)
    analytic = kernel.analytic
    if (
        not options.monte_carlo
        and _same_law(kernel, dist)
        and analytic is not None
        and analytic.conditional_mean is not None
    ):
        means = np.asarray(analytic.conditional_mean(probes), dtype=float)
        worst = float(np.max(np.abs(means))) if means.size else 0.0
        ok = worst <= 1e-12
        return ConditionCheck(
            name="canonical",
            status=CheckStatus.PASSED if ok else CheckStatus.FAILED,
            value=worst,
            certified=True,
            equation="thm1.1a",
            message="E_X h(X, y) = 0 on all probes" if ok else "E_X h(X, y) != 0",
            details={"probes": probes.tolist(), "means": means.tolist()},
        )

    if options.mc_samples < MIN_MC_SAMPLES:
        raise ConfigError(f"Canonicality check needs mc_samples >= {MIN_MC_SAMPLES}")
    xs = sample_stream(dist, options.seed, STREAM_MC_X, options.mc_samples)
    H = evaluate_checked(kernel, xs[:, None], probes[None, :])
    means = H.mean(axis=0)
    se = H.std(axis=0, ddof=1) / math.sqrt(xs.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(means) / se, np.where(means == 0, 0.0, np.inf))
    worst_z = float(np.max(z))
    ok = worst_z <= CANONICAL_SE_THRESHOLD
    return ConditionCheck(
        name="canonical",
        status=CheckStatus.PASSED if ok else CheckStatus.FAILED,
        value=float(np.max(np.abs(means))),
        certified=False,
        equation="thm1.1a",
        message=f"max |mean| / SE = {worst_z:.3g} (threshold {CANONICAL_SE_THRESHOLD:g})",
        details={
            "probes": probes.tolist(),
            "means": means.tolist(),
            "standard_errors": se.tolist(),
        },
    )


def _log_moment_diagnostic(
    kernel: Kernel, dist: Distribution, options: CertifyOptions
) -> Dict:
    """Monte Carlo E h^2 / (log log(|h| v e^e))^(1+delta)."""
    n = max(options.mc_samples, MIN_MC_SAMPLES)
    x = sample_stream(dist, options.seed, STREAM_MC_X, n)
    y = sample_stream(dist, options.seed, STREAM_MC_Y, n)
    h = np.abs(evaluate_checked(kernel, x, y))
    floor = math.exp(math.e)
    with np.errstate(over="ignore"):
        terms = h * h / np.log(np.log(np.maximum(h, floor))) ** (1.0 + options.delta)
    return {
        "equation": "eq1.4",
        "delta": options.delta,
        "value": float(np.mean(terms)),
        "standard_error": float(np.std(terms, ddof=1) / math.sqrt(n)),
        "certified": False,
    }


def _cond_b_check(curve: TruncatedMomentCurve) -> ConditionCheck:
    """
    Passes when the ratio has levelled off: the top-third maximum may not
    exceed the middle-third maximum by more than GROWTH_TOLERANCE of it plus
    GROWTH_SE Monte Carlo standard errors of the middle-third level.
    """
    ratio = curve.ratio
    finite = math.isfinite(curve.limsup_estimate)
    status = CheckStatus.PASSED if finite else CheckStatus.FAILED
    message = (
        f"limsup E(h^2 ∧ u)/L_2 u ≈ {curve.limsup_estimate:.6g} "
        f"(grid to 10^{curve.log10_u[-1]:g})"
    )
    details: Dict = {}
    mid_start, top_start = ratio.size // 3, (2 * ratio.size) // 3
    if finite and top_start > mid_start:
        i_mid = mid_start + int(np.argmax(ratio[mid_start:top_start]))
        i_top = top_start + int(np.argmax(ratio[top_start:]))
        se = 0.0
        if curve.standard_errors is not None:
            ratio_se = curve.standard_errors / safe_log_log(curve.log10_u * LN10)
            se = float(ratio_se[i_mid])
        growth = float(ratio[i_top] - ratio[i_mid])
        margin = GROWTH_TOLERANCE * float(ratio[i_mid]) + GROWTH_SE * se
        details = {
            "middle_third_max": float(ratio[i_mid]),
            "top_third_max": float(ratio[i_top]),
            "growth": growth,
            "margin": margin,
        }
        if growth > margin:
            status = CheckStatus.FAILED
            message += f"; ratio still growing (+{growth:.6g} > {margin:.6g})"
    return ConditionCheck(
        name="cond_b",
        status=status,
        value=curve.limsup_estimate,
        certified=curve.method == "analytic",
        equation="eq1.2",
        message=message,
        details=details,
    )


def _cond_c_check(norm: OperatorNormEstimate, schur: float) -> ConditionCheck:
    """Fails on non-finite values, an infinite Schur bound or a wide bootstrap spread."""
    problems = []
    if not math.isfinite(norm.value):
        problems.append("estimate is not finite")
    ci = norm.bootstrap_ci
    if ci is not None and not all(math.isfinite(c) for c in ci):
        problems.append("bootstrap interval is unbounded")
    if not math.isfinite(schur):
        problems.append("Schur bound is infinite")
    spread = None
    if norm.bootstrap_se is not None and norm.value > 0 and math.isfinite(norm.value):
        spread = norm.bootstrap_se / norm.value
        if spread > NORM_SPREAD_LIMIT:
            problems.append(
                f"bootstrap SE is {spread:.0%} of the estimate (limit {NORM_SPREAD_LIMIT:.0%})"
            )
    message = f"||h||_(L2->L2) ≈ {norm.value:.6g} ({norm.method})"
    if problems:
        message += "; " + "; ".join(problems)
    return ConditionCheck(
        name="cond_c",
        status=CheckStatus.FAILED if problems else CheckStatus.PASSED,
        value=norm.value,
        certified=norm.method == "analytic",
        equation="eq1.3",
        message=message,
        details={
            "bootstrap_ci": list(ci) if ci else None,
            "relative_spread": spread,
            "schur": schur,
        },
    )


def certify(
    kernel: Kernel, dist: Distribution, options: Optional[CertifyOptions] = None
) -> ConditionReport:
    """
    Run every condition check for one kernel and law.

    Returns:
        ConditionReport with the canonical, cond_b and cond_c checks, the
        Schur bound, the truncation profile and diagnostics
    """
    options = options or CertifyOptions()
    logger.info(f"Certifying conditions for kernel={kernel.name}, dist={dist}")

    checks: Dict[str, ConditionCheck] = {}
    checks["canonical"] = _canonical_check(kernel, dist, options)

    curve = truncated_moment_curve(
        kernel,
        dist,
        mc_samples=options.mc_samples,
        seed=options.seed,
        log10_u_grid=options.log10_u_grid,
        force_monte_carlo=options.monte_carlo,
    )
    checks["cond_b"] = _cond_b_check(curve)

    norm = operator_norm(
        kernel,
        dist,
        m=options.opnorm_m,
        seed=options.seed,
        method="svd_empirical" if options.monte_carlo else "auto",
        bootstrap=options.bootstrap,
        workers=options.workers,
    )
    schur = schur_bound(kernel, dist, probe_m=options.probe_m, seed=options.seed)
    checks["cond_c"] = _cond_c_check(norm, schur)
    slack = 3.0 * (norm.bootstrap_se or 0.0)
    diagnostics: Dict = {
        "schur": {
            "equation": "lemma3.5",
            "value": schur,
            "certified": False,
            "dominates_operator_norm": bool(schur >= norm.value - slack - 1e-12),
        },
        "log_moment": _log_moment_diagnostic(kernel, dist, options),
    }

    profile = None
    if options.truncation_range is not None:
        profile = truncation_profile(
            kernel,
            dist,
            n_range=options.truncation_range,
            mc_samples=min(options.mc_samples, 20_000),
            seed=options.seed,
        )

    report = ConditionReport(
        kernel_name=kernel.name,
        distribution=str(dist),
        checks=checks,
        curve=curve,
        operator_norm=norm,
        schur=schur,
        truncation=profile,
        diagnostics=diagnostics,
    )
    for check in checks.values():
        log = logger.info if check.status != CheckStatus.FAILED else logger.warning
        log(f"  {check.name:<10} {check.status.value:<8} value={check.value:.6g}")
    return report


def summarize(report: ConditionReport) -> List[str]:
    """Human-readable summary lines of a report."""
    lines = [
        f"Kernel: {report.kernel_name}   Distribution: {report.distribution}",
        "-" * 60,
        f"{'Check':<12} {'Status':<9} {'Certified':<10} {'Value'}",
    ]
    for check in report.checks.values():
        lines.append(
            f"{check.name:<12} {check.status.value:<9} "
            f"{'yes' if check.certified else 'no':<10} {check.value:.6g}"
        )
    if report.schur is not None:
        lines.append(f"{'schur':<12} {'estimate':<9} {'no':<10} {report.schur:.6g}")
    lines.append("-" * 60)
    lines.append(f"Overall: {'PASS' if report.passed else 'FAIL'}")
    return lines
