"""
The t-parameterized chaos norm

    |||A|||_t = sup { b^T A c : sum b^2 <= t, sum c^2 <= t, |b_i|, |c_j| <= 1 }

computed by alternating exact maximization over b and c from many starts.
The bilinear problem is non-convex, so the result is a certified lower bound
(feasible b, c reproducing the value); small instances are checked against a
brute-force grid oracle.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Tuple, Union

import numpy as np
from scipy.optimize import bisect

from kernels import STREAM_RESTART, rng_for
from models import ChaosMatrix, ChaosNormResult, ConfigError

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 16
MAX_ITERATIONS = 1000
RELATIVE_TOLERANCE = 1e-10
BISECTION_TOLERANCE = 1e-12
# Enumerate every sign pattern of the shorter side up to this many starts.
MAX_SIGN_STARTS = 64
ORACLE_MAX_CELLS = 16
ORACLE_MAX_STEP = 0.1


def _ball_mass(a: np.ndarray, lam: float) -> float:
    return float(np.sum(np.minimum(1.0, a / lam) ** 2))


def _multiplier(a: np.ndarray, t: float) -> float:
    """lambda > 0 with sum min(1, a_i / lambda)^2 = t, given more than t nonzeros."""
    desc = np.sort(a[a > 0])[::-1]
    tail_sq = np.concatenate((np.cumsum((desc**2)[::-1])[::-1], [0.0]))
    for p in range(0, int(math.ceil(t))):
        if t - p <= 0:
            break
        lam = math.sqrt(tail_sq[p] / (t - p))
        upper_ok = p == 0 or desc[p - 1] >= lam
        if upper_ok and desc[p] <= lam:
            return lam
    # rounding left no consistent segment; fall back to bisection
    lo, hi = float(desc[-1]), float(desc[0])
    while _ball_mass(a, hi) > t:
        hi *= 2.0
    return bisect(
        lambda lam: _ball_mass(a, lam) - t, lo, hi, xtol=BISECTION_TOLERANCE * hi
    )


def box_ball_linear_max(v, t: float) -> Tuple[np.ndarray, float]:
    """
    Maximize <v, b> over {sum b^2 <= t, |b_i| <= 1}.

    The maximizer is b_i = sign(v_i) min(1, |v_i| / lambda) with lambda = 0
    when the all-clipped point is feasible. Entries with v_i = 0 get b_i = 0.

    Args:
        v: Linear objective
        t: Squared radius of the ball

    Returns:
        (b, value)
    """
    if not t > 0:
        raise ConfigError(f"t must be positive, got {t}")
    v = np.asarray(v, dtype=float).ravel()
    a = np.abs(v)
    sign = np.sign(v)
    nonzero = int(np.count_nonzero(a))
    if nonzero == 0:
        return np.zeros_like(v), 0.0
    if nonzero <= t:
        b = sign.copy()
    else:
        lam = _multiplier(a, t)
        b = sign * np.minimum(1.0, a / lam)
        mass = float(np.dot(b, b))
        if mass > t:
            b *= math.sqrt(t / mass)
    return b, float(np.dot(v, b))


def _as_matrix(A: Union[ChaosMatrix, np.ndarray, list]) -> ChaosMatrix:
    return A if isinstance(A, ChaosMatrix) else ChaosMatrix(np.asarray(A, dtype=float))


def _ascend(a: np.ndarray, c: np.ndarray, t: float) -> Tuple[float, np.ndarray, np.ndarray, bool, int]:
    """Alternate b <- argmax(Ac), c <- argmax(A^T b) until the value settles."""
    c, _ = box_ball_linear_max(c, t)
    b, value = box_ball_linear_max(a @ c, t)
    for iteration in range(1, MAX_ITERATIONS + 1):
        c, _ = box_ball_linear_max(a.T @ b, t)
        b, new_value = box_ball_linear_max(a @ c, t)
        if abs(new_value - value) <= RELATIVE_TOLERANCE * max(abs(new_value), 1e-300):
            return new_value, b, c, True, iteration
        value = new_value
    return value, b, c, False, MAX_ITERATIONS


def _starting_points(a: np.ndarray, restarts: int, seed: int) -> List[np.ndarray]:
    k, l = a.shape
    starts: List[np.ndarray] = []
    _, _, vt = np.linalg.svd(a)
    starts.append(vt[0])
    starts.append(np.sign(a[int(np.argmax(np.abs(a).sum(axis=1)))]))
    col = np.sign(a[:, int(np.argmax(np.abs(a).sum(axis=0)))])
    starts.append(a.T @ col)
    for r in range(max(restarts - len(starts), 0)):
        z = rng_for(seed, STREAM_RESTART, r).standard_normal(l)
        starts.append(z / np.linalg.norm(z))
    if 2 ** min(k, l) <= MAX_SIGN_STARTS:
        if l <= k:
            for pattern in itertools.product((-1.0, 1.0), repeat=l):
                starts.append(np.array(pattern))
        else:
            for pattern in itertools.product((-1.0, 1.0), repeat=k):
                starts.append(a.T @ np.array(pattern))
    return [s for s in starts if np.any(s != 0)] or [np.ones(l)]


def chaos_norm(
    A: Union[ChaosMatrix, np.ndarray, list],
    t: float,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    workers: int = 1,
) -> ChaosNormResult:
    """
    Multi-start alternating maximization of b^T A c over the box-ball set.

    Starts: leading right singular vector, sign patterns of the dominant row
    and column, ``restarts`` random unit vectors and, for small matrices,
    every sign pattern of the shorter side.

    Args:
        A: Coefficient matrix
        t: Squared radius
        restarts: Minimum number of starting points
        seed: Seed of the random starts
        workers: Threads used for the starts

    Returns:
        ChaosNormResult with the best feasible (b, c)
    """
    if not t > 0:
        raise ConfigError(f"t must be positive, got {t}")
    if restarts < 1:
        raise ConfigError(f"restarts must be >= 1, got {restarts}")
    matrix = _as_matrix(A)
    a = matrix.entries
    k, l = a.shape
    if not np.any(a):
        return ChaosNormResult(0.0, np.zeros(k), np.zeros(l), t, 1, True)

    starts = _starting_points(a, restarts, seed)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda c0: _ascend(a, c0, t), starts))
    else:
        runs = [_ascend(a, c0, t) for c0 in starts]

    best = max(range(len(runs)), key=lambda i: (runs[i][0], -i))
    _, b, c, converged, iterations = runs[best]
    value = float(b @ a @ c)
    if not converged:
        logger.warning(
            f"Chaos norm ascent hit {MAX_ITERATIONS} iterations (t={t}, size={k}x{l})"
        )
    logger.debug(
        f"Chaos norm {k}x{l}, t={t}: value={value:.12g} from {len(starts)} starts"
    )
    return ChaosNormResult(
        value=value,
        b=b,
        c=c,
        t=t,
        restarts_used=len(starts),
        converged=converged,
        iterations=iterations,
    )


def _box_ball_values_bisect(a: np.ndarray, t: float, iterations: int = 100) -> np.ndarray:
    hi = np.maximum(a.max(axis=1), 1e-300) * max(1.0, math.sqrt(a.shape[1] / t))
    lo = np.zeros_like(hi)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        mass = np.sum(np.minimum(1.0, a / mid[:, None]) ** 2, axis=1)
        over = mass > t
        lo = np.where(over, mid, lo)
        hi = np.where(over, hi, mid)
    return np.sum(a * np.minimum(1.0, a / hi[:, None]), axis=1)


def _box_ball_values(V: np.ndarray, t: float) -> np.ndarray:
    """Row-wise max of <v, c> over the box-ball set, by vectorized water-filling."""
    a = -np.sort(-np.abs(V), axis=1)
    rows, width = a.shape
    tail_sq = np.cumsum((a * a)[:, ::-1], axis=1)[:, ::-1]
    prefix = np.concatenate((np.zeros((rows, 1)), np.cumsum(a, axis=1)), axis=1)
    clipped_ok = np.count_nonzero(a, axis=1) <= t
    best = np.full(rows, np.nan)
    # p leading entries clipped at 1, the rest scaled by 1 / lambda
    for p in range(min(width, int(math.ceil(t)))):
        lam = np.sqrt(tail_sq[:, p] / (t - p))
        valid = a[:, p] <= lam * (1.0 + 1e-12)
        if p > 0:
            valid &= a[:, p - 1] >= lam * (1.0 - 1e-12)
        value = prefix[:, p] + np.sqrt(tail_sq[:, p] * (t - p))
        best = np.where(np.isnan(best) & valid, value, best)
    missing = np.isnan(best) & ~clipped_ok
    if np.any(missing):
        best[missing] = _box_ball_values_bisect(a[missing], t)
    return np.where(clipped_ok, prefix[:, -1], best)


def chaos_norm_oracle(
    A: Union[ChaosMatrix, np.ndarray, list], t: float, grid_step: float = 0.1
) -> float:
    """
    Brute-force lower bound on |||A|||_t for small matrices.

    Enumerates b on a grid of the box for the shorter side, pulls points
    outside the ball back onto it radially, and maximizes over the other
    side exactly.
    """
    matrix = _as_matrix(A)
    a = matrix.entries
    k, l = a.shape
    if k * l > ORACLE_MAX_CELLS:
        raise ConfigError(
            f"Oracle instance too large: {k}x{l} exceeds {ORACLE_MAX_CELLS} cells"
        )
    if not 0 < grid_step <= ORACLE_MAX_STEP:
        raise ConfigError(f"grid_step must lie in (0, {ORACLE_MAX_STEP}]")
    if not t > 0:
        raise ConfigError(f"t must be positive, got {t}")
    if l < k:
        a = a.T
        k, l = l, k
    steps = int(round(2.0 / grid_step))
    axis = np.linspace(-1.0, 1.0, steps + 1)
    grid = np.array(np.meshgrid(*([axis] * k), indexing="ij")).reshape(k, -1).T
    mass = np.sum(grid**2, axis=1)
    scale = np.where(mass > t, np.sqrt(t / np.maximum(mass, 1e-300)), 1.0)
    grid = grid * scale[:, None]
    return float(np.max(_box_ball_values(grid @ a, t)))
