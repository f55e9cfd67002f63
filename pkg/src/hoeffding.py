"""
Hoeffding projections and exact evaluation of the U-statistic sum variants.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from kernels import (
    STREAM_BACKGROUND,
    Distribution,
    Kernel,
    evaluate_checked,
    sample_stream,
)
from models import ConfigError, SumVariant

logger = logging.getLogger(__name__)

DEFAULT_BACKGROUND_M = 10_000
MIN_BACKGROUND_M = 100
COMPENSATED_THRESHOLD = 1 << 16
# Upper bound on kernel evaluations held in memory at once.
CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class ProjectionEstimate:
    """pi_1 h, pi_2 h and E h, either closed-form or from a fixed background sample."""

    kernel: Kernel
    mean_h: float
    pi1_func: Callable[[np.ndarray], np.ndarray]
    background_m: int
    se_scale: float
    analytic: bool
    background: Optional[np.ndarray] = None

    def pi1(self, x):
        out = np.asarray(self.pi1_func(np.asarray(x, dtype=float)), dtype=float)
        return float(out) if out.ndim == 0 else out

    def pi2(self, x, y):
        """h(x, y) - pi1(x) - pi1(y) - E h."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = (
            np.asarray(self.kernel.evaluate(x, y))
            - self.pi1_func(x)
            - self.pi1_func(y)
            - self.mean_h
        )
        return float(out) if np.ndim(out) == 0 else out

    def reconstruct(self, x, y):
        """pi2 + pi1(x) + pi1(y) + E h, which must give back h(x, y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = self.pi2(x, y) + self.pi1_func(x) + self.pi1_func(y) + self.mean_h
        return float(out) if np.ndim(out) == 0 else out


def _conditional_mean_fn(kernel: Kernel, background: np.ndarray) -> Callable:
    """x -> (1/m) sum_j h(x, Y_j) over the background sample."""
    if kernel.separable is not None:
        sep = kernel.separable
        centroid = sep.weights * sep.features(background).mean(axis=0)

        def fast(x):
            x = np.asarray(x, dtype=float)
            return (sep.features(x.ravel()) @ centroid).reshape(x.shape)

        return fast

    m = background.size
    rows = max(CHUNK_CELLS // max(m, 1), 1)

    def direct(x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.size)
        for lo in range(0, flat.size, rows):
            block = evaluate_checked(kernel, flat[lo : lo + rows, None], background[None, :])
            out[lo : lo + rows] = block.mean(axis=1)
        return out.reshape(x.shape)

    return direct


def project(
    kernel: Kernel,
    dist: Distribution,
    m: int = DEFAULT_BACKGROUND_M,
    seed: int = 0,
    force_empirical: bool = False,
) -> ProjectionEstimate:
    """
    Hoeffding decomposition h = pi2 + pi1(x) + pi1(y) + E h.

    Closed-form projections are used when the kernel carries its conditional
    mean under ``dist``; otherwise pi1 is the background average
    (1/m) sum_j h(x, Y_j) minus the background mean of h.

    Args:
        kernel: Kernel to decompose
        dist: Law of X and Y
        m: Background sample size (empirical mode)
        seed: Seed of the background stream
        force_empirical: Ignore closed forms

    Returns:
        ProjectionEstimate

    Raises:
        ConfigError: m below the empirical minimum
        NumericalError: Non-finite kernel values on the background sample
    """
    analytic = kernel.analytic
    same_law = kernel.distribution is None or kernel.distribution == dist
    if (
        not force_empirical
        and same_law
        and analytic is not None
        and analytic.conditional_mean is not None
        and analytic.mean_h is not None
    ):
        cond = analytic.conditional_mean
        mean_h = float(analytic.mean_h)
        return ProjectionEstimate(
            kernel=kernel,
            mean_h=mean_h,
            pi1_func=lambda x: np.asarray(cond(x), dtype=float) - mean_h,
            background_m=0,
            se_scale=0.0,
            analytic=True,
        )

    if m < MIN_BACKGROUND_M:
        raise ConfigError(
            f"Empirical projection needs m >= {MIN_BACKGROUND_M}, got {m}"
        )
    background = sample_stream(dist, seed, STREAM_BACKGROUND, m)
    # Surface non-finite values with the offending point before building pi1.
    probe = min(m, 256)
    evaluate_checked(kernel, background[:probe, None], background[None, :])
    cond = _conditional_mean_fn(kernel, background)
    raw = cond(background)
    mean_h = float(np.mean(raw))
    logger.debug(
        f"Empirical projection of {kernel.name}: m={m}, mean_h={mean_h:.6g}"
    )
    return ProjectionEstimate(
        kernel=kernel,
        mean_h=mean_h,
        pi1_func=lambda x: cond(x) - mean_h,
        background_m=m,
        se_scale=1.0 / math.sqrt(m),
        analytic=False,
        background=background,
    )


def _accumulate(parts, n: int) -> float:
    if n >= COMPENSATED_THRESHOLD:
        return math.fsum(parts)
    return float(sum(parts))


def _check_lengths(
    variant: SumVariant,
    x: np.ndarray,
    y: Optional[np.ndarray],
    eps: Optional[np.ndarray],
    eps2: Optional[np.ndarray],
) -> None:
    n = x.size
    if variant.decoupled:
        if y is None or y.size != n:
            raise ConfigError(
                f"{variant.value} needs y of length {n}, got "
                f"{None if y is None else y.size}"
            )
    if variant.randomized:
        if eps is None or eps.size != n:
            raise ConfigError(f"{variant.value} needs eps of length {n}")
    if variant is SumVariant.DECOUPLED_RANDOMIZED:
        if eps2 is None or eps2.size != n:
            raise ConfigError(f"{variant.value} needs eps2 of length {n}")


def _as_vec(v) -> Optional[np.ndarray]:
    return None if v is None else np.asarray(v, dtype=float).ravel()


def sum_exact(
    kernel: Kernel,
    variant: SumVariant,
    x,
    y=None,
    eps=None,
    eps2=None,
) -> float:
    """
    Direct O(n^2) evaluation of a sum variant.

    plain_offdiag and randomized sum over i != j; the decoupled variants sum
    over all (i, j), diagonal included.
    """
    variant = SumVariant.parse(variant)
    x = np.asarray(x, dtype=float).ravel()
    y, eps, eps2 = _as_vec(y), _as_vec(eps), _as_vec(eps2)
    _check_lengths(variant, x, y, eps, eps2)
    n = x.size
    if n == 0:
        return 0.0

    left_w = eps if variant.randomized else np.ones(n)
    if variant.decoupled:
        right = y
        right_w = eps2 if variant is SumVariant.DECOUPLED_RANDOMIZED else np.ones(n)
    else:
        right = x
        right_w = left_w

    rows = max(CHUNK_CELLS // n, 1)
    parts = []
    for lo in range(0, n, rows):
        hi = min(lo + rows, n)
        block = evaluate_checked(kernel, x[lo:hi, None], right[None, :])
        weighted = (left_w[lo:hi, None] * block) * right_w[None, :]
        total = float(np.sum(weighted))
        if not variant.decoupled:
            diag = weighted[np.arange(hi - lo), np.arange(lo, hi)]
            total -= float(np.sum(diag))
        parts.append(total)
    return _accumulate(parts, n)


def sum_separable(
    kernel: Kernel,
    variant: SumVariant,
    x,
    y=None,
    eps=None,
    eps2=None,
) -> float:
    """
    O(rank * n) evaluation through per-rank partial sums.

    plain: sum_m lambda_m [(sum_i phi_m(x_i))^2 - sum_i phi_m(x_i)^2];
    decoupled_randomized: sum_m lambda_m (sum_i eps_i phi_m(x_i))(sum_j eps2_j phi_m(y_j)).
    """
    if kernel.separable is None:
        raise ConfigError(f"Kernel {kernel.name} has no separable expansion")
    acc = SeparableAccumulator(kernel, variant)
    acc.extend_batch(x, y, eps, eps2)
    return acc.value


def _block_total(f: np.ndarray, compensated: bool) -> np.ndarray:
    if compensated:
        return np.array([math.fsum(col) for col in f.T])
    return f.sum(axis=0)


def _neumaier_add(total: np.ndarray, comp: np.ndarray, term: np.ndarray):
    """Add term to total, folding the rounding error into comp."""
    with np.errstate(over="ignore", invalid="ignore"):
        new = total + term
        comp = comp + np.where(
            np.abs(total) >= np.abs(term), (total - new) + term, (term - new) + total
        )
    return new, comp


class SeparableAccumulator:
    """
    Running value of a sum variant, extendable one sample at a time.

    Holds rank-many partial sums, each with a Neumaier compensation term;
    past COMPENSATED_THRESHOLD samples the per-batch totals are taken with
    math.fsum. Single owner, not thread safe.
    """

    def __init__(self, kernel: Kernel, variant: SumVariant):
        if kernel.separable is None:
            raise ConfigError(f"Kernel {kernel.name} has no separable expansion")
        self.kernel = kernel
        self.variant = SumVariant.parse(variant)
        self.weights = kernel.separable.weights
        rank = kernel.separable.rank
        self.n = 0
        self._sums = {key: np.zeros(rank) for key in ("x", "y", "sq")}
        self._comp = {key: np.zeros(rank) for key in ("x", "y", "sq")}

    def _partial(self, key: str) -> np.ndarray:
        return self._sums[key] + self._comp[key]

    @property
    def sum_x(self) -> np.ndarray:
        return self._partial("x")

    @property
    def sum_y(self) -> np.ndarray:
        return self._partial("y")

    @property
    def sum_sq(self) -> np.ndarray:
        return self._partial("sq")

    def _value_of(self, sx: np.ndarray, sy: np.ndarray, sq: np.ndarray) -> np.ndarray:
        if self.variant.decoupled:
            return (sx * sy) @ self.weights
        return (sx * sx - sq) @ self.weights

    @property
    def value(self) -> float:
        if self.n == 0:
            return 0.0
        return float(self._value_of(self.sum_x, self.sum_y, self.sum_sq))

    def _carry(self, key: str, f: np.ndarray, compensated: bool) -> None:
        self._sums[key], self._comp[key] = _neumaier_add(
            self._sums[key], self._comp[key], _block_total(f, compensated)
        )

    def extend(self, x: float, y: float = None, e: float = 1.0, e2: float = 1.0) -> float:
        """Append one sample in O(rank); returns the new value."""
        return float(
            self.extend_batch(
                [x],
                None if y is None else [y],
                [e] if self.variant.randomized else None,
                [e2] if self.variant is SumVariant.DECOUPLED_RANDOMIZED else None,
                running=True,
            )[-1]
        )

    def extend_batch(
        self, x, y=None, eps=None, eps2=None, running: bool = False
    ) -> Optional[np.ndarray]:
        """
        Append a batch of samples.

        Args:
            running: Also return the value after each appended sample

        Returns:
            Running values (length of the batch) when ``running`` is set
        """
        x = np.asarray(x, dtype=float).ravel()
        y, eps, eps2 = _as_vec(y), _as_vec(eps), _as_vec(eps2)
        _check_lengths(self.variant, x, y, eps, eps2)
        if x.size == 0:
            return np.zeros(0) if running else None
        sep = self.kernel.separable
        fx = sep.features(x)
        if self.variant.randomized:
            fx = fx * eps[:, None]
        fy = None
        if self.variant.decoupled:
            fy = sep.features(y)
            if self.variant is SumVariant.DECOUPLED_RANDOMIZED:
                fy = fy * eps2[:, None]

        out = None
        if running:
            cx = self.sum_x + np.cumsum(fx, axis=0)
            if self.variant.decoupled:
                cy = self.sum_y + np.cumsum(fy, axis=0)
                out = (cx * cy) @ self.weights
            else:
                cq = self.sum_sq + np.cumsum(fx * fx, axis=0)
                out = (cx * cx - cq) @ self.weights
        compensated = self.n + x.size >= COMPENSATED_THRESHOLD
        self._carry("x", fx, compensated)
        if self.variant.decoupled:
            self._carry("y", fy, compensated)
        else:
            self._carry("sq", fx * fx, compensated)
        self.n += x.size
        return out
