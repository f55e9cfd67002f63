"""
Kernels, input distributions and the analytic kernel catalog.

Every random draw in the laboratory goes through ``sample_stream``: the value
at position ``index`` of stream ``stream_id`` under ``seed`` is a pure
function of that triple. Streams are cut into fixed-size blocks, each block
seeded from its own Philox key, so any prefix or slice can be regenerated
independently of how work was split across workers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import hermite_e, legendre
from numpy.polynomial import polynomial as npoly
from scipy import stats

from models import ConfigError, NumericalError

logger = logging.getLogger(__name__)

STREAM_BLOCK = 1 << 16

# Stream ids shared by all modules; distinct ids give independent streams.
STREAM_X = 0
STREAM_Y = 1
STREAM_EPS = 2
STREAM_EPS_TILDE = 3
STREAM_BACKGROUND = 10
STREAM_BACKGROUND_PAIR = 11
STREAM_OPNORM_X = 20
STREAM_OPNORM_Y = 21
STREAM_BOOTSTRAP = 22
STREAM_MC_X = 30
STREAM_MC_Y = 31
STREAM_PROBE = 32
STREAM_GRAM = 33
STREAM_RESTART = 40
STREAM_LATALA = 50
STREAM_LATALA_TILDE = 51

# Smallest block width kept in the evaluable layout.
MIN_BLOCK_WIDTH = 1e-300
# Largest log(u) for which analytic tail blocks are retained.
ANALYTIC_LOG_U_HORIZON = 1.0e4
MAX_BLOCKS = 200_000

DISTRIBUTION_NAMES = ("rademacher", "uniform01", "gaussian01", "discrete")

ArrayFunc = Callable[[np.ndarray], np.ndarray]
KernelFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Distribution:
    """A real-valued law for the i.i.d. inputs."""

    name: str
    values: Tuple[float, ...] = ()
    weights: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.name not in DISTRIBUTION_NAMES:
            raise ConfigError(
                f"Unknown distribution '{self.name}' "
                f"(expected one of: {', '.join(DISTRIBUTION_NAMES)})"
            )
        if self.name == "discrete":
            values = np.asarray(self.values, dtype=float)
            weights = np.asarray(self.weights, dtype=float)
            if values.size == 0 or values.shape != weights.shape:
                raise ConfigError(
                    "Discrete distribution needs equally long, non-empty "
                    "values and weights"
                )
            if not np.all(np.isfinite(values)):
                raise ConfigError("Discrete distribution values must be finite")
            if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
                raise ConfigError(
                    f"Discrete weights must be nonnegative and sum to 1 "
                    f"(sum={weights.sum()!r})"
                )
            object.__setattr__(self, "values", tuple(float(v) for v in values))
            object.__setattr__(self, "weights", tuple(float(w) for w in weights))

    @classmethod
    def parse(cls, spec: Union[str, Mapping, "Distribution"]) -> "Distribution":
        """Build a distribution from its name or a ``{"name": ...}`` mapping."""
        if isinstance(spec, Distribution):
            return spec
        if isinstance(spec, str):
            return cls(spec.strip().lower())
        if isinstance(spec, Mapping):
            name = str(spec.get("name", "")).lower()
            return cls(
                name,
                tuple(spec.get("values", ())),
                tuple(spec.get("weights", ())),
            )
        raise ConfigError(f"Cannot parse distribution spec: {spec!r}")

    def to_spec(self) -> Union[str, Dict]:
        if self.name == "discrete":
            return {
                "name": "discrete",
                "values": list(self.values),
                "weights": list(self.weights),
            }
        return self.name

    @property
    def support(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """(values, weights) for laws with finite support, else None."""
        if self.name == "rademacher":
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        if self.name == "discrete":
            return np.asarray(self.values), np.asarray(self.weights)
        return None

    @property
    def mean(self) -> float:
        if self.name == "uniform01":
            return 0.5
        support = self.support
        if support is None:
            return 0.0
        return float(np.dot(support[0], support[1]))

    @property
    def second_moment(self) -> float:
        if self.name == "uniform01":
            return 1.0 / 3.0
        if self.name == "gaussian01":
            return 1.0
        values, weights = self.support  # type: ignore[misc]
        return float(np.dot(values**2, weights))

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    def ppf(self, q: np.ndarray) -> np.ndarray:
        """Quantile function."""
        q = np.asarray(q, dtype=float)
        if self.name == "uniform01":
            return q.copy()
        if self.name == "gaussian01":
            return stats.norm.ppf(q)
        values, weights = self.support  # type: ignore[misc]
        order = np.argsort(values)
        cdf = np.cumsum(weights[order])
        idx = np.minimum(np.searchsorted(cdf, q, side="left"), len(cdf) - 1)
        return values[order][idx]

    def quantile_probes(self, count: int = 20) -> np.ndarray:
        return self.ppf((np.arange(count) + 0.5) / count)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` values from a generator (one block of a stream)."""
        if self.name == "rademacher":
            return np.where(rng.random(size) < 0.5, -1.0, 1.0)
        if self.name == "uniform01":
            return rng.random(size)
        if self.name == "gaussian01":
            return rng.standard_normal(size)
        values, weights = self.support  # type: ignore[misc]
        cdf = np.cumsum(weights)
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        return values[np.minimum(idx, len(values) - 1)]

    def __str__(self) -> str:
        return self.name


RADEMACHER = Distribution("rademacher")
UNIFORM01 = Distribution("uniform01")
GAUSSIAN01 = Distribution("gaussian01")


def _block_generator(seed: int, stream_id: int, block: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id), block))
    return np.random.Generator(np.random.Philox(seq))


def sample_stream(
    dist: Distribution, seed: int, stream_id: int, n: int, start: int = 0
) -> np.ndarray:
    """
    Return positions ``start .. start+n-1`` of the stream (seed, stream_id).

    Args:
        dist: Law of the values
        seed: Non-negative run seed
        stream_id: Stream identifier; distinct ids are independent
        n: Number of values
        start: Index of the first value

    Returns:
        Float array of length n
    """
    if n < 0 or start < 0:
        raise ConfigError(f"Stream slice must be non-negative (start={start}, n={n})")
    if seed < 0:
        raise ConfigError(f"Seed must be non-negative, got {seed}")
    out = np.empty(n, dtype=float)
    if n == 0:
        return out
    first_block = start // STREAM_BLOCK
    last_block = (start + n - 1) // STREAM_BLOCK
    pos = 0
    for block in range(first_block, last_block + 1):
        values = dist.draw(_block_generator(seed, stream_id, block), STREAM_BLOCK)
        lo = max(start - block * STREAM_BLOCK, 0)
        hi = min(start + n - block * STREAM_BLOCK, STREAM_BLOCK)
        out[pos : pos + hi - lo] = values[lo:hi]
        pos += hi - lo
    return out


def sign_stream(seed: int, stream_id: int, n: int, start: int = 0) -> np.ndarray:
    """Rademacher signs from a stream."""
    return sample_stream(RADEMACHER, seed, stream_id, n, start)


def rng_for(seed: int, stream_id: int, index: int = 0) -> np.random.Generator:
    """A generator keyed by (seed, stream, index) for non-stream draws."""
    return _block_generator(seed, stream_id, index)


def stratified_sample(
    dist: Distribution, seed: int, stream_id: int, n: int
) -> np.ndarray:
    """One draw from each of n equal-probability strata of the law, in stratum order."""
    if n < 1:
        raise ConfigError(f"Stratified sample needs n >= 1, got {n}")
    offsets = sample_stream(UNIFORM01, seed, stream_id, n)
    q = (np.arange(n) + offsets) / n
    tiny = np.finfo(float).tiny
    return dist.ppf(np.clip(q, tiny, 1.0 - np.finfo(float).epsneg))


# ---------------------------------------------------------------------------
# Block kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockKernelSpec:
    """
    Coefficients of a block kernel sum_n (a_n / b_n) I_n(x) I_n(y).

    I_n is +1 on the left half and -1 on the right half of an interval of
    length b_n; intervals are packed left to right from 0. Blocks too narrow
    to lay out in double precision are kept only as (tail_a, tail_log_b) for
    closed-form moments.
    """

    a: np.ndarray
    b: np.ndarray
    starts: np.ndarray
    tail_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_log_b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    truncation_index: Optional[int] = None
    source: Dict = field(default_factory=dict)

    @classmethod
    def from_sequences(
        cls,
        a: Sequence[float],
        b: Sequence[float],
        tail_a: Sequence[float] = (),
        tail_log_b: Sequence[float] = (),
        truncation_index: Optional[int] = None,
        source: Optional[Dict] = None,
    ) -> "BlockKernelSpec":
        a_arr = np.asarray(a, dtype=float).ravel()
        b_arr = np.asarray(b, dtype=float).ravel()
        if a_arr.shape != b_arr.shape:
            raise ConfigError(
                f"Block sequences differ in length ({a_arr.size} vs {b_arr.size})"
            )
        if not (np.all(np.isfinite(a_arr)) and np.all(np.isfinite(b_arr))):
            raise ConfigError("Block sequences must be finite")
        if np.any(b_arr <= 0):
            raise ConfigError("Block widths b_n must be strictly positive")
        total = math.fsum(b_arr.tolist())
        if total > 1.0 + 1e-12:
            raise ConfigError(
                f"Block widths sum to {total:.6g} > 1; supports cannot be packed "
                "into [0, 1]"
            )
        starts = np.concatenate(([0.0], np.cumsum(b_arr)[:-1]))
        for arr in (a_arr, b_arr, starts):
            arr.setflags(write=False)
        return cls(
            a=a_arr,
            b=b_arr,
            starts=starts,
            tail_a=np.asarray(tail_a, dtype=float),
            tail_log_b=np.asarray(tail_log_b, dtype=float),
            truncation_index=truncation_index,
            source=dict(source or {"a": a_arr.tolist(), "b": b_arr.tolist()}),
        )

    @property
    def count(self) -> int:
        return int(self.a.size)

    @property
    def ends(self) -> np.ndarray:
        return self.starts + self.b

    @property
    def all_a(self) -> np.ndarray:
        return np.concatenate((self.a, self.tail_a))

    @property
    def all_log_b(self) -> np.ndarray:
        return np.concatenate((np.log(self.b), self.tail_log_b))

    def locate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Block index and sign of I_n at each point.

        Returns:
            (index, sign) with index -1 and sign 0 outside every support
        """
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.starts, x, side="right") - 1
        safe = np.clip(idx, 0, max(self.count - 1, 0))
        if self.count == 0:
            return np.full(x.shape, -1), np.zeros(x.shape)
        inside = (idx >= 0) & (x < self.ends[safe])
        mid = self.starts[safe] + 0.5 * self.b[safe]
        sign = np.where(x < mid, 1.0, -1.0)
        return np.where(inside, idx, -1), np.where(inside, sign, 0.0)

    def indicator(self, n: int, x: np.ndarray) -> np.ndarray:
        """I_n(x) for the n-th block (0-based)."""
        idx, sign = self.locate(x)
        return np.where(idx == n, sign, 0.0)

    def scaled(self, lam: float) -> "BlockKernelSpec":
        """Same layout with every a_n multiplied by lam."""
        return BlockKernelSpec.from_sequences(
            self.a * lam,
            self.b,
            self.tail_a * lam,
            self.tail_log_b,
            truncation_index=self.truncation_index,
            source=self.source,
        )


def block_kernel_eval(spec: BlockKernelSpec, x, y):
    """
    Evaluate the block kernel at (x, y); broadcasts over arrays.

    Points in different blocks, or outside all supports, evaluate to 0.
    """
    xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    ix, sx = spec.locate(xb)
    iy, sy = spec.locate(yb)
    same = (ix == iy) & (ix >= 0)
    safe = np.clip(ix, 0, max(spec.count - 1, 0))
    if spec.count == 0:
        coef = np.zeros(xb.shape)
    else:
        coef = spec.a[safe] / spec.b[safe]
    out = np.where(same, coef * (sx * sy), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def double_exponential_blocks(
    level: float, limsup: float, start: int = 1
) -> BlockKernelSpec:
    """a_n = level, b_n = exp(-exp(level^2 n / limsup)) for n >= start."""
    if limsup <= 0:
        raise ConfigError(f"limsup must be positive, got {limsup}")
    if level == 0:
        return BlockKernelSpec.from_sequences(
            [], [], source={"sequence": "double_exponential", "level": 0.0}
        )
    rate = level * level / limsup
    a: List[float] = []
    b: List[float] = []
    tail_a: List[float] = []
    tail_log_b: List[float] = []
    truncation_index: Optional[int] = None
    n = start
    log_level = math.log(abs(level))
    while True:
        exponent = rate * n
        log_b = -math.exp(exponent) if exponent < 700 else -math.inf
        threshold = 2.0 * (log_level - log_b)
        if threshold > ANALYTIC_LOG_U_HORIZON:
            break
        if log_b >= math.log(MIN_BLOCK_WIDTH) and truncation_index is None:
            a.append(level)
            b.append(math.exp(log_b))
        else:
            if truncation_index is None:
                truncation_index = len(a)
            tail_a.append(level)
            tail_log_b.append(log_b)
        n += 1
        if n - start > MAX_BLOCKS:
            raise ConfigError("Block sequence does not decay fast enough")
    return BlockKernelSpec.from_sequences(
        a,
        b,
        tail_a,
        tail_log_b,
        truncation_index=truncation_index,
        source={
            "sequence": "double_exponential",
            "level": level,
            "limsup": limsup,
            "start": start,
        },
    )


def harmonic_blocks(start: int = 1, count: int = 40) -> BlockKernelSpec:
    """a_n = n^{-1/2}, b_n = 2^{-n} for start <= n < start + count (plus analytic tail)."""
    if start < 1 or count < 1:
        raise ConfigError("Harmonic blocks need start >= 1 and count >= 1")
    n = np.arange(start, start + count, dtype=float)
    tail_n = []
    m = start + count
    while -math.log(m) + 2.0 * m * math.log(2.0) <= ANALYTIC_LOG_U_HORIZON:
        tail_n.append(m)
        m += 1
    tail = np.asarray(tail_n, dtype=float)
    return BlockKernelSpec.from_sequences(
        1.0 / np.sqrt(n),
        np.exp2(-n),
        1.0 / np.sqrt(tail),
        -tail * math.log(2.0),
        truncation_index=count if tail.size else None,
        source={"sequence": "harmonic", "start": start, "count": count},
    )


def block_log_second_moment(spec: BlockKernelSpec, log_u: np.ndarray) -> np.ndarray:
    """
    E(h^2 ∧ u) for a block kernel, as a function of log u.

    Block n contributes a_n^2 once (a_n/b_n)^2 <= u and u b_n^2 before.
    """
    log_u = np.atleast_1d(np.asarray(log_u, dtype=float))
    a = spec.all_a
    log_b = spec.all_log_b
    keep = a != 0
    a, log_b = a[keep], log_b[keep]
    if a.size == 0:
        return np.zeros_like(log_u)
    thresholds = 2.0 * (np.log(np.abs(a)) - log_b)
    order = np.argsort(thresholds)
    thresholds, a, log_b = thresholds[order], a[order], log_b[order]
    prefix_a2 = np.concatenate(([0.0], np.cumsum(a * a)))
    # suffix log-sum-exp of 2 log b over blocks still above the level
    suffix = np.concatenate(
        (np.logaddexp.accumulate((2.0 * log_b)[::-1])[::-1], [-np.inf])
    )
    k = np.searchsorted(thresholds, log_u, side="right")
    with np.errstate(over="ignore"):
        capped = np.exp(np.minimum(log_u + suffix[k], 709.0))
    capped = np.where(np.isneginf(suffix[k]), 0.0, capped)
    return prefix_a2[k] + capped


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparableExpansion:
    """h(x, y) = sum_m weights[m] phi_m(x) phi_m(y)."""

    weights: np.ndarray
    phis: Tuple[ArrayFunc, ...]
    feature_matrix: Optional[ArrayFunc] = None
    orthonormal: bool = False

    @property
    def rank(self) -> int:
        return int(self.weights.size)

    @property
    def terms(self) -> List[Tuple[float, ArrayFunc]]:
        return list(zip(self.weights.tolist(), self.phis))

    def features(self, x: np.ndarray) -> np.ndarray:
        """Matrix F with F[i, m] = phi_m(x_i)."""
        x = np.asarray(x, dtype=float).ravel()
        if self.feature_matrix is not None:
            return self.feature_matrix(x)
        if self.rank == 0:
            return np.zeros((x.size, 0))
        return np.column_stack([np.broadcast_to(phi(x), x.shape) for phi in self.phis])

    def evaluate(self, x, y) -> np.ndarray:
        xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        fx = self.features(xb.ravel())
        fy = self.features(yb.ravel())
        return ((fx * fy) @ self.weights).reshape(xb.shape)

    def scaled(self, lam: float) -> "SeparableExpansion":
        return replace(self, weights=self.weights * lam)


@dataclass(frozen=True)
class KernelAnalytics:
    """Closed-form facts about a kernel under its reference distribution."""

    mean_h: Optional[float] = None
    operator_norm: Optional[float] = None
    conditional_mean: Optional[ArrayFunc] = None
    log_second_moment_curve: Optional[ArrayFunc] = None
    second_moment: Optional[float] = None

    def second_moment_curve(self, u) -> np.ndarray:
        """E(h^2 ∧ u) on the natural scale."""
        if self.log_second_moment_curve is None:
            raise ConfigError("Kernel has no closed-form truncated second moment")
        u = np.asarray(u, dtype=float)
        return self.log_second_moment_curve(np.log(u))

    def scaled(self, lam: float) -> "KernelAnalytics":
        curve = self.log_second_moment_curve
        scaled_curve: Optional[ArrayFunc] = None
        if curve is not None:
            if lam == 0:
                scaled_curve = lambda log_u: np.zeros_like(np.atleast_1d(log_u))
            else:
                shift = 2.0 * math.log(abs(lam))
                scaled_curve = lambda log_u: lam * lam * curve(
                    np.atleast_1d(log_u) - shift
                )
        cond = self.conditional_mean
        return KernelAnalytics(
            mean_h=None if self.mean_h is None else lam * self.mean_h,
            operator_norm=(
                None if self.operator_norm is None else abs(lam) * self.operator_norm
            ),
            conditional_mean=None if cond is None else (lambda x: lam * cond(x)),
            log_second_moment_curve=scaled_curve,
            second_moment=(
                None if self.second_moment is None else lam * lam * self.second_moment
            ),
        )


@dataclass(frozen=True)
class Kernel:
    """A symmetric kernel h(x, y) with optional separable form and analytic facts."""

    name: str
    func: KernelFunc
    separable: Optional[SeparableExpansion] = None
    analytic: Optional[KernelAnalytics] = None
    distribution: Optional[Distribution] = None
    block: Optional[BlockKernelSpec] = None
    spec: Dict = field(default_factory=dict)

    def evaluate(self, x, y):
        """h(x, y); broadcasts over arrays, returns a float for scalars."""
        out = self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.asarray(out, dtype=float)
        if out.ndim == 0:
            return float(out)
        return out

    def __call__(self, x, y):
        return self.evaluate(x, y)

    def matrix(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """M[i, j] = h(x_i, y_j)."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        return np.broadcast_to(
            np.asarray(self.func(x[:, None], y[None, :]), dtype=float),
            (x.size, y.size),
        )

    @property
    def rank(self) -> Optional[int]:
        return None if self.separable is None else self.separable.rank

    def scaled(self, lam: float) -> "Kernel":
        """The kernel lam * h."""
        name = f"{lam:g}*{self.name}"
        spec = {**self.spec, "scale": lam * float(self.spec.get("scale", 1.0))}
        if self.block is not None and self.distribution is not None:
            rebuilt = _block_kernel(self.block.scaled(lam), self.distribution)
            return replace(rebuilt, name=name, spec=spec)
        func = self.func
        return Kernel(
            name=name,
            func=lambda x, y: lam * func(x, y),
            separable=None if self.separable is None else self.separable.scaled(lam),
            analytic=None if self.analytic is None else self.analytic.scaled(lam),
            distribution=self.distribution,
            spec=spec,
        )

    def symmetrized(self) -> "Kernel":
        """(h(x, y) + h(y, x)) / 2."""
        func = self.func
        return Kernel(
            name=f"sym({self.name})",
            func=lambda x, y: 0.5 * (func(x, y) + func(y, x)),
            distribution=self.distribution,
            spec={"name": "symmetrized", "inner": self.spec},
        )


def _check_finite(values: np.ndarray, x: np.ndarray, y: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        where = np.argwhere(bad)[0]
        xb, yb = np.broadcast_arrays(x, y)
        raise NumericalError(
            f"Kernel produced non-finite value {values[tuple(where)]!r} at "
            f"x={xb[tuple(where)]!r}, y={yb[tuple(where)]!r}"
        )


def evaluate_checked(kernel: Kernel, x, y) -> np.ndarray:
    """Evaluate and raise NumericalError on the first non-finite value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    values = np.asarray(kernel.func(x, y), dtype=float)
    values = np.broadcast_to(values, np.broadcast_shapes(x.shape, y.shape))
    _check_finite(values, x, y)
    return values


def orthonormal_basis(dist: Distribution, rank: int) -> List[ArrayFunc]:
    """
    Centered functions phi_1..phi_rank orthonormal in L2 of the law.

    Hermite polynomials for gaussian01, shifted Legendre polynomials for
    uniform01, Gram-Schmidt monomials for laws with finite support.
    """
    if rank < 0:
        raise ConfigError(f"Rank must be non-negative, got {rank}")
    if dist.name == "gaussian01":
        return [
            _scaled_poly(hermite_e.HermiteE.basis(k), 1.0 / math.sqrt(math.factorial(k)))
            for k in range(1, rank + 1)
        ]
    if dist.name == "uniform01":
        return [
            _scaled_poly(legendre.Legendre.basis(k, domain=[0, 1]), math.sqrt(2 * k + 1))
            for k in range(1, rank + 1)
        ]
    values, weights = dist.support  # type: ignore[misc]
    support = values[weights > 0]
    if rank >= support.size:
        raise ConfigError(
            f"{dist.name} law has {support.size} support points; at most "
            f"{support.size - 1} centered orthonormal functions exist"
        )
    w = weights[weights > 0]
    vander = np.vander(support, rank + 1, increasing=True)
    _, r = np.linalg.qr(np.sqrt(w)[:, None] * vander)
    coeffs = np.linalg.inv(r)
    coeffs = coeffs * np.sign(np.diag(r))  # positive leading coefficients
    return [_poly(coeffs[:, k].copy()) for k in range(1, rank + 1)]


def _scaled_poly(poly, factor: float) -> ArrayFunc:
    return lambda x: factor * poly(np.asarray(x, dtype=float))


def _poly(coeffs: np.ndarray) -> ArrayFunc:
    return lambda x: npoly.polyval(np.asarray(x, dtype=float), coeffs)


def _identity(x):
    return np.asarray(x, dtype=float)


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _discrete_curve(dist: Distribution, func: KernelFunc) -> Optional[ArrayFunc]:
    """Exact E(h^2 ∧ u) for laws with finite support, else None."""
    support = dist.support
    if support is None:
        return None
    values, weights = support
    h2 = np.asarray(func(values[:, None], values[None, :]), dtype=float) ** 2
    h2 = np.broadcast_to(h2, (values.size, values.size)).ravel()
    pw = np.outer(weights, weights).ravel()

    def curve(log_u):
        log_u = np.atleast_1d(np.asarray(log_u, dtype=float))
        u = np.exp(np.minimum(log_u, 709.0))
        return np.minimum(h2[None, :], u[:, None]) @ pw

    return curve


def _product_kernel(dist: Distribution, scale: float) -> Kernel:
    func = lambda x, y: scale * (x * y)
    mean = dist.mean
    analytic = KernelAnalytics(
        mean_h=scale * mean * mean,
        operator_norm=abs(scale) * dist.second_moment,
        conditional_mean=lambda x: scale * mean * np.asarray(x, dtype=float),
        log_second_moment_curve=_discrete_curve(dist, func),
        second_moment=scale * scale * dist.second_moment**2,
    )
    norm = math.sqrt(dist.second_moment)
    return Kernel(
        name="product",
        func=func,
        separable=SeparableExpansion(
            weights=np.array([scale * dist.second_moment]),
            phis=(lambda x: np.asarray(x, dtype=float) / norm,),
            orthonormal=abs(mean) <= 1e-12,
        ),
        analytic=analytic,
        distribution=dist,
        spec={"name": "product", "scale": scale},
    )


def _block_kernel(spec: BlockKernelSpec, dist: Distribution) -> Kernel:
    if dist.name != "uniform01":
        raise ConfigError("Block kernels are defined for the uniform01 law only")
    sqrt_b = np.sqrt(spec.b)

    def features(x: np.ndarray) -> np.ndarray:
        idx, sign = spec.locate(x)
        out = np.zeros((x.size, spec.count))
        hit = idx >= 0
        out[np.nonzero(hit)[0], idx[hit]] = sign[hit] / sqrt_b[idx[hit]]
        return out

    phis = tuple(
        (lambda x, n=n: spec.indicator(n, x) / sqrt_b[n]) for n in range(spec.count)
    )
    all_a = spec.all_a
    analytic = KernelAnalytics(
        mean_h=0.0,
        operator_norm=float(np.max(np.abs(all_a))) if all_a.size else 0.0,
        conditional_mean=_zeros,
        log_second_moment_curve=lambda log_u: block_log_second_moment(spec, log_u),
    )
    return Kernel(
        name="block",
        func=lambda x, y: block_kernel_eval(spec, x, y),
        separable=SeparableExpansion(
            weights=spec.a.copy(), phis=phis, feature_matrix=features, orthonormal=True
        ),
        analytic=analytic,
        distribution=dist,
        block=spec,
        spec={"name": "block", **spec.source},
    )


def _finite_rank_kernel(dist: Distribution, eigenvalues: Sequence[float]) -> Kernel:
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    phis = orthonormal_basis(dist, lam.size)
    terms = list(zip(lam.tolist(), phis))

    def func(x, y):
        total = np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))
        for weight, phi in terms:
            total = total + weight * (phi(x) * phi(y))
        return total

    analytic = KernelAnalytics(
        mean_h=0.0,
        operator_norm=float(np.max(np.abs(lam))) if lam.size else 0.0,
        conditional_mean=_zeros,
        log_second_moment_curve=_discrete_curve(dist, func),
        second_moment=float(np.sum(lam * lam)),
    )
    return Kernel(
        name="finite_rank",
        func=func,
        separable=SeparableExpansion(weights=lam, phis=tuple(phis), orthonormal=True),
        analytic=analytic,
        distribution=dist,
        spec={"name": "finite_rank", "eigenvalues": lam.tolist()},
    )


def _linear_kernel(dist: Distribution) -> Kernel:
    mu, sigma2 = dist.mean, dist.variance
    func = lambda x, y: x + y
    return Kernel(
        name="linear",
        func=func,
        separable=SeparableExpansion(
            weights=np.array([0.5, -0.5]),
            phis=(
                lambda x: np.asarray(x, dtype=float) + 1.0,
                lambda x: np.asarray(x, dtype=float) - 1.0,
            ),
        ),
        analytic=KernelAnalytics(
            mean_h=2.0 * mu,
            operator_norm=abs(mu) + math.sqrt(mu * mu + sigma2),
            conditional_mean=lambda x: np.asarray(x, dtype=float) + mu,
            log_second_moment_curve=_discrete_curve(dist, func),
        ),
        distribution=dist,
        spec={"name": "linear"},
    )


def _constant_kernel(dist: Distribution, value: float) -> Kernel:
    func = lambda x, y: np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), value)

    def curve(log_u):
        log_u = np.atleast_1d(np.asarray(log_u, dtype=float))
        return np.minimum(value * value, np.exp(np.minimum(log_u, 709.0)))

    return Kernel(
        name="constant",
        func=func,
        separable=SeparableExpansion(weights=np.array([value]), phis=(_ones,)),
        analytic=KernelAnalytics(
            mean_h=value,
            operator_norm=abs(value),
            conditional_mean=lambda x: np.full(np.shape(x), value),
            log_second_moment_curve=curve,
            second_moment=value * value,
        ),
        distribution=dist,
        spec={"name": "constant", "value": value},
    )


def _zero_kernel(dist: Distribution) -> Kernel:
    return Kernel(
        name="zero",
        func=lambda x, y: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y))),
        separable=SeparableExpansion(weights=np.zeros(0), phis=(), orthonormal=True),
        analytic=KernelAnalytics(
            mean_h=0.0,
            operator_norm=0.0,
            conditional_mean=_zeros,
            log_second_moment_curve=lambda log_u: np.zeros_like(
                np.atleast_1d(np.asarray(log_u, dtype=float))
            ),
            second_moment=0.0,
        ),
        distribution=dist,
        spec={"name": "zero"},
    )


def parse_block_spec(params: Mapping) -> BlockKernelSpec:
    """Block coefficients from explicit arrays or a named sequence."""
    sequence = params.get("sequence")
    if sequence is None:
        if "a" not in params or "b" not in params:
            raise ConfigError("Block kernel needs 'a' and 'b' arrays or a 'sequence'")
        a = np.atleast_1d(np.asarray(params["a"], dtype=float))
        b = np.atleast_1d(np.asarray(params["b"], dtype=float))
        if a.size == 1 and b.size > 1:
            a = np.full(b.size, float(a[0]))
        return BlockKernelSpec.from_sequences(a, b)
    if sequence == "double_exponential":
        return double_exponential_blocks(
            float(params.get("level", 1.0)),
            float(params.get("limsup", 1.0)),
            int(params.get("start", 1)),
        )
    if sequence == "harmonic":
        return harmonic_blocks(int(params.get("start", 1)), int(params.get("count", 40)))
    raise ConfigError(f"Unknown block sequence '{sequence}'")


CATALOG: Dict[str, Dict[str, str]] = {
    "product": {
        "equation": "sec1",
        "description": "h(x,y) = scale*x*y; LIL limsup equals Var X for scale 1",
        "params": "scale (default 1)",
    },
    "block": {
        "equation": "eq5.7",
        "description": "sum_n (a_n/b_n) I_n(x) I_n(y) on uniform01; "
        "operator norm sup|a_n| (eq5.8), truncated-moment limsup (eq5.9)",
        "params": "a, b arrays | sequence=double_exponential(level, limsup, start) "
        "| sequence=harmonic(start, count)",
    },
    "finite_rank": {
        "equation": "sec1",
        "description": "sum_m lambda_m phi_m(x) phi_m(y) with centered orthonormal phi",
        "params": "eigenvalues",
    },
    "linear": {
        "equation": "eq2.1",
        "description": "h(x,y) = x + y; not canonical (pi_1 h(x) = x - EX)",
        "params": "none",
    },
    "constant": {
        "equation": "lemma3.5",
        "description": "h(x,y) = value; Schur-test equality case",
        "params": "value (default 1)",
    },
    "zero": {
        "equation": "trivial",
        "description": "h(x,y) = 0",
        "params": "none",
    },
}


def catalog(
    name: str,
    params: Optional[Mapping] = None,
    dist: Optional[Distribution] = None,
) -> Kernel:
    """
    Build a catalog kernel with its analytic metadata.

    Args:
        name: Catalog entry (see ``CATALOG``)
        params: Family parameters
        dist: Law of the inputs (defaults to rademacher, uniform01 for block)

    Returns:
        Kernel

    Raises:
        ConfigError: Unknown name or invalid parameters
    """
    params = dict(params or {})
    if name == "block":
        dist = dist or UNIFORM01
        spec = params.get("spec")
        if not isinstance(spec, BlockKernelSpec):
            spec = parse_block_spec(params)
        return _block_kernel(spec, dist)
    dist = dist or RADEMACHER
    if name == "product":
        return _product_kernel(dist, float(params.get("scale", 1.0)))
    if name == "finite_rank":
        if "eigenvalues" not in params:
            raise ConfigError("finite_rank kernel needs 'eigenvalues'")
        return _finite_rank_kernel(dist, params["eigenvalues"])
    if name == "linear":
        return _linear_kernel(dist)
    if name == "constant":
        return _constant_kernel(dist, float(params.get("value", 1.0)))
    if name == "zero":
        return _zero_kernel(dist)
    raise ConfigError(
        f"Unknown kernel '{name}' (expected one of: {', '.join(CATALOG)})"
    )


def kernel_from_spec(
    spec: Union[str, Mapping], dist: Optional[Distribution] = None
) -> Kernel:
    """Kernel from a config value: a catalog name or ``{"name": ..., params}``."""
    if isinstance(spec, str):
        return catalog(spec.strip().lower(), None, dist)
    if not isinstance(spec, Mapping) or "name" not in spec:
        raise ConfigError(f"Kernel spec must name a catalog entry: {spec!r}")
    params = {k: v for k, v in spec.items() if k not in ("name", "scale")}
    kernel = catalog(str(spec["name"]).lower(), params, dist)
    scale = spec.get("scale")
    if scale is not None and float(scale) != 1.0:
        if kernel.name == "product":
            return catalog("product", {"scale": float(scale)}, dist)
        kernel = kernel.scaled(float(scale))
    return kernel


def safe_log_log(log_u: np.ndarray) -> np.ndarray:
    """L_2(u) computed from log u, valid beyond the double range."""
    log_u = np.asarray(log_u, dtype=float)
    l1 = np.maximum(log_u, 1.0)
    return np.maximum(np.log(l1), 1.0)
