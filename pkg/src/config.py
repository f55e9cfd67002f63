"""
Configuration management for the U-statistic LIL laboratory.

Values resolve as: command-line flag > config file > environment > default.
"""

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np

from models import ConfigError, SumVariant

ENV_OUTPUT_DIR = "ULIL_LAB_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "ulil-lab-out"
MANIFEST_NAME = "manifest.json"

Spec = Union[str, Dict[str, Any]]


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a flat JSON config file; keys mirror the long flag names.

    Raises:
        ConfigError: Missing file, invalid JSON or a non-object document
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _pick(args, file_values: Mapping[str, Any], name: str, default: Any = None) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    return file_values.get(name, default)


def parse_spec(value: Any, what: str) -> Spec:
    """A kernel or distribution spec: a catalog name or a JSON object."""
    if isinstance(value, dict):
        return dict(value)
    if isinstance(value, str):
        text = value.strip()
        if text.startswith("{"):
            try:
                parsed = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Invalid {what} spec {text!r}: {e}")
            if not isinstance(parsed, dict):
                raise ConfigError(f"{what} spec must be a JSON object: {text!r}")
            return parsed
        if text:
            return text
    raise ConfigError(f"Missing or invalid {what} spec: {value!r}")


def parse_seeds(value: Any) -> List[int]:
    """Seeds as a list of integers or a 'start:stop' range string."""
    if isinstance(value, (list, tuple)) and len(value) == 1 and isinstance(value[0], str):
        value = value[0]
    if isinstance(value, str):
        if ":" in value:
            start, stop = value.split(":", 1)
            try:
                value = list(range(int(start), int(stop)))
            except ValueError:
                raise ConfigError(f"Invalid seed range {value!r}")
        else:
            value = [v for v in value.replace(",", " ").split() if v]
    if isinstance(value, int):
        value = [value]
    try:
        seeds = [int(s) for s in value]
    except (TypeError, ValueError):
        raise ConfigError(f"Invalid seeds {value!r}")
    if not seeds:
        raise ConfigError("At least one seed is required")
    return seeds


def parse_matrix(value: Any) -> List[List[float]]:
    """Coefficient matrix from nested lists, inline JSON or a CSV file path."""
    if isinstance(value, str):
        text = value.strip()
        if text.startswith("["):
            try:
                value = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Invalid inline matrix: {e}")
        else:
            try:
                value = np.loadtxt(text, delimiter=",", ndmin=2)
            except OSError:
                raise ConfigError(f"Matrix file not found: {text}")
            except ValueError as e:
                raise ConfigError(f"Matrix file {text} is not numeric CSV: {e}")
    try:
        arr = np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(f"Matrix must be numeric: {value!r}")
    if arr.ndim != 2 or arr.size == 0:
        raise ConfigError(f"Matrix must be a non-empty 2-D array, got shape {arr.shape}")
    return arr.tolist()


def _optional_spec(value: Any, what: str) -> Optional[Spec]:
    return None if value is None else parse_spec(value, what)


def _positive(name: str, value: Any, cast=float) -> Any:
    try:
        value = cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _optional_positive(name: str, value: Any) -> Optional[float]:
    return None if value is None else _positive(name, value)


@dataclass
class RunConfig:
    """Settings shared by every command."""

    command: str
    seed: int = 0
    out: str = DEFAULT_OUTPUT_DIR
    workers: int = 1
    verbose: bool = False

    @classmethod
    def from_args(cls, args, file_values: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """
        Create configuration from command-line arguments.

        Args:
            args: Parsed argparse arguments
            file_values: Values loaded from --config, if any

        Returns:
            RunConfig instance
        """
        file_values = file_values or {}
        command = getattr(args, "command", None) or file_values.get("command")
        if not command:
            raise ConfigError("No command given (on the command line or in the config file)")
        out = _pick(args, file_values, "out") or os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR
        workers = _positive("workers", _pick(args, file_values, "workers", 1), int)
        seed = int(_pick(args, file_values, "seed", 0))
        if seed < 0:
            raise ConfigError(f"seed must be non-negative, got {seed}")
        return cls(
            command=str(command),
            seed=seed,
            out=str(out),
            workers=workers,
            verbose=bool(_pick(args, file_values, "verbose", False)),
        )

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.out, MANIFEST_NAME)


@dataclass
class SimulateConfig:
    """Trajectory experiment."""

    kernel: Spec = "product"
    dist: Optional[Spec] = None
    variant: str = SumVariant.PLAIN_OFFDIAG.value
    max_exponent: int = 10
    seeds: List[int] = field(default_factory=lambda: [0])
    engine: str = "auto"
    burn_in: Optional[int] = None
    sandwich: bool = False

    @classmethod
    def from_args(cls, args, file_values: Optional[Mapping[str, Any]] = None) -> "SimulateConfig":
        file_values = file_values or {}
        burn_in = _pick(args, file_values, "burn_in")
        return cls(
            kernel=parse_spec(_pick(args, file_values, "kernel", "product"), "kernel"),
            dist=_optional_spec(_pick(args, file_values, "dist"), "distribution"),
            variant=SumVariant.parse(
                _pick(args, file_values, "variant", SumVariant.PLAIN_OFFDIAG.value)
            ).value,
            max_exponent=int(_pick(args, file_values, "max_exponent", 10)),
            seeds=parse_seeds(_pick(args, file_values, "seeds", [0])),
            engine=str(_pick(args, file_values, "engine", "auto")),
            burn_in=None if burn_in is None else int(burn_in),
            sandwich=bool(_pick(args, file_values, "sandwich", False)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class LimitSetConfig(SimulateConfig):
    """Limit-set experiment; always the plain off-diagonal sum."""

    kernel: Spec = field(default_factory=lambda: {"name": "finite_rank", "eigenvalues": [2, -1]})
    dist: Spec = "gaussian01"

    @classmethod
    def from_args(cls, args, file_values: Optional[Mapping[str, Any]] = None) -> "LimitSetConfig":
        file_values = file_values or {}
        base = SimulateConfig.from_args(
            args,
            {
                "kernel": {"name": "finite_rank", "eigenvalues": [2, -1]},
                "dist": "gaussian01",
                **file_values,
            },
        )
        if SumVariant.parse(base.variant) is not SumVariant.PLAIN_OFFDIAG:
            raise ConfigError("limit-set runs the plain_offdiag variant only")
        values = base.to_dict()
        values.pop("sandwich")
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values.pop("sandwich")
        return values


@dataclass
class ConditionsConfig:
    """Certification of the three LIL conditions."""

    kernel: Spec = "product"
    dist: Optional[Spec] = None
    m: int = 2000
    bootstrap: int = 32
    samples: int = 100_000
    monte_carlo: bool = False
    truncation_max: int = 16

    @classmethod
    def from_args(cls, args, file_values: Optional[Mapping[str, Any]] = None) -> "ConditionsConfig":
        file_values = file_values or {}
        bootstrap = int(_pick(args, file_values, "bootstrap", 32))
        if bootstrap < 0:
            raise ConfigError(f"bootstrap must be non-negative, got {bootstrap}")
        return cls(
            kernel=parse_spec(_pick(args, file_values, "kernel", "product"), "kernel"),
            dist=_optional_spec(_pick(args, file_values, "dist"), "distribution"),
            m=_positive("m", _pick(args, file_values, "m", 2000), int),
            bootstrap=bootstrap,
            samples=_positive("samples", _pick(args, file_values, "samples", 100_000), int),
            monte_carlo=bool(_pick(args, file_values, "monte_carlo", False)),
            truncation_max=_positive(
                "truncation_max", _pick(args, file_values, "truncation_max", 16), int
            ),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ChaosNormConfig:
    """Chaos norm of a coefficient matrix and the chaos lower-bound check."""

    matrix: List[List[float]] = field(default_factory=lambda: [[1.0, 0.0], [0.0, 1.0]])
    t: float = 1.0
    restarts: int = 16
    c: float = 0.05
    mode: str = "auto"
    samples: int = 100_000

    @classmethod
    def from_args(cls, args, file_values: Optional[Mapping[str, Any]] = None) -> "ChaosNormConfig":
        file_values = file_values or {}
        matrix = _pick(args, file_values, "matrix")
        if matrix is None:
            raise ConfigError("chaos-norm needs --matrix (CSV path or inline JSON)")
        mode = str(_pick(args, file_values, "mode", "auto"))
        if mode not in ("auto", "exhaustive", "monte_carlo"):
            raise ConfigError(f"Unknown mode '{mode}' (auto, exhaustive or monte_carlo)")
        return cls(
            matrix=parse_matrix(matrix),
            t=_positive("t", _pick(args, file_values, "t", 1.0)),
            restarts=_positive("restarts", _pick(args, file_values, "restarts", 16), int),
            c=_positive("c", _pick(args, file_values, "c", 0.05)),
            mode=mode,
            samples=_positive("samples", _pick(args, file_values, "samples", 100_000), int),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class BoundsConfig:
    """Inputs of the concentration-bound calculators."""

    t: float = 1.0
    U: float = 1.0
    V: Optional[float] = None
    sigma2: Optional[float] = None
    ez_abs: Optional[float] = None
    K: float = 1.0

    @classmethod
    def from_args(cls, args, file_values: Optional[Mapping[str, Any]] = None) -> "BoundsConfig":
        file_values = file_values or {}
        ez_abs = _pick(args, file_values, "ez_abs")
        if ez_abs is not None:
            ez_abs = float(ez_abs)
            if ez_abs < 0:
                raise ConfigError(f"ez_abs must be non-negative, got {ez_abs}")
        return cls(
            t=_positive("t", _pick(args, file_values, "t", 1.0)),
            U=_positive("U", _pick(args, file_values, "U", 1.0)),
            V=_optional_positive("V", _pick(args, file_values, "V")),
            sigma2=_optional_positive("sigma2", _pick(args, file_values, "sigma2")),
            ez_abs=ez_abs,
            K=_positive("K", _pick(args, file_values, "K", 1.0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


COMMAND_CONFIGS = {
    "simulate": SimulateConfig,
    "limit-set": LimitSetConfig,
    "conditions": ConditionsConfig,
    "chaos-norm": ChaosNormConfig,
    "bounds": BoundsConfig,
}


def manifest(run: RunConfig, command_config) -> Dict[str, Any]:
    """
    Flat, fully resolved config that re-runs the command via --config.

    Output directory, worker count and verbosity do not change any result
    and are left out, so the manifest is not the complete invocation: a
    re-run from it writes byte-identical result files wherever it writes
    them and however many workers it uses.
    """
    return {"command": run.command, "seed": run.seed, **command_config.to_dict()}
