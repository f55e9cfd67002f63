"""Console entry point for the U-statistic LIL laboratory."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from typing import Dict, Iterable, List, Optional

import numpy as np

from chaos_norm import chaos_norm
from conditions import CertifyOptions, certify, summarize
from config import (
    COMMAND_CONFIGS,
    BoundsConfig,
    ChaosNormConfig,
    ConditionsConfig,
    LimitSetConfig,
    RunConfig,
    SimulateConfig,
    load_config_file,
    manifest,
)
from kernels import CATALOG, Distribution, Kernel, kernel_from_spec
from log_utils import LOG_FILE_NAME, setup_logging
from models import ChaosMatrix, ConfigError, NumericalError, SumVariant
from simulator import (
    SimulationRunner,
    TrajectoryConfig,
    limit_set_estimate,
    limsup_estimate,
    sandwich_report,
)
from tail_bounds import MAX_EXHAUSTIVE_SIGNS, bound_records, latala_lower_check

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

TRAJECTORY_FIELDS = [
    "seed",
    "variant",
    "engine",
    "equation",
    "n",
    "raw_sum",
    "normalized_eq11",
    "normalized_eq511",
]


def _common_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand from overwriting values given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        metavar="FILE",
        default=argparse.SUPPRESS,
        help="Flat JSON config (keys mirror the flags; a manifest.json re-runs a command)",
    )
    common.add_argument(
        "--out",
        metavar="DIR",
        default=argparse.SUPPRESS,
        help="Output directory (default: $ULIL_LAB_OUTPUT_DIR or ./ulil-lab-out)",
    )
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Base seed (default: 0)")
    common.add_argument(
        "--workers",
        type=int,
        default=argparse.SUPPRESS,
        metavar="N",
        help="Worker threads for seeds, restarts and bootstrap (results do not depend on it)",
    )
    common.add_argument(
        "--verbose", action="store_true", default=argparse.SUPPRESS, help="Enable DEBUG logging"
    )
    return common


def _add_kernel_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--kernel",
        metavar="SPEC",
        help='Catalog name or JSON spec, e.g. \'{"name": "block", "a": [0.5], "b": [0.25]}\'',
    )
    parser.add_argument(
        "--dist",
        metavar="SPEC",
        help="rademacher, uniform01, gaussian01 or a discrete JSON spec "
        "(default: the kernel's natural law)",
    )


def _add_trajectory_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-exponent", type=int, metavar="K", help="Largest checkpoint 2^K")
    parser.add_argument(
        "--seeds", nargs="+", metavar="SEED", help="Seeds, as a list or a 'start:stop' range"
    )
    parser.add_argument(
        "--engine",
        choices=["auto", "generic", "separable"],
        help="Summation engine (default: auto)",
    )
    parser.add_argument(
        "--burn-in", type=int, metavar="K", help="Ignore checkpoints below 2^K (default: K/2)"
    )


def build_parser() -> argparse.ArgumentParser:
    """Build and return the CLI argument parser."""
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="ulil-lab",
        description=(
            "U-statistic LIL laboratory\n\n"
            "Certifies the conditions of the law of the iterated logarithm for\n"
            "degenerate U-statistics, simulates LIL trajectories, and evaluates\n"
            "chaos norms and concentration bounds."
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
        epilog=(
            "Examples:\n"
            "  ulil-lab catalog\n"
            "  ulil-lab conditions --kernel '{\"name\": \"block\", \"a\": [0.5, 0.2, 0.9], "
            "\"b\": [0.1, 0.01, 0.001]}'\n"
            "  ulil-lab simulate --kernel product --seeds 0 1 --max-exponent 10 --out run1\n"
            "  ulil-lab chaos-norm --matrix '[[1, 0], [0, 1]]' --t 1\n"
            "  ulil-lab bounds --t 1 --U 1 --V 1 --K 1\n"
            "  ulil-lab --config run1/manifest.json --out run1-again"
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    sub.add_parser("catalog", parents=[common], help="List catalog kernels")

    conditions = sub.add_parser(
        "conditions", parents=[common], help="Certify the three LIL conditions for a kernel"
    )
    _add_kernel_args(conditions)
    conditions.add_argument("--m", type=int, help="Sample size of the operator-norm estimate")
    conditions.add_argument("--bootstrap", type=int, help="Bootstrap resamples (0 disables)")
    conditions.add_argument("--samples", type=int, help="Monte Carlo sample count")
    conditions.add_argument(
        "--monte-carlo",
        action="store_true",
        default=None,
        help="Estimate the truncated-moment curve even when a closed form exists",
    )
    conditions.add_argument(
        "--truncation-max", type=int, metavar="N", help="Largest n of the truncation profile"
    )

    simulate = sub.add_parser("simulate", parents=[common], help="Simulate LIL trajectories")
    _add_kernel_args(simulate)
    simulate.add_argument(
        "--variant", choices=[v.value for v in SumVariant], help="Sum variant (default: plain)"
    )
    _add_trajectory_args(simulate)
    simulate.add_argument(
        "--sandwich",
        action="store_true",
        default=None,
        help="Also certify the kernel and compare the empirical limsup with the bound",
    )

    chaos = sub.add_parser(
        "chaos-norm", parents=[common], help="Chaos norm and the chaos lower-bound check"
    )
    chaos.add_argument("--matrix", metavar="CSV|JSON", help="CSV file or inline JSON matrix")
    chaos.add_argument("--t", type=float, help="Chaos-norm parameter t > 0")
    chaos.add_argument("--restarts", type=int, help="Minimum starting points (default: 16)")
    chaos.add_argument("--c", type=float, help="Constant of the lower bound (default: 0.05)")
    chaos.add_argument(
        "--mode",
        choices=["auto", "exhaustive", "monte_carlo"],
        help="Probability evaluation (default: exhaustive when feasible)",
    )
    chaos.add_argument("--samples", type=int, help="Monte Carlo sample count")

    bounds = sub.add_parser("bounds", parents=[common], help="Concentration-bound calculators")
    bounds.add_argument("--t", type=float, help="Deviation level")
    bounds.add_argument("--U", type=float, help="Uniform bound of the summands")
    bounds.add_argument("--V", type=float, help="Variance proxy")
    bounds.add_argument("--sigma2", type=float, help="Variance")
    bounds.add_argument("--ez-abs", type=float, help="E|Z|")
    bounds.add_argument("--K", type=float, help="Universal constant (default: 1)")

    limit = sub.add_parser(
        "limit-set", parents=[common], help="Empirical limit set versus the numerical range"
    )
    _add_kernel_args(limit)
    _add_trajectory_args(limit)
    return parser


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, tuple)):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _dumps(record: Dict) -> str:
    return json.dumps(record, sort_keys=True, default=_jsonable)


def write_jsonl(path: str, records: Iterable[Dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(_dumps(record) + "\n")


def write_csv(path: str, rows: Iterable[Dict], fieldnames: List[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fieldnames})


def _write_manifest(run: RunConfig, command_config) -> None:
    with open(run.manifest_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest(run, command_config), f, sort_keys=True, indent=2, default=_jsonable)
        f.write("\n")


def _resolve_kernel(kernel_spec, dist_spec) -> "tuple[Kernel, Distribution]":
    dist = None if dist_spec is None else Distribution.parse(dist_spec)
    kernel = kernel_from_spec(kernel_spec, dist)
    return kernel, dist or kernel.distribution


def cmd_catalog() -> List[str]:
    """Catalog listing, one line per kernel."""
    lines = [f"{'Kernel':<13} {'Tag':<10} Description", "-" * 70]
    for name, entry in CATALOG.items():
        lines.append(f"{name:<13} {entry['equation']:<10} {entry['description']}")
        lines.append(f"{'':<13} {'':<10} params: {entry['params']}")
    return lines


def cmd_conditions(run: RunConfig, cfg: ConditionsConfig) -> Dict:
    kernel, dist = _resolve_kernel(cfg.kernel, cfg.dist)
    options = CertifyOptions(
        seed=run.seed,
        mc_samples=cfg.samples,
        opnorm_m=cfg.m,
        bootstrap=cfg.bootstrap,
        monte_carlo=cfg.monte_carlo,
        truncation_range=(1, cfg.truncation_max),
        workers=run.workers,
    )
    report = certify(kernel, dist, options)
    write_jsonl(os.path.join(run.out, "report.jsonl"), [report.to_dict()])
    for line in summarize(report):
        print(line)
    return report.to_dict()


def _trajectory_config(run: RunConfig, cfg: SimulateConfig) -> TrajectoryConfig:
    kernel, dist = _resolve_kernel(cfg.kernel, cfg.dist)
    if dist is None:
        raise ConfigError("A distribution is required for this kernel")
    return TrajectoryConfig(
        kernel=kernel,
        dist=dist,
        variant=SumVariant.parse(cfg.variant),
        max_exponent=cfg.max_exponent,
        seeds=cfg.seeds,
        engine=cfg.engine,
    )


def cmd_simulate(run: RunConfig, cfg: SimulateConfig) -> List[Dict]:
    config = _trajectory_config(run, cfg)
    runner = SimulationRunner(config, workers=run.workers, burn_in=cfg.burn_in)
    results = runner.run()

    rows = [rec for r in results for rec in r.records()]
    write_jsonl(os.path.join(run.out, "trajectories.jsonl"), rows)
    write_csv(os.path.join(run.out, "trajectories.csv"), rows, TRAJECTORY_FIELDS)

    summary: List[Dict] = []
    if cfg.max_exponent > 0:
        for convention in ("eq1.1", "eq5.11"):
            summary.append(
                {"record": "limsup", **limsup_estimate(results, cfg.burn_in, convention)}
            )
    for r in results:
        if r.block_maxima:
            summary.append(
                {
                    "record": "block_maxima",
                    "equation": "eq1.1",
                    "seed": r.seed,
                    "maxima": r.block_maxima,
                }
            )
        if r.overflow_flag:
            summary.append({"record": "overflow", "seed": r.seed})
    if cfg.sandwich and summary:
        report = certify(
            config.kernel, config.dist, CertifyOptions(seed=run.seed, workers=run.workers)
        )
        summary.append({"record": "sandwich", **sandwich_report(report, summary[0])})
    write_jsonl(os.path.join(run.out, "summary.jsonl"), summary)
    return summary


def cmd_chaos_norm(run: RunConfig, cfg: ChaosNormConfig) -> List[Dict]:
    matrix = ChaosMatrix(np.asarray(cfg.matrix, dtype=float))
    result = chaos_norm(matrix, cfg.t, restarts=cfg.restarts, seed=run.seed, workers=run.workers)
    k, l = matrix.entries.shape
    mode = cfg.mode
    if mode == "auto":
        mode = "exhaustive" if k + l <= MAX_EXHAUSTIVE_SIGNS else "monte_carlo"
    check = latala_lower_check(
        matrix,
        cfg.t,
        c=cfg.c,
        mode=mode,
        samples=cfg.samples,
        seed=run.seed,
        norm=result.value,
        workers=run.workers,
    )
    records = [result.to_dict(), {**check.to_dict(), "c": cfg.c, "t": cfg.t}]
    write_jsonl(os.path.join(run.out, "chaos_norm.jsonl"), records)
    if check.distribution is not None:
        write_csv(
            os.path.join(run.out, "latala_distribution.csv"),
            [{"value": v, "probability": p} for v, p in check.distribution],
            ["value", "probability"],
        )
    print(f"|||A|||_{cfg.t:g} = {result.value:.12g}")
    print(
        f"P(|chaos| >= {cfg.c:g} |||A|||_t) = {check.probability:.6g} "
        f"vs {check.threshold:.6g}: {'holds' if check.holds else 'VIOLATED'}"
    )
    return records


def cmd_bounds(run: RunConfig, cfg: BoundsConfig) -> List[Dict]:
    records = bound_records(cfg.t, cfg.U, sigma2=cfg.sigma2, V=cfg.V, EZ_abs=cfg.ez_abs, K=cfg.K)
    write_jsonl(os.path.join(run.out, "bounds.jsonl"), records)
    for r in records:
        print(f"{r['bound']:<10} ({r['equation']}): {r['value']:.12g}")
    return records


def cmd_limit_set(run: RunConfig, cfg: LimitSetConfig) -> Dict:
    config = _trajectory_config(run, cfg)
    results = SimulationRunner(config, workers=run.workers, burn_in=cfg.burn_in).run()
    estimate = limit_set_estimate(results, cfg.burn_in, kernel=config.kernel, dist=config.dist)
    record = estimate.to_dict()
    write_jsonl(os.path.join(run.out, "limit_set.jsonl"), [record])
    print(f"Hull:      [{estimate.hull[0]:.6g}, {estimate.hull[1]:.6g}]")
    if estimate.predicted is not None:
        print(f"Predicted: [{estimate.predicted[0]:.6g}, {estimate.predicted[1]:.6g}]")
        coverage = estimate.coverage
        if coverage is not None and math.isfinite(coverage):
            print(f"Coverage:  {coverage:.1%}")
    return record


COMMANDS = {
    "conditions": cmd_conditions,
    "simulate": cmd_simulate,
    "chaos-norm": cmd_chaos_norm,
    "bounds": cmd_bounds,
    "limit-set": cmd_limit_set,
}


def main(argv: Optional[List[str]] = None) -> int:
    """CLI main for console_scripts entry point."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help()
        return EXIT_OK
    args = parser.parse_args(args=argv)

    if args.command == "catalog":
        for line in cmd_catalog():
            print(line)
        return EXIT_OK

    try:
        config_path = getattr(args, "config", None)
        file_values = load_config_file(config_path) if config_path else {}
        run = RunConfig.from_args(args, file_values)
        if run.command == "catalog":
            for line in cmd_catalog():
                print(line)
            return EXIT_OK
        if run.command not in COMMANDS:
            raise ConfigError(f"Unknown command '{run.command}'")
        command_config = COMMAND_CONFIGS[run.command].from_args(args, file_values)
    except ConfigError as e:
        setup_logging(verbose=False, log_file=None)
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR

    os.makedirs(run.out, exist_ok=True)
    setup_logging(verbose=run.verbose, log_file=os.path.join(run.out, LOG_FILE_NAME))
    _write_manifest(run, command_config)
    logger.info(f"Command: {run.command}   Output: {run.out}")

    try:
        COMMANDS[run.command](run, command_config)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL_ERROR
    return EXIT_OK
