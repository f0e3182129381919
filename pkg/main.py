"""
Command-line entry point: run a scenario, analyse the template gait, or sweep a parameter.

Exit status: 0 completed, 1 configuration error, 2 the walker fell,
3 the simulation aborted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from src.config import load_config
from src.errors import AnalysisError, BipedLabError, ConfigError, SimulationError
from src.metrics import aggregate_stats, rows_to_csv
from src.simulator import analyze_scenario, run_scenario, sweep

EXIT_COMPLETED = 0
EXIT_CONFIG = 1
EXIT_FELL = 2
EXIT_ABORTED = 3


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _sweep_workers() -> int:
    cap = os.environ.get("BIPED_LAB_THREADS")
    cpus = os.cpu_count() or 1
    if not cap:
        return cpus
    try:
        return max(1, min(cpus, int(cap)))
    except ValueError:
        logging.getLogger(__name__).warning(f"ignoring BIPED_LAB_THREADS={cap!r}")
        return cpus


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Bipedal walking simulations: template and 5-link models")
    parser.add_argument("--log-level", type=str, default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("config", type=str)
    run.add_argument("--results-dir", type=str, default=None)

    analyze = sub.add_parser("analyze", help="fixed point, eigenvalues and DLQR gain of the template gait")
    analyze.add_argument("config", type=str)
    analyze.add_argument("--output", type=str, default=None)

    sw = sub.add_parser("sweep", help="one run per parameter value")
    sw.add_argument("config", type=str)
    sw.add_argument("--param", type=str, required=True, help="dotted config path, e.g. gains.fdc.c")
    sw.add_argument("--values", type=_value, nargs="+", required=True)
    sw.add_argument("--results-dir", type=str, default=None)
    return parser.parse_args(argv)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    metrics = run_scenario(cfg, args.results_dir)
    residual = metrics.stride_residuals[-1] if metrics.stride_residuals else float("nan")
    print(
        f"{cfg.name} | {cfg.model}/{cfg.controller} | {metrics.status} at {metrics.final_time:.2f}s "
        f"| steps {metrics.steps_completed} | speed {metrics.mean_forward_speed:.3f} m/s "
        f"| pitch [{metrics.pitch_band[0]:.3f}, {metrics.pitch_band[1]:.3f}] "
        f"| max |Fx/Fy| {metrics.max_friction_ratio:.3f} | last residual {residual:.2e}"
    )
    if metrics.csv_path:
        print(f"trajectory written to {metrics.csv_path}")
    return EXIT_FELL if metrics.fell else EXIT_COMPLETED


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    lin = analyze_scenario(cfg, args.output)
    print(f"fixed point S* = {[round(float(v), 6) for v in lin.S_star]} (residual {lin.fixed_point_residual:.2e})")
    print(f"eigenvalue magnitudes: {[round(abs(v), 4) for v in lin.eigenvalues]}")
    if lin.K is not None:
        print(f"DLQR closed-loop magnitudes: {[round(abs(v), 4) for v in lin.closed_loop_eigenvalues]}")
    else:
        print("stride map not controllable; no DLQR gain")
    return EXIT_COMPLETED


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    results_dir = Path(args.results_dir or cfg.outputs.directory)
    rows = sweep(cfg, args.param, args.values, results_dir, workers=_sweep_workers())
    for row in rows:
        if row.get("status") == "error":
            print(f"{args.param}={row['value']!r} | aborted")
            continue
        print(
            f"{args.param}={row['value']!r} | {row['status']} at {row['final_time']:.2f}s "
            f"| steps {row['steps']} | speed {row['forward_speed']:.3f} m/s"
        )
    rows_to_csv(rows, results_dir / f"{cfg.name}_sweep.csv")

    speed_mean, speed_std = aggregate_stats([r["forward_speed"] for r in rows if "forward_speed" in r])
    steps_mean, steps_std = aggregate_stats([r["steps"] for r in rows if "steps" in r])
    print("\nSweep aggregate (mean +/- std)")
    print(f"  forward speed: {speed_mean:.3f} +/- {speed_std:.3f} m/s")
    print(f"  steps: {steps_mean:.1f} +/- {steps_std:.1f}")
    return EXIT_COMPLETED


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    commands = {"run": cmd_run, "analyze": cmd_analyze, "sweep": cmd_sweep}
    try:
        return commands[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        if exc.partial_log:
            print(f"partial log written to {exc.partial_log}", file=sys.stderr)
        return EXIT_ABORTED
    except AnalysisError as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except BipedLabError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
