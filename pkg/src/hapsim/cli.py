"""Command-line harness: run presets or custom configs, emit CSV traces,
a JSON summary, and a reproducibility manifest.

Artifacts per invocation (in --out):
    trace_<name>_seed<k>.csv   one row per iteration/slot, fixed columns
    summary.json               final metrics per arm/sweep/seed + medians
    manifest.json              config hash, seeds, versions, timestamp

CSV bodies are byte-identical across repeated runs with the same flags and
seeds; the manifest carries the only timestamp.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import statistics
import sys
from datetime import datetime, timezone
from importlib.metadata import version as pkg_version
from pathlib import Path

import numpy as np

from .presets import PRESETS, Arm, preset_config, run_arm
from .qcqp import SolverFailure
from .scenario import ConfigError, ScenarioConfig
from .sumrate import RunFailure

CSV_COLUMNS = [
    "variant", "sweep", "algo", "seed", "step",
    "f_fp", "f_fp_tight", "sum_rate", "sum_log_avg_rate", "jain", "served",
    "max_power_residual", "max_fronthaul_residual", "flags",
]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_trace(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(col, "")) for col in CSV_COLUMNS])


def _config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _run_command(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.preset and args.config:
        print("error: --preset and --config are mutually exclusive", file=sys.stderr)
        return 2
    if not args.preset and not args.config:
        print("error: one of --preset or --config is required", file=sys.stderr)
        return 2

    if args.preset:
        preset = PRESETS[args.preset]
        name = preset.name
        base_seed = 0
        configs_payload = {"preset": preset.name, "base": dict(preset.base)}
    else:
        try:
            base_config = ScenarioConfig.from_json(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
        from .presets import ExperimentPreset

        preset = ExperimentPreset(
            name="custom", arms=(Arm("custom", args.algo),),
        )
        name = Path(args.config).stem
        base_seed = base_config.seed
        configs_payload = {"config": base_config.to_dict()}

    seeds = [base_seed + i for i in range(args.seeds)]
    summary: dict = {"name": name, "arms": {}}
    status = "ok"
    failure_msg = ""

    try:
        for seed in seeds:
            rows: list[dict] = []
            for arm in preset.arms:
                for sweep in preset.sweep_points():
                    if args.preset:
                        config = preset_config(
                            preset, arm, seed, sweep_value=sweep,
                            paper_scale=args.paper_scale, tones=args.tones,
                        )
                    else:
                        overrides = base_config.to_dict()
                        overrides["seed"] = seed
                        if args.tones is not None:
                            overrides["tones"] = args.tones
                        config = ScenarioConfig.from_dict(overrides)
                    try:
                        arm_rows, report = run_arm(
                            arm, config, pf_slots=preset.pf_slots, tol=args.tol,
                        )
                    except ConfigError as exc:
                        print(f"error: {exc}", file=sys.stderr)
                        return 2
                    tag = {
                        "variant": arm.label,
                        "sweep": "" if sweep is None else sweep,
                        "algo": arm.algo,
                        "seed": seed,
                    }
                    rows.extend({**tag, **r} for r in arm_rows)
                    arm_summary = summary["arms"].setdefault(arm.label, {})
                    sweep_key = "default" if sweep is None else str(sweep)
                    cell = arm_summary.setdefault(
                        sweep_key, {"seeds": {}, "median": {}}
                    )
                    cell["seeds"][str(seed)] = {
                        "sum_rate_se": report.sum_rate_se,
                        "jain": report.jain,
                        "served_fraction": report.served_fraction,
                        "iterations": report.iterations,
                        "monotonicity_violations": report.monotonicity_violations,
                    }
            _write_trace(out_dir / f"trace_{name}_seed{seed}.csv", rows)
    except (RunFailure, SolverFailure) as exc:
        status = "solver-failure"
        failure_msg = str(exc)

    for arm_summary in summary["arms"].values():
        for cell in arm_summary.values():
            per_seed = cell["seeds"].values()
            if per_seed:
                cell["median"] = {
                    key: statistics.median(s[key] for s in per_seed)
                    for key in ("sum_rate_se", "jain", "served_fraction")
                }
    summary["status"] = status
    if failure_msg:
        summary["failure"] = failure_msg
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)

    manifest = {
        "name": name,
        "config_hash": _config_hash(configs_payload),
        "configs": configs_payload,
        "seeds": seeds,
        "tones": args.tones,
        "paper_scale": bool(args.paper_scale),
        "tol": args.tol,
        "versions": {
            "hapsim": _safe_version(),
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "status": status,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)

    if status != "ok":
        print(f"error: {failure_msg} (partial artifacts kept)", file=sys.stderr)
        return 1
    return 0


def _safe_version() -> str:
    try:
        return pkg_version("hapsim")
    except Exception:
        return "unknown"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hapsim",
        description="Air-ground network-MIMO resource-management simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a preset or a custom scenario config")
    run_p.add_argument("--preset", choices=sorted(PRESETS))
    run_p.add_argument("--config", help="path to a scenario config JSON")
    run_p.add_argument("--algo", choices=["sumrate", "pf", "zf"], default="sumrate",
                       help="algorithm for --config runs (presets fix their own)")
    run_p.add_argument("--seeds", type=int, default=1, help="number of seeds")
    run_p.add_argument("--tones", type=int, default=None, help="override tone count")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--paper-scale", action="store_true",
                       help="use the full-scale setup instead of desk defaults")
    run_p.add_argument("--tol", type=float, default=None,
                       help="override the driver convergence tolerance")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _run_command(args)
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
