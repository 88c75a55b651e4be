"""Command-line entry point.

Subcommands: generate-pile, precompute-vturns, plan, experiment, profile,
default-config.  Exit codes: 0 success, 1 usage error, 2 runtime error.
All file outputs are written atomically; every stochastic choice is pinned by
``--seed`` (default 0, never wall clock).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
import time
from pathlib import Path

from . import harness
from ._util import atomic_write_text
from .heightfield import cutout, read_hfld, write_csv, write_hfld
from .planner import write_plan_log, write_stats_json
from .vturn import lut_lookup, plan_vturn, read_vlut, write_vlut
from .worldmodel import (
    PERF_PATCH_N,
    PERF_PATCH_SIDE,
    PILE_PATCH_N,
    PILE_PATCH_SIDE,
    AnalyticSurrogate,
    DigPose,
    LoadAction,
    optimize_action_on_patch,
)

PREDICTION_BUDGET_MS = 100.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="loadplan", description=__doc__)
    parser.add_argument("--verbose", action="store_true",
                        help="print the effective configuration")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", type=Path, help="scenario JSON (defaults built in)")
        p.add_argument("--seed", type=int, default=None, help="override the pile seed")

    p = sub.add_parser("generate-pile", help="write a seeded pile as HFLD")
    add_config(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--csv", type=Path, help="also write a CSV dump")

    p = sub.add_parser("precompute-vturns", help="build and save the V-turn table")
    add_config(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("plan", help="run one strategy/depth on one pile")
    add_config(p)
    p.add_argument("--strategy", default="greedy",
                   choices=["greedy", "max_loading", "nominal", "tree"])
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--pile", type=Path, help="HFLD file overriding pile generation")
    p.add_argument("--lut", type=Path, help="precomputed VLUT file")
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("experiment", help="run the full seeded experiment")
    add_config(p)
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel workers (default: machine parallelism)")
    p.add_argument("--lut", type=Path, help="precomputed VLUT file")
    p.add_argument("--out-dir", type=Path, default=Path("results"))

    p = sub.add_parser("profile", help="time the prediction pipeline")
    add_config(p)
    p.add_argument("--reps", type=int, default=50)

    p = sub.add_parser("default-config", help="print the full effective config JSON")

    return parser


def _load_config(args) -> harness.ScenarioConfig:
    if getattr(args, "config", None):
        cfg = harness.read_config(args.config)
    else:
        cfg = harness.ScenarioConfig.default()
    seed = getattr(args, "seed", None)
    if seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, pile=replace(cfg.pile, seed=seed), seeds=(seed,))
    return cfg


def _jobs_value(args) -> int:
    if getattr(args, "jobs", None):
        return max(1, args.jobs)
    env = os.environ.get("LOADPLAN_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _cmd_generate_pile(args) -> int:
    cfg = _load_config(args)
    field = harness.build_initial_field(cfg, cfg.pile.seed)
    write_hfld(field, args.out)
    if args.csv:
        write_csv(field, args.csv)
    print(f"wrote {args.out} ({field.nx}x{field.ny} cells, "
          f"volume {field.volume():.1f} m3)")
    return 0


def _cmd_precompute(args) -> int:
    cfg = _load_config(args)
    started = time.perf_counter()
    lut = harness.build_scenario_lut(cfg)
    write_vlut(lut, args.out)
    nodes = lut.table.shape[0] * lut.table.shape[1] * lut.table.shape[2]
    print(f"wrote {args.out} ({nodes} nodes in {time.perf_counter() - started:.1f} s)")
    return 0


def _cmd_plan(args) -> int:
    cfg = _load_config(args)
    lut = read_vlut(args.lut) if args.lut else harness.build_scenario_lut(cfg)
    field = read_hfld(args.pile) if args.pile else \
        harness.build_initial_field(cfg, cfg.pile.seed)
    depth = args.depth if args.strategy == "tree" else 1
    result = harness.run_single(cfg, lut, args.strategy, depth,
                                cfg.pile.seed, field=field)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    label = result.key.label
    log_path = args.out_dir / f"plan_{label}_seed{cfg.pile.seed}.csv"
    lines = [",".join(harness.PLAN_LOG_COLUMNS)]
    for row in result.rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(log_path, "\n".join(lines) + "\n")
    stats_path = args.out_dir / f"stats_{label}_seed{cfg.pile.seed}.json"
    atomic_write_text(stats_path, json.dumps({
        "predictions_total": result.totals["predictions"],
        "predictions_per_cycle": result.predictions_per_cycle,
        "wall_time_s": result.wall_time,
        "termination": result.termination,
        "totals": result.totals,
    }, indent=2) + "\n")
    print(f"{label}: {result.totals['cycles']} cycles, "
          f"objective {result.totals['objective']:.2f}, "
          f"mass {result.totals['mass_kg'] / 1000:.1f} t -> {log_path}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _load_config(args)
    jobs = _jobs_value(args)
    lut = read_vlut(args.lut) if args.lut else None
    started = time.perf_counter()
    result = harness.run_experiment(cfg, jobs=jobs, lut=lut)
    result.validate()
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    harness.write_run_csv(result, out / "runs.csv")
    harness.write_aggregate_csv(result, out / "aggregates.csv")
    harness.write_plan_logs(result, out / "plans")
    if sum(1 for k in result.aggregates if k.startswith("tree_d")) >= 2:
        harness.depth_sweep_report(result, out / "depth_sweep.csv",
                                   out / "depth_sweep.svg")
    if len(result.aggregates) >= 2:
        harness.strategy_report(result, out / "strategies.csv",
                                out / "strategies.svg")
    print(f"experiment: {len(result.runs)} runs in "
          f"{time.perf_counter() - started:.1f} s -> {out}")
    return 0


def _cmd_profile(args) -> int:
    cfg = _load_config(args)
    model = AnalyticSurrogate(cfg.surrogate)
    field = harness.build_initial_field(cfg, cfg.pile.seed)
    from .planner import listup
    cands = listup(field, cfg.region, cfg.spacing)
    if not cands:
        print("no dig candidates on the configured pile", file=sys.stderr)
        return 2
    dig = cands[len(cands) // 2].pose
    action = LoadAction()
    # A reduced lattice around the probe dig keeps the lookup timing honest
    # without the full precompute.
    import numpy as np
    nose = (cfg.dump_pose[0], cfg.dump_pose[1], cfg.dump_pose[2] + math.pi)
    from .vturn import build_lut
    lut = build_lut(nose, np.array([dig.x - 1, dig.x, dig.x + 1]),
                    np.array([dig.y - 1, dig.y, dig.y + 1]),
                    np.array([dig.heading - 0.3, dig.heading, dig.heading + 0.3]),
                    cfg.gamma, cfg.vehicle, box=cfg.box)

    timings: dict[str, list[float]] = {}

    def record(name, fn, reps):
        samples = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fn()
            samples.append((time.perf_counter() - t0) * 1e3)
        timings[name] = samples

    patch36 = cutout(field, dig.as_tuple(), PERF_PATCH_N, PERF_PATCH_SIDE)
    record("cutout", lambda: cutout(field, dig.as_tuple(), PILE_PATCH_N,
                                    PILE_PATCH_SIDE), args.reps)
    record("pile_predict", lambda: model.predict_pile(field, dig, action), args.reps)
    record("perf_predict", lambda: model.predict_performance(field, dig, action,
                                                             cfg.norm), args.reps)
    record("optimize_action", lambda: optimize_action_on_patch(
        model, patch36.heights, cfg.norm, cfg.optimizer), args.reps)
    record("lut_lookup", lambda: lut_lookup(lut, dig.as_tuple(), 2500.0), args.reps)
    record("plan_vturn", lambda: plan_vturn(nose, dig.as_tuple(), cfg.gamma,
                                            cfg.box), max(3, args.reps // 10))

    def cycle():
        model.predict_pile(field, dig, action)
        optimize_action_on_patch(model, patch36.heights, cfg.norm, cfg.optimizer)
        lut_lookup(lut, dig.as_tuple(), 2500.0)
        lut_lookup(lut, dig.as_tuple(), 0.0)

    record("loading_cycle_prediction", cycle, args.reps)

    print(f"{'function':<26}{'mean [ms]':>12}{'p95 [ms]':>12}")
    for name, samples in timings.items():
        ordered = sorted(samples)
        p95 = ordered[min(len(ordered) - 1, int(0.95 * len(ordered)))]
        print(f"{name:<26}{statistics.mean(samples):>12.2f}{p95:>12.2f}")
    mean_cycle = statistics.mean(timings["loading_cycle_prediction"])
    if mean_cycle > PREDICTION_BUDGET_MS:
        print(f"budget exceeded: {mean_cycle:.1f} ms > {PREDICTION_BUDGET_MS} ms",
              file=sys.stderr)
        return 2
    print(f"budget ok: {mean_cycle:.1f} ms <= {PREDICTION_BUDGET_MS} ms")
    return 0


def _cmd_default_config(args) -> int:
    print(json.dumps(harness.config_to_json_dict(
        harness.ScenarioConfig.default()), indent=2))
    return 0


_COMMANDS = {
    "generate-pile": _cmd_generate_pile,
    "precompute-vturns": _cmd_precompute,
    "plan": _cmd_plan,
    "experiment": _cmd_experiment,
    "profile": _cmd_profile,
    "default-config": _cmd_default_config,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.verbose:
        cfg = _load_config(args) if args.command != "default-config" else \
            harness.ScenarioConfig.default()
        print(json.dumps(harness.config_to_json_dict(cfg), indent=2))
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
