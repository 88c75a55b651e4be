#!/usr/bin/env python3
"""Run the documented benchmark scenario end to end and emit all reports.

Equivalent to `loadplan experiment` with the built-in configuration, plus a
console summary of the strategy ordering and depth sweep.  A precomputed
V-turn table can be reused to skip the ~1 minute precompute.

    python scripts/run_benchmark.py --out results/ [--jobs N] [--lut turns.vlut]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from loadplan import harness
from loadplan.vturn import read_vlut, write_vlut


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("--jobs", type=int, default=2)
    parser.add_argument("--lut", type=Path, help="reuse a precomputed VLUT")
    parser.add_argument("--config", type=Path, help="scenario JSON override")
    args = parser.parse_args()

    cfg = harness.read_config(args.config) if args.config else \
        harness.ScenarioConfig.default()
    args.out.mkdir(parents=True, exist_ok=True)
    harness.write_config(cfg, args.out / "scenario.json")

    if args.lut and args.lut.exists():
        lut = read_vlut(args.lut)
        print(f"loaded transport table from {args.lut}")
    else:
        print("precomputing transport table ...")
        t0 = time.perf_counter()
        lut = harness.build_scenario_lut(cfg)
        print(f"  done in {time.perf_counter() - t0:.1f} s")
        if args.lut:
            write_vlut(lut, args.lut)

    print(f"running {len(cfg.seeds)} seeds x "
          f"{len(cfg.strategies) + len(cfg.depths)} variants ...")
    t0 = time.perf_counter()
    result = harness.run_experiment(cfg, jobs=args.jobs, lut=lut)
    result.validate()
    print(f"  done in {time.perf_counter() - t0:.1f} s")

    harness.write_run_csv(result, args.out / "runs.csv")
    harness.write_aggregate_csv(result, args.out / "aggregates.csv")
    harness.write_plan_logs(result, args.out / "plans")
    harness.depth_sweep_report(result, args.out / "depth_sweep.csv",
                               args.out / "depth_sweep.svg")
    harness.strategy_report(result, args.out / "strategies.csv",
                            args.out / "strategies.svg")

    print()
    print(f"{'variant':<12}{'objective':>12}{'mass [t]':>10}{'time [s]':>10}"
          f"{'work [MJ]':>11}{'predictions':>13}")
    for label in sorted(result.aggregates):
        s = result.aggregates[label]
        print(f"{label:<12}{s['objective_mean']:>12.2f}"
              f"{s['mass_kg_mean'] / 1000:>10.1f}{s['time_s_mean']:>10.0f}"
              f"{s['work_J_mean'] / 1e6:>11.2f}{s['predictions_mean']:>13.0f}")

    agg = result.aggregates
    if "tree_d4" in agg and "greedy" in agg and "nominal" in agg:
        g = agg["greedy"]["objective_mean"]
        t = agg["tree_d4"]["objective_mean"]
        n = agg["nominal"]["objective_mean"]
        print()
        print(f"look-ahead vs greedy: {(g - t) / g * 100:+.2f}%")
        print(f"greedy vs nominal:    {(n - g) / n * 100:+.2f}%")
    print(f"\nreports in {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
