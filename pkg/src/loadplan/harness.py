"""Scenario configuration and the seeded experiment runner.

A scenario bundles the pile recipe, grid, transport geometry, model
parameters, and the list of strategies/depths and seeds to run.  Scenarios
serialise to a single JSON document whose keys carry explicit units; the
effective configuration is always written in full (no hidden defaults).

``run_experiment`` generates one pile per seed, runs every requested planner
variant, and aggregates totals across seeds.  Runs are embarrassingly
parallel over (seed, variant); results are reduced in a fixed order so output
files are byte-identical regardless of worker count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dataclass_field, replace
from pathlib import Path

import numpy as np

from ._util import atomic_write_text
from .charts import Series, line_chart_group, svg_document
from .heightfield import GridSpec, HeightField, PileSpec, generate_pile, settle
from .planner import (
    PlannerConfig,
    PlanStep,
    SearchStats,
    listup,
    plan_log_rows,
    PLAN_LOG_COLUMNS,
    strategy_greedy,
    strategy_max_loading,
    strategy_nominal,
    tree_search,
)
from .vturn import VehicleParams, VTurnLUT, build_lut
from .worldmodel import AnalyticSurrogate, Normalization, OptimizerOptions, SurrogateParams

STRATEGY_NAMES = ("greedy", "max_loading", "nominal")


@dataclass(frozen=True)
class ScenarioConfig:
    """Full experiment description; see ``default()`` for the benchmark."""

    grid: GridSpec
    pile: PileSpec
    dump_pose: tuple[float, float, float]  # heading = outward backing direction
    region: tuple[float, float, float, float]
    spacing: float
    cycles: int
    depths: tuple[int, ...]
    strategies: tuple[str, ...]
    seeds: tuple[int, ...]
    norm: Normalization
    surrogate: SurrogateParams
    vehicle: VehicleParams
    gamma: tuple[float, float, float]
    box: tuple[float, float]
    lut_xy_step: float = 1.0
    lut_heading_step: float = math.radians(15.0)
    lut_heading_span: float = math.radians(45.0)
    optimizer: OptimizerOptions = OptimizerOptions()

    def __post_init__(self):
        for s in self.strategies:
            if s not in STRATEGY_NAMES:
                raise ValueError(f"unknown strategy {s!r}")
        if not self.seeds:
            raise ValueError("at least one seed required")
        for d in self.depths:
            if not 1 <= d <= self.cycles:
                raise ValueError(f"depth {d} outside [1, {self.cycles}]")

    @classmethod
    def default(cls) -> "ScenarioConfig":
        return cls(
            grid=GridSpec(nx=330, ny=240, cell=0.1, origin=(-16.0, -8.0)),
            pile=PileSpec(),
            dump_pose=(-12.0, -3.0, math.radians(-30.0)),
            region=(-5.0, 8.0, 0.0, 6.0),
            spacing=1.0,
            cycles=15,
            depths=(1, 4, 6),
            strategies=STRATEGY_NAMES,
            seeds=tuple(range(10)),
            norm=Normalization(),
            surrogate=SurrogateParams(),
            vehicle=VehicleParams(),
            gamma=(10.0, 10.0, 1.0),
            box=(5.0, 10.0),
        )


# ---------------------------------------------------------------------------
# JSON round-trip with explicit units in key names


def config_to_json_dict(cfg: ScenarioConfig) -> dict:
    deg = math.degrees
    return {
        "grid": {
            "nx": cfg.grid.nx,
            "ny": cfg.grid.ny,
            "cell_m": cfg.grid.cell,
            "origin_m": list(cfg.grid.origin),
        },
        "pile": {
            "crest_height_m": cfg.pile.crest_height,
            "front_slope_deg": deg(cfg.pile.front_slope),
            "noise_amplitude_m": cfg.pile.noise_amplitude,
            "noise_frequency_per_m": cfg.pile.noise_frequency,
            "noise_octaves": cfg.pile.noise_octaves,
            "seed": cfg.pile.seed,
            "toe_y_m": cfg.pile.toe_y,
            "top_length_m": cfg.pile.top_length,
        },
        "dump_pose_m_deg": [cfg.dump_pose[0], cfg.dump_pose[1], deg(cfg.dump_pose[2])],
        "dig_region_m": {
            "x_min": cfg.region[0], "x_max": cfg.region[1],
            "y_min": cfg.region[2], "y_max": cfg.region[3],
        },
        "candidate_spacing_m": cfg.spacing,
        "cycles": cfg.cycles,
        "depths": list(cfg.depths),
        "strategies": list(cfg.strategies),
        "seeds": list(cfg.seeds),
        "normalization": {
            "mass_ref_kg": cfg.norm.mass_ref,
            "time_ref_s": cfg.norm.time_ref,
            "work_ref_J": cfg.norm.work_ref,
            "weights": list(cfg.norm.weights),
        },
        "surrogate": {
            "bucket_width_m": cfg.surrogate.bucket_width,
            "bucket_capacity_m3": cfg.surrogate.bucket_capacity,
            "soil_density_kg_m3": cfg.surrogate.soil_density,
            "repose_deg": deg(cfg.surrogate.repose),
            "max_penetration_m": cfg.surrogate.max_penetration,
            "base_time_s": cfg.surrogate.base_time,
            "time_per_metre_s": cfg.surrogate.time_per_metre,
            "fill_time_s": cfg.surrogate.fill_time,
            "cut_work_J_m3": cfg.surrogate.cut_work,
            "lift_work_J_kg": cfg.surrogate.lift_work,
            "berm_width_m": cfg.surrogate.berm_width,
            "gravity_m_s2": cfg.surrogate.gravity,
        },
        "vehicle": {
            "mass_kg": cfg.vehicle.mass_vehicle,
            "rolling_resistance": cfg.vehicle.mu_r,
            "gravity_m_s2": cfg.vehicle.g,
            "target_speed_km_h": cfg.vehicle.target_speed * 3.6,
            "approach_speed_km_h": cfg.vehicle.approach_speed * 3.6,
            "approach_window_m": cfg.vehicle.approach_window,
            "throttle_rate_per_s": cfg.vehicle.throttle_rate,
            "max_traction_N": cfg.vehicle.max_traction,
            "brake_decel_m_s2": cfg.vehicle.brake_decel,
            "dt_s": cfg.vehicle.dt,
        },
        "path_weights": list(cfg.gamma),
        "switchback_box_m": {"offset": cfg.box[0], "side": cfg.box[1]},
        "vturn_lut": {
            "xy_step_m": cfg.lut_xy_step,
            "heading_step_deg": deg(cfg.lut_heading_step),
            "heading_span_deg": deg(cfg.lut_heading_span),
        },
        "optimizer": {
            "step": cfg.optimizer.step,
            "fd_step": cfg.optimizer.fd_step,
            "max_iters": cfg.optimizer.max_iters,
            "patience": cfg.optimizer.patience,
            "tol": cfg.optimizer.tol,
            "init": list(cfg.optimizer.init),
        },
    }


def config_from_json_dict(doc: dict) -> ScenarioConfig:
    rad = math.radians
    g = doc["grid"]
    p = doc["pile"]
    n = doc["normalization"]
    s = doc["surrogate"]
    v = doc["vehicle"]
    o = doc["optimizer"]
    lut = doc["vturn_lut"]
    region = doc["dig_region_m"]
    dump = doc["dump_pose_m_deg"]
    return ScenarioConfig(
        grid=GridSpec(g["nx"], g["ny"], g["cell_m"], tuple(g["origin_m"])),
        pile=PileSpec(
            crest_height=p["crest_height_m"],
            front_slope=rad(p["front_slope_deg"]),
            noise_amplitude=p["noise_amplitude_m"],
            noise_frequency=p["noise_frequency_per_m"],
            noise_octaves=p["noise_octaves"],
            seed=p["seed"],
            toe_y=p["toe_y_m"],
            top_length=p["top_length_m"],
        ),
        dump_pose=(dump[0], dump[1], rad(dump[2])),
        region=(region["x_min"], region["x_max"], region["y_min"], region["y_max"]),
        spacing=doc["candidate_spacing_m"],
        cycles=doc["cycles"],
        depths=tuple(doc["depths"]),
        strategies=tuple(doc["strategies"]),
        seeds=tuple(doc["seeds"]),
        norm=Normalization(n["mass_ref_kg"], n["time_ref_s"], n["work_ref_J"],
                           tuple(n["weights"])),
        surrogate=SurrogateParams(
            bucket_width=s["bucket_width_m"],
            bucket_capacity=s["bucket_capacity_m3"],
            soil_density=s["soil_density_kg_m3"],
            repose=rad(s["repose_deg"]),
            max_penetration=s["max_penetration_m"],
            base_time=s["base_time_s"],
            time_per_metre=s["time_per_metre_s"],
            fill_time=s["fill_time_s"],
            cut_work=s["cut_work_J_m3"],
            lift_work=s["lift_work_J_kg"],
            berm_width=s["berm_width_m"],
            gravity=s["gravity_m_s2"],
        ),
        vehicle=VehicleParams(
            mass_vehicle=v["mass_kg"],
            mu_r=v["rolling_resistance"],
            g=v["gravity_m_s2"],
            target_speed=v["target_speed_km_h"] / 3.6,
            approach_speed=v["approach_speed_km_h"] / 3.6,
            approach_window=v["approach_window_m"],
            throttle_rate=v["throttle_rate_per_s"],
            max_traction=v["max_traction_N"],
            brake_decel=v["brake_decel_m_s2"],
            dt=v["dt_s"],
        ),
        gamma=tuple(doc["path_weights"]),
        box=(doc["switchback_box_m"]["offset"], doc["switchback_box_m"]["side"]),
        lut_xy_step=lut["xy_step_m"],
        lut_heading_step=rad(lut["heading_step_deg"]),
        lut_heading_span=rad(lut["heading_span_deg"]),
        optimizer=OptimizerOptions(
            step=o["step"], fd_step=o["fd_step"], max_iters=o["max_iters"],
            patience=o["patience"], tol=o["tol"], init=tuple(o["init"]),
        ),
    )


def write_config(cfg: ScenarioConfig, path) -> None:
    atomic_write_text(path, json.dumps(config_to_json_dict(cfg), indent=2) + "\n")


def read_config(path) -> ScenarioConfig:
    return config_from_json_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Scenario assembly


def build_initial_field(cfg: ScenarioConfig, seed: int) -> HeightField:
    """Seeded pile, settled once so the start state respects the repose cap."""
    pile = replace(cfg.pile, seed=seed)
    field = generate_pile(pile, cfg.grid)
    return settle(field, cfg.surrogate.repose)


def reference_heading(cfg: ScenarioConfig) -> float:
    """Centre of the lookup-table heading axis: the median contour normal of
    the noise-free pile (stable across seeds)."""
    bare = replace(cfg.pile, noise_amplitude=0.0)
    field = generate_pile(bare, cfg.grid)
    cands = listup(field, cfg.region, cfg.spacing)
    if not cands:
        return math.pi / 2
    headings = sorted(c.pose.heading for c in cands)
    return headings[len(headings) // 2]


def build_scenario_lut(cfg: ScenarioConfig) -> VTurnLUT:
    """Transport cost table over the dig region.

    The configured dump heading is the outward backing direction at the
    receiver; the parked vehicle noses the other way, which is the pose the
    V-turn planner anchors to.
    """
    nose = (cfg.dump_pose[0], cfg.dump_pose[1], cfg.dump_pose[2] + math.pi)
    x_axis = np.arange(cfg.region[0], cfg.region[1] + 1e-9, cfg.lut_xy_step)
    y_axis = np.arange(cfg.region[2], cfg.region[3] + 1e-9, cfg.lut_xy_step)
    centre = reference_heading(cfg)
    n_side = int(round(cfg.lut_heading_span / cfg.lut_heading_step))
    offsets = np.arange(-n_side, n_side + 1) * cfg.lut_heading_step
    heading_axis = centre + offsets
    ref_mass = cfg.surrogate.soil_density * cfg.surrogate.bucket_capacity
    return build_lut(nose, x_axis, y_axis, heading_axis, cfg.gamma, cfg.vehicle,
                     box=cfg.box, ref_mass=ref_mass)


def make_planner_config(cfg: ScenarioConfig, lut: VTurnLUT) -> PlannerConfig:
    return PlannerConfig(
        model=AnalyticSurrogate(cfg.surrogate),
        lut=lut,
        norm=cfg.norm,
        region=cfg.region,
        spacing=cfg.spacing,
        optimizer=cfg.optimizer,
    )


# ---------------------------------------------------------------------------
# Experiment runner


@dataclass(frozen=True)
class RunKey:
    strategy: str   # greedy | max_loading | nominal | tree
    depth: int      # 1 for single-step strategies
    seed: int

    @property
    def label(self) -> str:
        if self.strategy == "tree":
            return f"tree_d{self.depth}"
        return self.strategy


@dataclass
class RunResult:
    key: RunKey
    rows: list
    predictions_per_cycle: list
    totals: dict
    termination: str
    wall_time: float


@dataclass
class ExperimentResult:
    config: ScenarioConfig
    runs: list[RunResult]
    aggregates: dict  # label -> {metric: value}

    def validate(self) -> None:
        """Aggregates must be recomputable from the raw per-run totals."""
        recomputed = aggregate_runs(self.runs)
        for label, stats in self.aggregates.items():
            for metric, value in stats.items():
                ref = recomputed[label][metric]
                if abs(ref - value) > 1e-12 * max(1.0, abs(ref)):
                    raise AssertionError(
                        f"aggregate mismatch {label}/{metric}: {value} vs {ref}"
                    )


def _plan_variants(cfg: ScenarioConfig) -> list[tuple[str, int]]:
    variants = [(s, 1) for s in cfg.strategies]
    variants.extend(("tree", d) for d in cfg.depths)
    return variants


def run_single(cfg: ScenarioConfig, lut: VTurnLUT, strategy: str, depth: int,
               seed: int, field: HeightField | None = None) -> RunResult:
    if field is None:
        field = build_initial_field(cfg, seed)
    pconfig = make_planner_config(cfg, lut)
    dump = cfg.dump_pose
    if strategy == "greedy":
        steps, stats = strategy_greedy(field, dump, cfg.cycles, pconfig)
    elif strategy == "max_loading":
        steps, stats = strategy_max_loading(field, dump, cfg.cycles, pconfig)
    elif strategy == "nominal":
        steps, stats = strategy_nominal(field, dump, cfg.cycles, pconfig)
    elif strategy == "tree":
        steps, stats = tree_search(field, dump, cfg.cycles, depth, pconfig)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    rows = plan_log_rows(steps, stats)
    totals = {
        "cycles": len(steps),
        "mass_kg": sum(s.perf_load.mass for s in steps),
        "load_time_s": sum(s.perf_load.time for s in steps),
        "load_work_J": sum(s.perf_load.work for s in steps),
        "vturn_time_s": sum(s.v1.time + s.v2.time for s in steps),
        "vturn_work_J": sum(s.v1.work + s.v2.work for s in steps),
        "dump_time_s": sum(s.dump_time for s in steps),
        "time_s": sum(s.perf_total.time for s in steps),
        "work_J": sum(s.perf_total.work for s in steps),
        "objective": sum(s.objective for s in steps),
        "predictions": stats.predictions_total,
    }
    return RunResult(RunKey(strategy, depth, seed), rows,
                     list(stats.predictions_per_cycle), totals,
                     stats.termination, stats.wall_time)


def _run_task(args) -> RunResult:
    cfg, lut, strategy, depth, seed, field = args
    return run_single(cfg, lut, strategy, depth, seed, field)


_AGG_METRICS = ("mass_kg", "load_time_s", "load_work_J", "vturn_time_s",
                "vturn_work_J", "dump_time_s", "time_s", "work_J",
                "objective", "predictions")


def aggregate_runs(runs: list[RunResult]) -> dict:
    by_label: dict = {}
    for run in runs:
        by_label.setdefault(run.key.label, []).append(run)
    aggregates = {}
    for label in sorted(by_label):
        group = by_label[label]
        stats = {"n_runs": float(len(group))}
        for metric in _AGG_METRICS:
            values = np.array([r.totals[metric] for r in group], dtype=np.float64)
            stats[f"{metric}_mean"] = float(values.mean())
            stats[f"{metric}_std"] = float(values.std(ddof=0))
        depth_set = {r.key.depth for r in group}
        stats["depth"] = float(depth_set.pop()) if len(depth_set) == 1 else float("nan")
        aggregates[label] = stats
    return aggregates


def run_experiment(cfg: ScenarioConfig, *, jobs: int = 1,
                   lut: VTurnLUT | None = None,
                   initial_fields: dict | None = None) -> ExperimentResult:
    """Run every (strategy/depth, seed) combination and aggregate.

    ``lut`` may carry a precomputed transport table (it is deterministic for a
    given config, so reuse is a pure cache).  ``initial_fields`` optionally
    maps seeds to externally supplied piles, overriding pile generation.
    Results are identical for any ``jobs`` value.
    """
    if lut is None:
        lut = build_scenario_lut(cfg)
    initial_fields = initial_fields or {}
    tasks = []
    for seed in cfg.seeds:
        for strategy, depth in _plan_variants(cfg):
            tasks.append((cfg, lut, strategy, depth, seed, initial_fields.get(seed)))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        results = [_run_task(t) for t in tasks]
    results.sort(key=lambda r: (r.key.label, r.key.seed))
    return ExperimentResult(cfg, results, aggregate_runs(results))


# ---------------------------------------------------------------------------
# Output files


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_run_csv(result: ExperimentResult, path) -> None:
    """One row per (variant, seed) with run totals."""
    header = ("strategy", "depth", "seed", "cycles", "terminated",
              "mass_kg", "load_time_s", "load_work_J", "vturn_time_s",
              "vturn_work_J", "dump_time_s", "time_s", "work_J", "objective",
              "predictions")
    lines = [",".join(header)]
    for run in result.runs:
        t = run.totals
        lines.append(",".join(_fmt_cell(v) for v in (
            run.key.label, run.key.depth, run.key.seed, t["cycles"],
            run.termination, t["mass_kg"], t["load_time_s"], t["load_work_J"],
            t["vturn_time_s"], t["vturn_work_J"], t["dump_time_s"],
            t["time_s"], t["work_J"], t["objective"], t["predictions"],
        )))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_aggregate_csv(result: ExperimentResult, path) -> None:
    metrics = ["n_runs", "depth"] + [f"{m}_{s}" for m in _AGG_METRICS
                                     for s in ("mean", "std")]
    lines = [",".join(["label"] + metrics)]
    for label in sorted(result.aggregates):
        stats = result.aggregates[label]
        lines.append(",".join([label] + [_fmt_cell(stats[m]) for m in metrics]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_plan_logs(result: ExperimentResult, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for run in result.runs:
        path = directory / f"plan_{run.key.label}_seed{run.key.seed}.csv"
        lines = [",".join(PLAN_LOG_COLUMNS)]
        for row in run.rows:
            lines.append(",".join(_fmt_cell(v) for v in row))
        atomic_write_text(path, "\n".join(lines) + "\n")
        written.append(path)
    return written


def depth_sweep_report(result: ExperimentResult, csv_path, svg_path=None) -> None:
    """Totals versus search depth (mean across seeds) as CSV plus line chart."""
    rows = []
    for label in sorted(result.aggregates):
        if not label.startswith("tree_d"):
            continue
        stats = result.aggregates[label]
        rows.append((
            int(stats["depth"]),
            stats["objective_mean"],
            stats["objective_std"],
            stats["mass_kg_mean"] / 1000.0,
            stats["time_s_mean"],
            stats["work_J_mean"] / 1e6,
            stats["predictions_mean"],
        ))
    rows.sort(key=lambda r: r[0])
    header = "depth,obj_mean,obj_std,mass_t,time_s,work_MJ,predictions"
    lines = [header] + [",".join(_fmt_cell(v) for v in row) for row in rows]
    atomic_write_text(csv_path, "\n".join(lines) + "\n")

    if svg_path is None:
        return
    if len(rows) < 2:
        raise ValueError("depth sweep chart needs at least two depths")
    depths = tuple(r[0] for r in rows)
    panels = [
        line_chart_group([Series("total objective", depths, tuple(r[1] for r in rows))],
                         "Total objective vs search depth", "depth", "objective"),
        line_chart_group([Series("predictions", depths, tuple(r[6] for r in rows))],
                         "World-model predictions vs search depth", "depth", "predictions"),
    ]
    atomic_write_text(svg_path, svg_document(panels))


def strategy_report(result: ExperimentResult, csv_path, svg_path=None) -> None:
    """Per-strategy totals split by subtask, units tonne/s/MJ, plus per-cycle
    series charts (mean across seeds)."""
    header = ("strategy,mass_tonne,load_time_s,load_work_MJ,vturn_time_s,"
              "vturn_work_MJ,dump_time_s,total_time_s,total_work_MJ,objective")
    labels = sorted(result.aggregates)
    lines = [header]
    for label in labels:
        stats = result.aggregates[label]
        lines.append(",".join(_fmt_cell(v) for v in (
            label,
            stats["mass_kg_mean"] / 1000.0,
            stats["load_time_s_mean"],
            stats["load_work_J_mean"] / 1e6,
            stats["vturn_time_s_mean"],
            stats["vturn_work_J_mean"] / 1e6,
            stats["dump_time_s_mean"],
            stats["time_s_mean"],
            stats["work_J_mean"] / 1e6,
            stats["objective_mean"],
        )))
    atomic_write_text(csv_path, "\n".join(lines) + "\n")

    if svg_path is None:
        return
    by_label: dict = {}
    for run in result.runs:
        by_label.setdefault(run.key.label, []).append(run)
    col = {name: i for i, name in enumerate(PLAN_LOG_COLUMNS)}

    def per_cycle_series(label: str, column: str, scale: float) -> Series:
        runs = by_label[label]
        cycles = min(len(r.rows) for r in runs)
        xs = tuple(range(1, cycles + 1))
        ys = []
        for n in range(cycles):
            ys.append(sum(r.rows[n][col[column]] for r in runs) / len(runs) * scale)
        return Series(label, xs, tuple(ys))

    panels = []
    for column, title, ylabel, scale in (
        ("M", "Loaded mass per cycle", "mass [tonne]", 1e-3),
        ("T_total", "Cycle time per cycle", "time [s]", 1.0),
        ("W_total", "Cycle work per cycle", "work [MJ]", 1e-6),
    ):
        series = [per_cycle_series(label, column, scale) for label in labels
                  if by_label[label] and min(len(r.rows) for r in by_label[label]) > 0]
        panels.append(line_chart_group(series, title, "cycle", ylabel))
    atomic_write_text(svg_path, svg_document(panels))
