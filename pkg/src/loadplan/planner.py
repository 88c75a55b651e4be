"""Dig-location planning over the evolving pile.

listup discretises the pile toe contour into candidate dig poses.  The tree
search evaluates each candidate by its own predicted cycle cost plus a greedy
rollout of future cycles on predicted pile states, then commits the best and
repeats over the horizon.  Three single-step strategies (greedy, maximum
loading, nominal) share the same commit loop with different selection keys.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.ndimage import gaussian_filter

from ._util import atomic_write_text, wrap_angle
from .heightfield import HeightField, footprint_in_bounds
from .worldmodel import (
    PERF_PATCH_N,
    PERF_PATCH_SIDE,
    PILE_PATCH_N,
    PILE_PATCH_SIDE,
    AnalyticSurrogate,
    DigPose,
    LoadAction,
    Normalization,
    OptimizerOptions,
    PerformanceTriple,
    objective,
    optimize_action_on_patch,
)
from .vturn import VTurnCost, VTurnLUT, lut_lookup
from .heightfield import cutout

DUMP_TIME_S = 5.0
CONTOUR_ISO = 0.15


@dataclass(frozen=True)
class DigCandidate:
    pose: DigPose
    index: int


@dataclass(frozen=True)
class PlanStep:
    """One committed loading cycle."""

    cycle: int
    candidate: DigCandidate
    action: LoadAction
    perf_load: PerformanceTriple
    v1: VTurnCost
    v2: VTurnCost
    dump_time: float
    perf_total: PerformanceTriple
    objective: float
    q_value: float
    field_after: HeightField


@dataclass
class SearchStats:
    predictions_total: int = 0
    predictions_per_cycle: list = dataclass_field(default_factory=list)
    wall_time: float = 0.0
    termination: str = "completed"


@dataclass(frozen=True)
class PlannerConfig:
    """Everything a plan run needs besides the field and horizon."""

    model: AnalyticSurrogate
    lut: VTurnLUT
    norm: Normalization
    region: tuple[float, float, float, float]
    spacing: float = 1.0
    iso: float = CONTOUR_ISO
    smooth_sigma: float = 0.3
    optimizer: OptimizerOptions = OptimizerOptions()
    nominal_action: tuple = (1.0, 0.0, 0.5, 0.5)
    rollout_fixed_action: bool = False


# ---------------------------------------------------------------------------
# Contour extraction

# Marching-squares case table: corner bit order A=(i,j), B=(i+1,j),
# C=(i+1,j+1), D=(i,j+1); edges are AB, BC, CD, DA.
_CASE_EDGES = {
    1: (("AB", "DA"),),
    2: (("AB", "BC"),),
    3: (("BC", "DA"),),
    4: (("BC", "CD"),),
    6: (("AB", "CD"),),
    7: (("CD", "DA"),),
    8: (("CD", "DA"),),
    9: (("AB", "CD"),),
    11: (("BC", "CD"),),
    12: (("BC", "DA"),),
    13: (("AB", "BC"),),
    14: (("AB", "DA"),),
}


def _edge_point(edge: str, i: int, j: int, h: np.ndarray, iso: float):
    if edge == "AB":
        a, b = h[i, j], h[i + 1, j]
        t = (iso - a) / (b - a)
        return (i + t, float(j))
    if edge == "BC":
        a, b = h[i + 1, j], h[i + 1, j + 1]
        t = (iso - a) / (b - a)
        return (float(i + 1), j + t)
    if edge == "CD":
        a, b = h[i, j + 1], h[i + 1, j + 1]
        t = (iso - a) / (b - a)
        return (i + t, float(j + 1))
    a, b = h[i, j], h[i, j + 1]
    t = (iso - a) / (b - a)
    return (float(i), j + t)


def _contour_segments(h: np.ndarray, iso: float) -> list:
    above = h >= iso
    a = above[:-1, :-1]
    b = above[1:, :-1]
    c = above[1:, 1:]
    d = above[:-1, 1:]
    case = a + 2 * b + 4 * c + 8 * d
    cells = np.argwhere((case > 0) & (case < 15))
    segments = []
    for i, j in cells:
        code = int(case[i, j])
        if code in (5, 10):
            centre = 0.25 * (h[i, j] + h[i + 1, j] + h[i, j + 1] + h[i + 1, j + 1])
            if code == 5:
                pairs = (("AB", "BC"), ("CD", "DA")) if centre >= iso else \
                    (("AB", "DA"), ("BC", "CD"))
            else:
                pairs = (("AB", "DA"), ("BC", "CD")) if centre >= iso else \
                    (("AB", "BC"), ("CD", "DA"))
        else:
            pairs = _CASE_EDGES[code]
        for e0, e1 in pairs:
            segments.append((
                _edge_point(e0, i, j, h, iso),
                _edge_point(e1, i, j, h, iso),
            ))
    return segments


def _chain_polylines(segments: list) -> list:
    """Join segments into polylines via shared endpoints, deterministically."""

    def key(pt):
        return (round(pt[0] * 1e6), round(pt[1] * 1e6))

    endpoint_map: dict = {}
    for idx, (p0, p1) in enumerate(segments):
        endpoint_map.setdefault(key(p0), []).append((idx, 0))
        endpoint_map.setdefault(key(p1), []).append((idx, 1))

    used = [False] * len(segments)
    polylines = []

    def walk(start_idx: int, start_end: int):
        pts = [segments[start_idx][start_end], segments[start_idx][1 - start_end]]
        used[start_idx] = True
        while True:
            k = key(pts[-1])
            nxt = [(i, e) for i, e in endpoint_map.get(k, []) if not used[i]]
            if not nxt:
                return pts
            i, e = nxt[0]
            used[i] = True
            pts.append(segments[i][1 - e])

    # Open chains first, started from their dangling ends in sorted order.
    degree = {k: len(v) for k, v in endpoint_map.items()}
    for k in sorted(endpoint_map):
        if degree[k] != 1:
            continue
        for i, e in endpoint_map[k]:
            if not used[i]:
                polylines.append(walk(i, e))
    # Remaining loops.
    for idx in range(len(segments)):
        if not used[idx]:
            polylines.append(walk(idx, 0))
    return polylines


def listup(field: HeightField, region: tuple[float, float, float, float],
           dx: float = 1.0, *, iso: float = CONTOUR_ISO,
           smooth_sigma: float = 0.3) -> list[DigCandidate]:
    """Candidate dig poses on the pile toe contour.

    Extracts the iso-contour ``iso`` above ground on a sub-grid around the
    region, walks each contour polyline at arc-length spacing ``dx``, keeps
    samples inside the region, and points each heading into the pile (up the
    smoothed gradient).  Ordering follows contour arc length, so candidate
    indices are stable.  Returns an empty list when no contour crosses the
    region.
    """
    x_min, x_max, y_min, y_max = region
    margin = 2.0
    ix0 = max(int(math.floor((x_min - margin - field.origin[0]) / field.cell)), 0)
    ix1 = min(int(math.ceil((x_max + margin - field.origin[0]) / field.cell)) + 1, field.nx)
    iy0 = max(int(math.floor((y_min - margin - field.origin[1]) / field.cell)), 0)
    iy1 = min(int(math.ceil((y_max + margin - field.origin[1]) / field.cell)) + 1, field.ny)
    sub = field.heights[ix0:ix1, iy0:iy1]
    if sub.shape[0] < 2 or sub.shape[1] < 2:
        return []

    segments = _contour_segments(sub, iso)
    if not segments:
        return []
    polylines = _chain_polylines(segments)
    polylines.sort(key=lambda pts: (min(p[0] for p in pts), min(p[1] for p in pts)))

    smoothed = gaussian_filter(sub, sigma=smooth_sigma / field.cell, mode="nearest")
    grad_x, grad_y = np.gradient(smoothed, field.cell)

    def world(pt):
        return (
            field.origin[0] + (ix0 + pt[0]) * field.cell,
            field.origin[1] + (iy0 + pt[1]) * field.cell,
        )

    def grad_at(pt):
        gi = np.clip(pt[0], 0, sub.shape[0] - 1)
        gj = np.clip(pt[1], 0, sub.shape[1] - 1)
        i0 = min(int(gi), sub.shape[0] - 2)
        j0 = min(int(gj), sub.shape[1] - 2)
        fi, fj = gi - i0, gj - j0
        def bilin(g):
            return (
                g[i0, j0] * (1 - fi) * (1 - fj)
                + g[i0 + 1, j0] * fi * (1 - fj)
                + g[i0, j0 + 1] * (1 - fi) * fj
                + g[i0 + 1, j0 + 1] * fi * fj
            )
        return bilin(grad_x), bilin(grad_y)

    eps = 1e-9
    candidates = []
    for pts in polylines:
        arr = np.asarray(pts)
        seg = np.hypot(np.diff(arr[:, 0]), np.diff(arr[:, 1])) * field.cell
        arc = np.concatenate(([0.0], np.cumsum(seg)))
        total = arc[-1]
        if total < 1e-9:
            continue
        n_samples = int(math.floor(total / dx + 1e-9)) + 1
        targets = np.arange(n_samples) * dx
        sx = np.interp(targets, arc, arr[:, 0])
        sy = np.interp(targets, arc, arr[:, 1])
        for gi, gj in zip(sx, sy):
            wx, wy = world((gi, gj))
            if not (x_min - eps <= wx <= x_max + eps and y_min - eps <= wy <= y_max + eps):
                continue
            gx, gy = grad_at((gi, gj))
            norm = math.hypot(gx, gy)
            if norm < 1e-6:
                continue
            heading = math.atan2(float(gy), float(gx))
            pose = DigPose(float(wx), float(wy), heading)
            # a candidate must leave room for the wider prediction patch
            if not footprint_in_bounds(field, pose.as_tuple(), PILE_PATCH_SIDE):
                continue
            candidates.append(pose)
    return [DigCandidate(pose, i) for i, pose in enumerate(candidates)]


# ---------------------------------------------------------------------------
# Candidate evaluation


def perf_total(perf_load: PerformanceTriple, v1: VTurnCost, v2: VTurnCost,
               norm: Normalization) -> PerformanceTriple:
    """Whole-cycle performance: mass from loading only, transport times and
    works added, plus the fixed bucket-emptying time (no work)."""
    return PerformanceTriple.from_raw(
        perf_load.mass,
        perf_load.time + v1.time + v2.time + DUMP_TIME_S,
        perf_load.work + v1.work + v2.work,
        norm,
    )


@dataclass(frozen=True)
class CandidateEval:
    candidate: DigCandidate
    action: LoadAction
    perf_load: PerformanceTriple
    v1: VTurnCost
    v2: VTurnCost
    total: PerformanceTriple
    objective: float
    load_objective: float
    transport_objective: float

    @property
    def vturn_time(self) -> float:
        return self.v1.time + self.v2.time


def _lookup_clamped(lut: VTurnLUT, pose: DigPose, mass: float):
    # Contour normals can drift outside the stored heading span after digs
    # notch the pile; evaluate those at the nearest stored heading.
    h_axis = lut.heading_axis
    h0 = h_axis[0]
    heading = h0 + math.remainder(pose.heading - h0, math.tau)
    heading = min(max(heading, float(h_axis[0])), float(h_axis[-1]))
    x = min(max(pose.x, float(lut.x_axis[0])), float(lut.x_axis[-1]))
    y = min(max(pose.y, float(lut.y_axis[0])), float(lut.y_axis[-1]))
    return lut_lookup(lut, (x, y, heading), mass)


def _evaluate_candidate(field: HeightField, cand: DigCandidate, config: PlannerConfig,
                        action: LoadAction | None = None,
                        cache: dict | None = None) -> CandidateEval:
    """Predict one candidate's full cycle; optimises the action unless given.

    ``cache`` memoises optimised evaluations by (pose, patch digest): digs
    only disturb the pile locally, so most candidate patches recur unchanged
    across expansions and cycles.
    """
    model = config.model
    norm = config.norm
    patch = cutout(field, cand.pose.as_tuple(), PERF_PATCH_N, PERF_PATCH_SIDE)
    if action is None:
        key = None
        if cache is not None:
            digest = hashlib.md5(patch.heights.tobytes()).digest()
            key = (cand.pose.x, cand.pose.y, cand.pose.heading, digest)
            hit = cache.get(key)
            if hit is not None:
                action, perf_load = hit
                v1, v2 = _lookup_clamped(config.lut, cand.pose, perf_load.mass)
                total = perf_total(perf_load, v1, v2, norm)
                obj = objective(total, norm)
                w = norm.weights
                return CandidateEval(
                    cand, action, perf_load, v1, v2, total, obj,
                    objective(perf_load, norm),
                    w[1] * (v1.time + v2.time) / norm.time_ref
                    + w[2] * (v1.work + v2.work) / norm.work_ref,
                )
        a, mass, tload, wload, _ = optimize_action_on_patch(
            model, patch.heights, norm, config.optimizer
        )
        action = LoadAction.from_array(a)
        perf_load = PerformanceTriple.from_raw(mass, tload, wload, norm)
        if key is not None:
            cache[key] = (action, perf_load)
    else:
        perf_load = model.predict_performance_patch(patch, action, norm)
    v1, v2 = _lookup_clamped(config.lut, cand.pose, perf_load.mass)
    total = perf_total(perf_load, v1, v2, norm)
    obj = objective(total, norm)
    w = norm.weights
    load_obj = objective(perf_load, norm)
    transport_obj = (
        w[1] * (v1.time + v2.time) / norm.time_ref
        + w[2] * (v1.work + v2.work) / norm.work_ref
    )
    return CandidateEval(cand, action, perf_load, v1, v2, total, obj, load_obj,
                         transport_obj)


def _select(evals: list[CandidateEval], key) -> CandidateEval:
    """Deterministic argmin: key, then total V-turn time, then index."""
    return min(evals, key=lambda e: (key(e), e.vturn_time, e.candidate.index))


def _greedy_rollout(field: HeightField, levels: int, config: PlannerConfig,
                    cache: dict | None = None):
    """Accumulated objective of ``levels`` greedy cycles from ``field``."""
    total = 0.0
    predictions = 0
    current = field
    for level in range(levels):
        cands = listup(current, config.region, config.spacing,
                       iso=config.iso, smooth_sigma=config.smooth_sigma)
        if not cands:
            break
        if config.rollout_fixed_action:
            fixed = LoadAction.from_array(np.asarray(config.nominal_action))
            evals = [_evaluate_candidate(current, c, config, fixed) for c in cands]
        else:
            evals = [_evaluate_candidate(current, c, config, cache=cache)
                     for c in cands]
        predictions += len(cands)
        best = _select(evals, lambda e: e.objective)
        total += best.objective
        if level < levels - 1:
            current = config.model.predict_pile(current, best.candidate.pose, best.action)
    return total, predictions


def evaluate_Q(field: HeightField, candidate: DigCandidate, action: LoadAction,
               depth: int, remaining: int, config: PlannerConfig,
               own: CandidateEval | None = None, cache: dict | None = None):
    """Depth-limited evaluation: the candidate's own cycle objective plus a
    greedy rollout over the next ``min(depth, remaining) - 1`` cycles.

    Returns (q_value, own_evaluation, prediction_count).
    """
    if depth < 1 or remaining < 1:
        raise ValueError("depth and remaining must be >= 1")
    if own is None:
        own = _evaluate_candidate(field, candidate, config, action)
    predictions = 1
    q = own.objective
    levels = min(depth, remaining) - 1
    if levels > 0:
        expanded = config.model.predict_pile(field, candidate.pose, own.action)
        extra, preds = _greedy_rollout(expanded, levels, config, cache)
        q += extra
        predictions += preds
    return q, own, predictions


# ---------------------------------------------------------------------------
# Search drivers


def _run_plan(field: HeightField, cycles: int, config: PlannerConfig, *,
              depth: int = 1, select_key: str = "total",
              optimize: bool = True) -> tuple[list[PlanStep], SearchStats]:
    stats = SearchStats()
    steps: list[PlanStep] = []
    current = field
    started = time.perf_counter()
    fixed = LoadAction.from_array(np.asarray(config.nominal_action))
    cache: dict = {}
    for n in range(1, cycles + 1):
        cands = listup(current, config.region, config.spacing,
                       iso=config.iso, smooth_sigma=config.smooth_sigma)
        if not cands:
            stats.termination = "region-exhausted"
            break
        cycle_predictions = 0
        scored = []
        for cand in cands:
            own = _evaluate_candidate(current, cand, config,
                                      None if optimize else fixed,
                                      cache=cache if optimize else None)
            if select_key == "total" and depth > 1:
                q, own, preds = evaluate_Q(current, cand, own.action, depth,
                                           cycles - n + 1, config, own=own,
                                           cache=cache)
            else:
                q = {
                    "total": own.objective,
                    "load": own.load_objective,
                    "transport": own.transport_objective,
                }[select_key]
                preds = 1
            cycle_predictions += preds
            scored.append((q, own))
        best_q, best = min(
            scored, key=lambda t: (t[0], t[1].vturn_time, t[1].candidate.index)
        )
        next_field = config.model.predict_pile(current, best.candidate.pose, best.action)
        steps.append(PlanStep(
            cycle=n,
            candidate=best.candidate,
            action=best.action,
            perf_load=best.perf_load,
            v1=best.v1,
            v2=best.v2,
            dump_time=DUMP_TIME_S,
            perf_total=best.total,
            objective=best.objective,
            q_value=best_q,
            field_after=next_field,
        ))
        stats.predictions_per_cycle.append(cycle_predictions)
        stats.predictions_total += cycle_predictions
        current = next_field
    stats.wall_time = time.perf_counter() - started
    return steps, stats


def tree_search(field: HeightField, dump_pose, cycles: int, depth: int,
                config: PlannerConfig) -> tuple[list[PlanStep], SearchStats]:
    """Look-ahead search over the horizon: each cycle, optimise every
    candidate's action, rank by depth-limited evaluation, commit the best.

    ``dump_pose`` documents the transport anchor; its costs enter through the
    lookup table built for it.
    """
    if cycles < 1 or not 1 <= depth <= cycles:
        raise ValueError("need cycles >= 1 and 1 <= depth <= cycles")
    return _run_plan(field, cycles, config, depth=depth, select_key="total",
                     optimize=True)


def strategy_greedy(field: HeightField, dump_pose, cycles: int,
                    config: PlannerConfig) -> tuple[list[PlanStep], SearchStats]:
    """Single-step selection on the full cycle objective."""
    return tree_search(field, dump_pose, cycles, 1, config)


def strategy_max_loading(field: HeightField, dump_pose, cycles: int,
                         config: PlannerConfig) -> tuple[list[PlanStep], SearchStats]:
    """Single-step selection on loading performance only, ignoring transport."""
    return _run_plan(field, cycles, config, depth=1, select_key="load",
                     optimize=True)


def strategy_nominal(field: HeightField, dump_pose, cycles: int,
                     config: PlannerConfig) -> tuple[list[PlanStep], SearchStats]:
    """Fixed loading action, dig located purely by transport cost."""
    return _run_plan(field, cycles, config, depth=1, select_key="transport",
                     optimize=False)


# ---------------------------------------------------------------------------
# Plan log output

PLAN_LOG_COLUMNS = (
    "n", "x_dig", "y_dig", "heading", "a1", "a2", "a3", "a4",
    "M", "T_load", "W_load", "T_v1", "W_v1", "T_v2", "W_v2",
    "T_total", "W_total", "objective", "predictions",
)


def plan_log_rows(steps: list[PlanStep], stats: SearchStats) -> list[list]:
    rows = []
    for step, preds in zip(steps, stats.predictions_per_cycle):
        a = step.action
        rows.append([
            step.cycle, step.candidate.pose.x, step.candidate.pose.y,
            step.candidate.pose.heading,
            a.penetration, a.lift, a.tilt, a.throttle,
            step.perf_load.mass, step.perf_load.time, step.perf_load.work,
            step.v1.time, step.v1.work, step.v2.time, step.v2.work,
            step.perf_total.time, step.perf_total.work,
            step.objective, preds,
        ])
    return rows


def write_plan_log(steps: list[PlanStep], stats: SearchStats, path) -> None:
    lines = [",".join(PLAN_LOG_COLUMNS)]
    for row in plan_log_rows(steps, stats):
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_stats_json(stats: SearchStats, path) -> None:
    payload = {
        "predictions_total": stats.predictions_total,
        "predictions_per_cycle": stats.predictions_per_cycle,
        "wall_time_s": stats.wall_time,
        "termination": stats.termination,
    }
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")
