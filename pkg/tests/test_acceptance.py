"""Acceptance gate: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  The benchmark-scale items (7-9) share one pair of full
experiment runs and together take tens of minutes at two-way parallelism.
"""

import math
import time

import numpy as np
import pytest

from loadplan.harness import (
    ScenarioConfig,
    build_initial_field,
    build_scenario_lut,
    run_experiment,
    write_run_csv,
)
from loadplan.heightfield import (
    GridSpec,
    HeightField,
    PileSpec,
    cutout,
    generate_pile,
    replace,
    settle,
)
from loadplan.planner import (
    PlannerConfig,
    _evaluate_candidate,
    listup,
    tree_search,
)
from loadplan.vturn import (
    _sample_leg,
    euler_velocity,
    lut_lookup,
    solve_spline,
)
from loadplan.worldmodel import (
    PERF_PATCH_N,
    PERF_PATCH_SIDE,
    AnalyticSurrogate,
    DigPose,
    LoadAction,
    Normalization,
    OptimizerOptions,
    optimize_action_on_patch,
)

CONFIG = ScenarioConfig.default()
PARAMS = CONFIG.surrogate
NORM = CONFIG.norm


def report(name: str, detail: str) -> None:
    print(f"\n[acceptance] {name}: PASS ({detail})")


# ---------------------------------------------------------------------------
# 1. Spline correctness


def test_criterion_1_spline_correctness():
    started = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_endpoint = 0.0
    worst_deriv = 0.0
    checked = 0
    while checked < 1000:
        q0 = (rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-math.pi, math.pi))
        q1 = (rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-math.pi, math.pi))
        if math.hypot(q1[0] - q0[0], q1[1] - q0[1]) < 0.5:
            continue
        alpha = rng.uniform(0.5, 40.0)
        beta = rng.uniform(0.5, 40.0)
        seg = solve_spline(q0, q1, alpha, beta)
        worst_endpoint = max(
            worst_endpoint,
            float(np.abs(seg.point(0.0) - q0[:2]).max()),
            float(np.abs(seg.point(1.0) - q1[:2]).max()),
        )
        d0 = seg.derivative(0.0) - [alpha * math.cos(q0[2]), alpha * math.sin(q0[2])]
        d1 = seg.derivative(1.0) - [beta * math.cos(q1[2]), beta * math.sin(q1[2])]
        worst_deriv = max(worst_deriv, float(np.abs(d0).max()), float(np.abs(d1).max()))
        checked += 1
    straight = solve_spline((0.0, 0.0, 0.0), (12.0, 0.0, 0.0), 10.0, 10.0)
    straight_kappa = float(np.abs(_sample_leg(straight).curvature).max())
    elapsed = time.perf_counter() - started
    assert worst_endpoint <= 1e-9
    assert worst_deriv <= 1e-9
    assert straight_kappa <= 1e-9
    assert elapsed < 5.0
    report("criterion 1 spline correctness",
           f"1000 draws, endpoint {worst_endpoint:.1e}, deriv {worst_deriv:.1e}, "
           f"straight kappa {straight_kappa:.1e}, {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 2. Dynamics oracle


def test_criterion_2_dynamics_oracle():
    started = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        force = rng.uniform(2000.0, 40000.0)
        mass = rng.uniform(6000.0, 30000.0)
        c_r = rng.uniform(400.0, 3500.0)
        v_euler = euler_velocity(force, mass, c_r, 10.0, 0.01)
        v_exact = force / c_r * (1.0 - math.exp(-c_r * 10.0 / mass))
        worst = max(worst, abs(v_euler - v_exact) / v_exact)
    elapsed = time.perf_counter() - started
    assert worst < 1e-3
    assert elapsed < 1.0
    report("criterion 2 dynamics oracle",
           f"20 draws, worst relative error {worst:.2e}, {elapsed:.2f} s")


# ---------------------------------------------------------------------------
# 3. Heightfield invariants


def test_criterion_3_heightfield_invariants():
    started = time.perf_counter()
    repose = math.radians(30.0)
    cap = math.tan(repose) + 1e-6
    rng = np.random.default_rng(3)
    worst_volume = 0.0
    worst_slope = 0.0
    for _ in range(100):
        nx = int(rng.integers(16, 30))
        ny = int(rng.integers(16, 30))
        heights = rng.uniform(0.0, 2.0, (nx, ny))
        field = HeightField(nx, ny, 0.1, (0.0, 0.0), heights)
        settled = settle(field, repose)
        worst_volume = max(
            worst_volume,
            abs(settled.volume() - field.volume()) / max(field.volume(), 1e-9),
        )
        h = settled.heights
        slope = max(
            np.abs(np.diff(h, axis=0)).max() / 0.1,
            np.abs(np.diff(h, axis=1)).max() / 0.1,
            np.abs(h[1:, 1:] - h[:-1, :-1]).max() / (0.1 * math.sqrt(2)),
            np.abs(h[1:, :-1] - h[:-1, 1:]).max() / (0.1 * math.sqrt(2)),
        )
        worst_slope = max(worst_slope, slope)
    assert worst_volume <= 1e-9
    assert worst_slope <= cap

    # roundtrip on smooth bounded-gradient fields at arbitrary rotations
    from scipy.ndimage import gaussian_filter
    worst_roundtrip = 0.0
    xs = np.arange(70) * 0.1
    for trial in range(10):
        raw = rng.normal(0.0, 1.0, (70, 60))
        smooth = gaussian_filter(raw, sigma=6.0)
        smooth = 0.8 * smooth / max(np.abs(np.gradient(smooth, 0.1)[0]).max(),
                                    np.abs(np.gradient(smooth, 0.1)[1]).max())
        field = HeightField(70, 60, 0.1, (0.0, 0.0), smooth - smooth.min())
        theta = rng.uniform(0.0, math.pi)
        pose = (3.5, 3.0, theta)
        patch = cutout(field, pose, 24, 2.4)
        back = replace(field, patch)
        wx, wy = np.meshgrid(xs, np.arange(60) * 0.1, indexing="ij")
        u = (wx - 3.5) * math.cos(theta) + (wy - 3.0) * math.sin(theta)
        v = -(wx - 3.5) * math.sin(theta) + (wy - 3.0) * math.cos(theta)
        interior = (np.abs(u) <= 1.0) & (np.abs(v) <= 1.0)
        worst_roundtrip = max(
            worst_roundtrip,
            float(np.abs(back.heights - field.heights)[interior].max()),
        )
    elapsed = time.perf_counter() - started
    assert worst_roundtrip <= 1e-2
    assert elapsed < 30.0
    report("criterion 3 heightfield invariants",
           f"volume {worst_volume:.1e}, slope {worst_slope:.6f} <= {cap:.6f}, "
           f"roundtrip {worst_roundtrip:.1e}, {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 4. Surrogate consistency


def _sample_dig_cases(n_cases: int, seed: int):
    """Random (field, dig pose, action) triples on noisy piles."""
    rng = np.random.default_rng(seed)
    model = AnalyticSurrogate(PARAMS)
    cases = []
    pile_seed = 0
    while len(cases) < n_cases:
        grid = GridSpec(240, 220, 0.1, (-12.0, -8.0))
        spec = PileSpec(noise_amplitude=0.3, noise_frequency=0.5, seed=pile_seed,
                        toe_y=3.0)
        field = settle(generate_pile(spec, grid), PARAMS.repose)
        cands = listup(field, (-8.0, 8.0, 0.0, 6.5), 1.0)
        rng.shuffle(cands)
        for cand in cands[:20]:
            action = LoadAction.from_array(rng.uniform(0.05, 1.0, 4))
            cases.append((field, cand.pose, action))
            if len(cases) >= n_cases:
                break
        pile_seed += 1
    return model, cases


def test_criterion_4_surrogate_consistency():
    started = time.perf_counter()
    model, cases = _sample_dig_cases(200, seed=4)
    worst_mass = 0.0
    skipped = 0
    for field, pose, action in cases:
        perf = model.predict_performance(field, pose, action, NORM)
        if perf.mass < 50.0:
            skipped += 1
            continue
        after = model.predict_pile(field, pose, action)
        removed = (field.volume() - after.volume()) * PARAMS.soil_density
        worst_mass = max(worst_mass, abs(removed - perf.mass) / perf.mass)
    assert skipped < 40
    assert worst_mass <= 0.02

    # finite-difference gradient vs Richardson-extrapolated reference
    rng = np.random.default_rng(44)
    worst_grad = 0.0
    for field, pose, _ in cases[:50]:
        patch = cutout(field, pose.as_tuple(), PERF_PATCH_N, PERF_PATCH_SIDE)
        a = rng.uniform(0.15, 0.85, 4)

        def objective_at(act):
            _, _, _, obj = model.performance_arrays(patch.heights, act[None, :], NORM)
            return float(obj[0])

        for i in range(4):
            h = 1e-3
            hi = a.copy(); hi[i] += h
            lo = a.copy(); lo[i] -= h
            central = (objective_at(hi) - objective_at(lo)) / (2 * h)
            hi2 = a.copy(); hi2[i] += h / 2
            lo2 = a.copy(); lo2[i] -= h / 2
            half = (objective_at(hi2) - objective_at(lo2)) / h
            richardson = (4.0 * half - central) / 3.0
            worst_grad = max(worst_grad,
                             abs(central - richardson) / max(abs(richardson), 1e-3))
    elapsed = time.perf_counter() - started
    assert worst_grad <= 1e-4
    assert elapsed < 30.0
    report("criterion 4 surrogate consistency",
           f"mass agreement {worst_mass:.4f} <= 0.02 on 200 pairs, "
           f"gradient {worst_grad:.2e} <= 1e-4 on 50 pairs, {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 5. Optimizer contract


def test_criterion_5_optimizer_contract():
    started = time.perf_counter()
    model, cases = _sample_dig_cases(100, seed=5)
    init = np.array(OptimizerOptions().init)
    for field, pose, _ in cases:
        patch = cutout(field, pose.as_tuple(), PERF_PATCH_N, PERF_PATCH_SIDE)
        trace = []
        a, _, _, _, obj = optimize_action_on_patch(model, patch.heights, NORM,
                                                   trace=trace)
        assert len(trace) <= 30
        assert np.all((a >= 0.0) & (a <= 1.0))
        _, _, _, start = model.performance_arrays(patch.heights, init[None, :], NORM)
        assert obj <= float(start[0]) + 1e-12
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    report("criterion 5 optimizer contract",
           f"100 patches, <= 30 iterations, descent and box respected, "
           f"{elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 6. Oracle equivalence on the toy scenario


def test_criterion_6_tree_matches_enumeration():
    started = time.perf_counter()
    grid = GridSpec(300, 240, 0.1, (-15.0, -8.0))
    spec = PileSpec(noise_amplitude=0.3, noise_frequency=0.5, seed=11, toe_y=3.0)
    field = settle(generate_pile(spec, grid), PARAMS.repose)
    region = (-4.0, -1.0, 0.0, 6.0)
    lut = build_scenario_lut(ScenarioConfig.default())
    config = PlannerConfig(model=AnalyticSurrogate(PARAMS), lut=lut, norm=NORM,
                           region=region)
    cands = listup(field, region, 1.0)
    assert 2 <= len(cands) <= 4

    # independent enumeration: every first choice, greedy completion
    def greedy_completion(state, levels):
        total = 0.0
        for _ in range(levels):
            inner = listup(state, region, 1.0)
            if not inner:
                break
            evals = [_evaluate_candidate(state, c, config) for c in inner]
            pick = min(evals, key=lambda e: (e.objective, e.vturn_time,
                                             e.candidate.index))
            total += pick.objective
            state = config.model.predict_pile(state, pick.candidate.pose, pick.action)
        return total

    expected = 0.0
    state = field
    cycles = 3
    for n in range(cycles):
        options = []
        for cand in listup(state, region, 1.0):
            own = _evaluate_candidate(state, cand, config)
            rolled = config.model.predict_pile(state, cand.pose, own.action)
            q = own.objective + greedy_completion(rolled, cycles - n - 1)
            options.append(((q, own.vturn_time, own.candidate.index), own))
        _, best = min(options, key=lambda t: t[0])
        expected += best.objective
        state = config.model.predict_pile(state, best.candidate.pose, best.action)

    steps, _ = tree_search(field, CONFIG.dump_pose, cycles, cycles, config)
    total = sum(s.objective for s in steps)
    elapsed = time.perf_counter() - started
    assert total == pytest.approx(expected, abs=1e-12)
    assert elapsed < 60.0
    report("criterion 6 oracle equivalence",
           f"toy {len(cands)} candidates N=3 d=3: search {total:.6f} == "
           f"enumeration {expected:.6f}, {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 7-9. Benchmark-scale criteria (shared runs)


@pytest.fixture(scope="module")
def benchmark_runs(tmp_path_factory):
    cfg = ScenarioConfig.default()
    started = time.perf_counter()
    lut = build_scenario_lut(cfg)
    first = run_experiment(cfg, jobs=2, lut=lut)
    second = run_experiment(cfg, jobs=4, lut=lut)
    elapsed = time.perf_counter() - started
    out = tmp_path_factory.mktemp("benchmark")
    write_run_csv(first, out / "first.csv")
    write_run_csv(second, out / "second.csv")
    print(f"\n[acceptance] benchmark sweep x2 completed in {elapsed / 60:.1f} min")
    return first, second, out, elapsed


def test_criterion_7_strategy_ordering(benchmark_runs):
    result, _, _, elapsed = benchmark_runs
    agg = result.aggregates
    tree = agg["tree_d4"]["objective_mean"]
    greedy = agg["greedy"]["objective_mean"]
    nominal = agg["nominal"]["objective_mean"]
    tree_gain = (greedy - tree) / greedy * 100.0
    nominal_gap = (nominal - greedy) / nominal * 100.0
    assert tree <= greedy <= nominal
    assert tree_gain >= 2.0
    assert nominal_gap >= 3.0
    assert elapsed < 30 * 60
    report("criterion 7 strategy ordering",
           f"tree_d4 {tree:.2f} <= greedy {greedy:.2f} <= nominal {nominal:.2f}; "
           f"look-ahead gain {tree_gain:.2f}% >= 2%, nominal gap "
           f"{nominal_gap:.2f}% >= 3%")


def test_criterion_8_depth_convergence(benchmark_runs):
    result, _, _, _ = benchmark_runs
    agg = result.aggregates
    d4 = agg["tree_d4"]["objective_mean"]
    d6 = agg["tree_d6"]["objective_mean"]
    improvement = (d4 - d6) / d4 * 100.0
    assert improvement <= 0.5
    depths = sorted(
        (int(stats["depth"]), stats["predictions_mean"])
        for label, stats in agg.items() if label.startswith("tree_d")
    )
    counts = [c for _, c in depths]
    assert all(b > a for a, b in zip(counts, counts[1:]))
    report("criterion 8 depth convergence",
           f"d4 {d4:.2f} -> d6 {d6:.2f} improvement {improvement:+.2f}% <= 0.5%, "
           f"predictions {['%d' % c for c in counts]} strictly increasing")


def test_criterion_9_bitwise_determinism(benchmark_runs):
    first, second, out, _ = benchmark_runs
    a = (out / "first.csv").read_bytes()
    b = (out / "second.csv").read_bytes()
    assert a == b
    for run_a, run_b in zip(first.runs, second.runs):
        assert run_a.rows == run_b.rows
    report("criterion 9 determinism",
           f"runs.csv identical across jobs=2 and jobs=4 ({len(a)} bytes)")


# ---------------------------------------------------------------------------
# 10. Performance budget


def test_criterion_10_prediction_budget():
    cfg = ScenarioConfig.default()
    model = AnalyticSurrogate(cfg.surrogate)
    field = build_initial_field(cfg, 0)
    cands = listup(field, cfg.region, cfg.spacing)
    dig = cands[len(cands) // 2].pose
    action = LoadAction()
    from loadplan.vturn import build_lut
    nose = (cfg.dump_pose[0], cfg.dump_pose[1], cfg.dump_pose[2] + math.pi)
    lut = build_lut(nose, np.array([dig.x - 1, dig.x, dig.x + 1]),
                    np.array([dig.y - 1, dig.y, dig.y + 1]),
                    np.array([dig.heading - 0.3, dig.heading, dig.heading + 0.3]),
                    cfg.gamma, cfg.vehicle, box=cfg.box)
    patch = cutout(field, dig.as_tuple(), PERF_PATCH_N, PERF_PATCH_SIDE)

    def cycle():
        model.predict_pile(field, dig, action)
        optimize_action_on_patch(model, patch.heights, cfg.norm, cfg.optimizer)
        lut_lookup(lut, dig.as_tuple(), 2500.0)
        lut_lookup(lut, dig.as_tuple(), 0.0)

    cycle()  # warm caches
    samples = []
    started = time.perf_counter()
    for _ in range(40):
        t0 = time.perf_counter()
        cycle()
        samples.append((time.perf_counter() - t0) * 1e3)
    elapsed = time.perf_counter() - started
    mean_ms = sum(samples) / len(samples)
    assert mean_ms <= 100.0
    assert elapsed < 120.0
    report("criterion 10 prediction budget",
           f"mean loading-cycle prediction {mean_ms:.1f} ms <= 100 ms "
           f"(40 reps, {elapsed:.1f} s)")
