"""V-turn transport: spline paths, path-quality scoring, longitudinal
dynamics, and a precomputed cost lookup table.

A V-turn connects two poses with a reversing leg into a switch-back point and
a forward leg out of it.  Each leg is a clamped cubic B-spline on six control
points solved from endpoint positions, imposed end tangents, and zero end
second derivatives.  The switch-back pose is found by derivative-free search
inside a box placed behind the reversing endpoint.  Driving time and work are
integrated from a longitudinal model with rolling resistance, throttle-rate
limited traction, and constant-deceleration braking.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import minimize

from ._util import atomic_write_bytes, wrap_angle

SPLINE_DEGREE = 3
KNOTS = np.array([0.0, 0.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0, 1.0, 1.0])
LEG_SAMPLES = 200

# Tangent magnitudes at (start endpoint, end endpoint, switch-back in/out).
DEFAULT_DERIVATIVE_MAGS = (10.0, 30.0, 5.0, 5.0)
DEFAULT_GAMMA = (10.0, 10.0, 1.0)
DEFAULT_BOX = (5.0, 10.0)

VLUT_MAGIC = b"VLUT"
VLUT_VERSION = 1
_NODE_FIELDS = 6  # t_v1, w_v1, t_v2_base, t_v2_per_kg, w_v2_base, w_v2_per_kg


class PlanningError(RuntimeError):
    """The switch-back search failed to produce a finite-quality path."""


class ExtrapolationError(ValueError):
    """A lookup-table query fell outside the stored lattice hull."""


@dataclass(frozen=True)
class VehicleParams:
    """Longitudinal model parameters; speeds in m/s, dt in seconds."""

    mass_vehicle: float = 15_200.0
    mu_r: float = 0.01
    g: float = 9.81
    target_speed: float = 8.0 / 3.6
    approach_speed: float = 11.4 / 3.6
    approach_window: float = 5.0
    throttle_rate: float = 2.0
    max_traction: float = 60_000.0
    brake_decel: float = 1.5
    dt: float = 0.01

    def __post_init__(self):
        for name in ("mass_vehicle", "mu_r", "g", "target_speed", "approach_speed",
                     "approach_window", "throttle_rate", "max_traction",
                     "brake_decel", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class VTurnCost:
    time: float
    work: float
    capped: bool = False

    def __post_init__(self):
        if self.time < 0 or self.work < 0:
            raise ValueError("time and work must be non-negative")


@lru_cache(maxsize=4)
def _spline_tables(samples: int = LEG_SAMPLES):
    """Constant basis matrices: the 6x6 constraint system (LU-factored) and
    dense design matrices for positions and derivatives at the sample grid."""
    eye = np.eye(6)
    rows = np.empty((6, 6))
    svals = np.linspace(0.0, 1.0, samples)
    d0 = np.empty((samples, 6))
    d1 = np.empty((samples, 6))
    d2 = np.empty((samples, 6))
    for i in range(6):
        basis = BSpline(KNOTS, eye[i], SPLINE_DEGREE)
        db = basis.derivative(1)
        ddb = basis.derivative(2)
        rows[0, i] = basis(0.0)
        rows[1, i] = db(0.0)
        rows[2, i] = ddb(0.0)
        rows[3, i] = ddb(1.0)
        rows[4, i] = db(1.0)
        rows[5, i] = basis(1.0)
        d0[:, i] = basis(svals)
        d1[:, i] = db(svals)
        d2[:, i] = ddb(svals)
    return np.linalg.inv(rows), svals, d0, d1, d2

# Coarser grid used only while scoring switch-back candidates.
_SEARCH_SAMPLES = 50


@dataclass(frozen=True)
class SplineSegment:
    """Clamped cubic B-spline leg defined by six planar control points."""

    control: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.control, dtype=np.float64))
        if c.shape != (6, 2):
            raise ValueError(f"control points must be (6, 2), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "control", c)

    @property
    def knots(self) -> np.ndarray:
        return KNOTS

    def point(self, s) -> np.ndarray:
        spline = BSpline(KNOTS, self.control, SPLINE_DEGREE)
        return spline(s)

    def derivative(self, s, order: int = 1) -> np.ndarray:
        spline = BSpline(KNOTS, self.control, SPLINE_DEGREE).derivative(order)
        return spline(s)


def solve_spline(q0: tuple[float, float, float], q1: tuple[float, float, float],
                 alpha: float, beta: float) -> SplineSegment:
    """Solve the six-point constraint system for one leg.

    ``q0``/``q1`` are (x, y, tangent angle); the imposed first derivatives are
    ``alpha``/``beta`` times the unit tangents, and both end second
    derivatives are zero.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("derivative magnitudes must be positive")
    inverse, _, _, _, _ = _spline_tables()
    rhs = np.zeros((6, 2))
    rhs[0] = q0[:2]
    rhs[1] = (alpha * math.cos(q0[2]), alpha * math.sin(q0[2]))
    rhs[4] = (beta * math.cos(q1[2]), beta * math.sin(q1[2]))
    rhs[5] = q1[:2]
    control = inverse @ rhs
    if not np.all(np.isfinite(control)):
        raise PlanningError("spline system produced non-finite control points")
    return SplineSegment(control)


@dataclass(frozen=True)
class LegSamples:
    """Uniform-parameter samples of one leg with curvature diagnostics."""

    position: np.ndarray        # (m, 2)
    curvature: np.ndarray       # (m,)
    curvature_rate: np.ndarray  # (m,) d kappa / d arc length
    seg_len: np.ndarray         # (m - 1,)

    @property
    def length(self) -> float:
        return float(self.seg_len.sum())


def _sample_leg(segment: SplineSegment, samples: int = LEG_SAMPLES) -> LegSamples:
    _, _, d0, d1, d2 = _spline_tables(samples)
    pos = d0 @ segment.control
    vel = d1 @ segment.control
    acc = d2 @ segment.control
    speed = np.hypot(vel[:, 0], vel[:, 1])
    speed_safe = np.maximum(speed, 1e-12)
    kappa = (vel[:, 0] * acc[:, 1] - vel[:, 1] * acc[:, 0]) / speed_safe**3
    seg = np.hypot(np.diff(pos[:, 0]), np.diff(pos[:, 1]))
    arc = np.empty(len(seg) + 1)
    arc[0] = 0.0
    np.cumsum(seg, out=arc[1:])
    dkds = np.zeros_like(kappa)
    if arc[-1] > 1e-12:
        span = arc[2:] - arc[:-2]
        np.maximum(span, 1e-12, out=span)
        dkds[1:-1] = (kappa[2:] - kappa[:-2]) / span
        dkds[0] = (kappa[1] - kappa[0]) / max(arc[1] - arc[0], 1e-12)
        dkds[-1] = (kappa[-1] - kappa[-2]) / max(arc[-1] - arc[-2], 1e-12)
    return LegSamples(pos, kappa, dkds, seg)


@dataclass(frozen=True)
class VTurnPath:
    """Two spline legs joined at a switch-back pose."""

    leg_a: SplineSegment
    leg_b: SplineSegment
    switch_back: tuple[float, float]
    switch_heading: float
    samples_a: LegSamples
    samples_b: LegSamples
    quality: float

    @property
    def length_a(self) -> float:
        return self.samples_a.length

    @property
    def length_b(self) -> float:
        return self.samples_b.length

    @property
    def total_length(self) -> float:
        return self.length_a + self.length_b


def quality_from_samples(curvature: np.ndarray, curvature_rate: np.ndarray,
                         seg_len: np.ndarray, gamma) -> float:
    """Discrete path-quality sum: weighted curvature energy, curvature-rate
    energy, and arc length (trapezoidal over the samples)."""
    k2 = curvature * curvature
    r2 = curvature_rate * curvature_rate
    mid_k2 = 0.5 * (k2[1:] + k2[:-1])
    mid_r2 = 0.5 * (r2[1:] + r2[:-1])
    return float(
        gamma[0] * np.dot(mid_k2, seg_len)
        + gamma[1] * np.dot(mid_r2, seg_len)
        + gamma[2] * seg_len.sum()
    )


def path_quality(path: VTurnPath, gamma=DEFAULT_GAMMA) -> float:
    """Quality of a full V-turn: the summed quality of both legs."""
    return quality_from_samples(
        path.samples_a.curvature, path.samples_a.curvature_rate,
        path.samples_a.seg_len, gamma,
    ) + quality_from_samples(
        path.samples_b.curvature, path.samples_b.curvature_rate,
        path.samples_b.seg_len, gamma,
    )


# Imposed tangent magnitudes larger than the leg chord force parametric
# overshoot loops; cap them relative to the chord.
_MAG_CHORD_RATIO = 1.2


def _build_vturn(from_pose, to_pose, sb_xy, sb_heading, mags, gamma,
                 samples: int = LEG_SAMPLES) -> VTurnPath:
    start_mag, end_mag, sb_in, sb_out = mags
    chord_a = max(math.hypot(sb_xy[0] - from_pose[0], sb_xy[1] - from_pose[1]), 1e-6)
    chord_b = max(math.hypot(to_pose[0] - sb_xy[0], to_pose[1] - sb_xy[1]), 1e-6)
    cap_a = _MAG_CHORD_RATIO * chord_a
    cap_b = _MAG_CHORD_RATIO * chord_b
    # The vehicle reverses out of the start pose: the path tangent there is the
    # heading flipped, and it arrives at the switch-back still tail-first.
    leg_a = solve_spline(
        (from_pose[0], from_pose[1], from_pose[2] + math.pi),
        (sb_xy[0], sb_xy[1], sb_heading + math.pi),
        min(start_mag, cap_a), min(sb_in, cap_a),
    )
    leg_b = solve_spline(
        (sb_xy[0], sb_xy[1], sb_heading),
        to_pose,
        min(sb_out, cap_b), min(end_mag, cap_b),
    )
    sa = _sample_leg(leg_a, samples)
    sb = _sample_leg(leg_b, samples)
    quality = quality_from_samples(sa.curvature, sa.curvature_rate, sa.seg_len, gamma) + \
        quality_from_samples(sb.curvature, sb.curvature_rate, sb.seg_len, gamma)
    return VTurnPath(leg_a, leg_b, (float(sb_xy[0]), float(sb_xy[1])),
                     float(wrap_angle(sb_heading)), sa, sb, quality)


def plan_vturn(from_pose, to_pose, gamma=DEFAULT_GAMMA, box=DEFAULT_BOX,
               derivative_mags=DEFAULT_DERIVATIVE_MAGS, *, n_starts: int = 5,
               max_evals: int = 500, evals_per_start: int = 100) -> VTurnPath:
    """Find the switch-back pose minimising summed leg quality.

    The switch-back must lie in a box of side ``box[1]`` starting ``box[0]``
    behind the reversing endpoint (the from-pose), which keeps the reversing
    distance short.  A fixed pattern of starts on the box diagonal feeds a
    bounded Powell search over the switch-back position and heading, so the
    result is deterministic.
    """
    if math.hypot(to_pose[0] - from_pose[0], to_pose[1] - from_pose[1]) < 1e-9:
        raise ValueError("from and to poses coincide")
    l1, l2 = box
    fx, fy, fth = from_pose
    ex = (math.cos(fth), math.sin(fth))
    ey = (-math.sin(fth), math.cos(fth))

    def sb_position(s1: float, s2: float) -> tuple[float, float]:
        back = l1 + s1 * l2
        side = (s2 - 0.5) * l2
        return (fx - back * ex[0] + side * ey[0], fy - back * ex[1] + side * ey[1])

    evals = [0]

    def score(z) -> float:
        if evals[0] >= max_evals:
            return float("inf")
        evals[0] += 1
        sb = sb_position(z[0], z[1])
        path = _build_vturn(from_pose, to_pose, sb, z[2], derivative_mags, gamma,
                            _SEARCH_SAMPLES)
        return path.quality

    best_z = None
    best_q = float("inf")
    fractions = (np.arange(n_starts) + 0.5) / n_starts
    budget = min(max(evals_per_start, 15), max(max_evals // max(n_starts, 1), 15))
    for frac in fractions:
        sb0 = sb_position(frac, frac)
        phi0 = math.atan2(to_pose[1] - sb0[1], to_pose[0] - sb0[0])
        z0 = np.array([frac, frac, phi0])
        result = minimize(
            score, z0, method="Powell",
            bounds=[(0.0, 1.0), (0.0, 1.0), (phi0 - math.pi / 2, phi0 + math.pi / 2)],
            options={"maxfev": budget, "xtol": 1e-3, "ftol": 1e-6},
        )
        if np.isfinite(result.fun) and result.fun < best_q:
            best_q = float(result.fun)
            best_z = np.array(result.x)
        if evals[0] >= max_evals:
            break
    if best_z is None:
        raise PlanningError(
            f"no finite-quality switch-back found within {max_evals} evaluations"
        )
    return _build_vturn(from_pose, to_pose, sb_position(best_z[0], best_z[1]),
                        float(best_z[2]), derivative_mags, gamma)


# ---------------------------------------------------------------------------
# Longitudinal dynamics


def euler_velocity(force: float, mass: float, c_r: float, duration: float,
                   dt: float) -> float:
    """Explicit-Euler speed after ``duration`` under constant traction force.

    This is the same update the leg integrator applies each step.
    """
    v = 0.0
    steps = int(round(duration / dt))
    for _ in range(steps):
        v += (force - c_r * v) / mass * dt
    return v


def _integrate_leg(length: float, m_tot: float, c_r: float, vp: VehicleParams,
                   approach: bool) -> tuple[float, float, bool]:
    """Time, positive work, and a speed-cap flag for driving one leg from and
    to standstill."""
    if length <= 1e-9:
        return 0.0, 0.0, False
    dt = vp.dt
    brake = vp.brake_decel
    capped = length < vp.approach_speed**2 / (2.0 * brake)
    x = 0.0
    v = 0.0
    u = 0.0
    t = 0.0
    work = 0.0
    max_time = 600.0
    while x < length and t < max_time:
        remaining = length - x
        if remaining <= v * v / (2.0 * brake):
            u = 0.0
            v = max(v - brake * dt, 0.0)
            if v <= 0.0 and remaining <= 0.05:
                t += dt
                break
        else:
            target = vp.approach_speed if (approach and remaining <= vp.approach_window) \
                else vp.target_speed
            if v < target:
                u = min(u + vp.throttle_rate * dt, 1.0)
            else:
                u = max(u - vp.throttle_rate * dt, 0.0)
            force = u * vp.max_traction
            v = max(v + (force - c_r * v) / m_tot * dt, 0.0)
            work += max(force, 0.0) * v * dt
        x += v * dt
        t += dt
    return t, work, capped


def integrate_motion(path: VTurnPath, load_mass: float, vp: VehicleParams,
                     *, dig_at_end: bool = False) -> VTurnCost:
    """Integrate the equation of motion over both legs (full stop between).

    ``load_mass`` adds to the vehicle mass and the rolling resistance.  When
    ``dig_at_end`` is set the target speed rises to the approach speed within
    the approach window of the final leg.  Only positive traction work counts.
    """
    if load_mass < 0:
        raise ValueError("load_mass must be non-negative")
    m_tot = vp.mass_vehicle + load_mass
    c_r = vp.mu_r * m_tot * vp.g
    time_a, work_a, cap_a = _integrate_leg(path.length_a, m_tot, c_r, vp, False)
    time_b, work_b, cap_b = _integrate_leg(path.length_b, m_tot, c_r, vp, dig_at_end)
    return VTurnCost(time_a + time_b, work_a + work_b, cap_a or cap_b)


# ---------------------------------------------------------------------------
# V-turn lookup table


@dataclass(frozen=True)
class VTurnLUT:
    """Trilinear cost table over dig (x, y, heading).

    Per node: V-turn-1 time and work (unloaded), and V-turn-2 time and work
    each as a base plus a per-kg slope, so loaded costs rescale linearly with
    the carried mass.
    """

    dump_pose: tuple[float, float, float]
    x_axis: np.ndarray
    y_axis: np.ndarray
    heading_axis: np.ndarray
    table: np.ndarray  # (nx, ny, nh, 5)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        expected = (len(self.x_axis), len(self.y_axis), len(self.heading_axis), _NODE_FIELDS)
        if t.shape != expected:
            raise ValueError(f"table shape {t.shape} != {expected}")
        object.__setattr__(self, "table", t)


def build_lut(dump_pose, x_axis, y_axis, heading_axis, gamma=DEFAULT_GAMMA,
              vp: VehicleParams | None = None, *, box=DEFAULT_BOX,
              derivative_mags=DEFAULT_DERIVATIVE_MAGS,
              ref_mass: float = 4800.0) -> VTurnLUT:
    """Precompute V-turn costs on a dig-pose lattice.

    For each node the dump-to-dig turn is planned and integrated empty, and
    the dig-to-dump turn empty plus at ``ref_mass`` to fit the linear work
    model.  Node order is deterministic.
    """
    vp = vp or VehicleParams()
    x_axis = np.asarray(x_axis, dtype=np.float64)
    y_axis = np.asarray(y_axis, dtype=np.float64)
    heading_axis = np.asarray(heading_axis, dtype=np.float64)
    start_mag, end_mag, sb_in, sb_out = derivative_mags
    table = np.empty((len(x_axis), len(y_axis), len(heading_axis), _NODE_FIELDS))
    for ix, x in enumerate(x_axis):
        for iy, y in enumerate(y_axis):
            for ih, heading in enumerate(heading_axis):
                dig_pose = (float(x), float(y), float(heading))
                turn1 = plan_vturn(dump_pose, dig_pose, gamma, box,
                                   (start_mag, end_mag, sb_in, sb_out))
                cost1 = integrate_motion(turn1, 0.0, vp, dig_at_end=True)
                turn2 = plan_vturn(dig_pose, dump_pose, gamma, box,
                                   (end_mag, start_mag, sb_in, sb_out))
                cost2_empty = integrate_motion(turn2, 0.0, vp)
                cost2_ref = integrate_motion(turn2, ref_mass, vp)
                time_slope = (cost2_ref.time - cost2_empty.time) / ref_mass
                work_slope = (cost2_ref.work - cost2_empty.work) / ref_mass
                table[ix, iy, ih] = (
                    cost1.time, cost1.work, cost2_empty.time, time_slope,
                    cost2_empty.work, work_slope,
                )
    return VTurnLUT(
        (float(dump_pose[0]), float(dump_pose[1]), float(dump_pose[2])),
        x_axis, y_axis, heading_axis, table,
    )


def _axis_coordinate(axis: np.ndarray, value: float, name: str) -> float:
    if len(axis) == 1:
        return 0.0
    step = axis[1] - axis[0]
    g = (value - axis[0]) / step
    if g < -1e-9 or g > len(axis) - 1 + 1e-9:
        raise ExtrapolationError(
            f"{name}={value:.4f} outside lattice [{axis[0]:.4f}, {axis[-1]:.4f}]"
        )
    # Snap to exact nodes so lattice queries reproduce stored values.
    nearest = round(g)
    if abs(g - nearest) < 1e-9:
        g = float(nearest)
    return float(np.clip(g, 0.0, len(axis) - 1))


def lut_lookup(lut: VTurnLUT, dig_pose, load_mass: float) -> tuple[VTurnCost, VTurnCost]:
    """Trilinear interpolation of (V-turn-1, V-turn-2) costs at a dig pose.

    Headings are wrapped onto the stored branch, so queries at theta and
    theta + 2*pi are identical.  Queries outside the lattice hull raise
    :class:`ExtrapolationError`.
    """
    x, y, heading = dig_pose[0], dig_pose[1], dig_pose[2]
    h0 = lut.heading_axis[0]
    heading = h0 + math.remainder(heading - h0, math.tau)
    gx = _axis_coordinate(lut.x_axis, x, "x")
    gy = _axis_coordinate(lut.y_axis, y, "y")
    gh = _axis_coordinate(lut.heading_axis, heading, "heading")

    def split(g: float, n: int) -> tuple[int, float]:
        i = min(int(g), max(n - 2, 0))
        return i, g - i

    ix, fx = split(gx, len(lut.x_axis))
    iy, fy = split(gy, len(lut.y_axis))
    ih, fh = split(gh, len(lut.heading_axis))
    ix1 = min(ix + 1, len(lut.x_axis) - 1)
    iy1 = min(iy + 1, len(lut.y_axis) - 1)
    ih1 = min(ih + 1, len(lut.heading_axis) - 1)

    c = lut.table
    out = np.zeros(_NODE_FIELDS)
    for dx, wx in ((ix, 1.0 - fx), (ix1, fx)):
        if wx == 0.0:
            continue
        for dy, wy in ((iy, 1.0 - fy), (iy1, fy)):
            if wy == 0.0:
                continue
            for dh, wh in ((ih, 1.0 - fh), (ih1, fh)):
                if wh == 0.0:
                    continue
                out += wx * wy * wh * c[dx, dy, dh]
    v1 = VTurnCost(float(out[0]), float(out[1]))
    v2 = VTurnCost(
        float(max(out[2] + out[3] * load_mass, 0.0)),
        float(max(out[4] + out[5] * load_mass, 0.0)),
    )
    return v1, v2


_VLUT_HEADER = struct.Struct("<4sHddd")
_VLUT_AXIS = struct.Struct("<ddI")


def write_vlut(lut: VTurnLUT, path: str | Path) -> None:
    parts = [_VLUT_HEADER.pack(VLUT_MAGIC, VLUT_VERSION, *lut.dump_pose)]
    for axis in (lut.x_axis, lut.y_axis, lut.heading_axis):
        step = float(axis[1] - axis[0]) if len(axis) > 1 else 0.0
        parts.append(_VLUT_AXIS.pack(float(axis[0]), step, len(axis)))
    parts.append(lut.table.astype("<f4").tobytes(order="C"))
    atomic_write_bytes(path, b"".join(parts))


def read_vlut(path: str | Path) -> VTurnLUT:
    raw = Path(path).read_bytes()
    magic, version, dx, dy, dth = _VLUT_HEADER.unpack_from(raw)
    if magic != VLUT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VLUT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = _VLUT_HEADER.size
    axes = []
    for _ in range(3):
        start, step, count = _VLUT_AXIS.unpack_from(raw, offset)
        offset += _VLUT_AXIS.size
        axes.append(start + step * np.arange(count))
    counts = tuple(len(a) for a in axes)
    expected = offset + 4 * counts[0] * counts[1] * counts[2] * _NODE_FIELDS
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    table = np.frombuffer(raw, dtype="<f4", offset=offset).astype(np.float64)
    table = table.reshape(counts[0], counts[1], counts[2], _NODE_FIELDS)
    return VTurnLUT((dx, dy, dth), axes[0], axes[1], axes[2], table)
