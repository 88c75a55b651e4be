"""World model for single loading cycles: pile-state and performance predictors.

The :class:`WorldModel` protocol is the interface the planner consumes: one
function advances the pile past a dig, the other predicts the loading's mass,
time, and work.  :class:`AnalyticSurrogate` is the default implementation, a
deterministic bucket-sweep model that is smooth in the controller action so
finite-difference gradients are meaningful.  Externally trained predictors can
be plugged in behind the same protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Protocol, runtime_checkable

import numpy as np

from ._util import wrap_angle
from .heightfield import HeightField, LocalPatch, cutout, replace, settle

# Patch geometry used by the two predictors: the pile-state model sees a wider
# neighbourhood than the performance model, both at 0.1 m resolution.
PILE_PATCH_N = 52
PILE_PATCH_SIDE = 5.2
PERF_PATCH_N = 36
PERF_PATCH_SIDE = 3.6

# Mass floor substituted when a dig sweeps no soil, keeping objectives finite.
MASS_FLOOR_KG = 1.0

# Sharpness of the soft volume cap (per m^3).
_CAP_SHARPNESS = 10.0

_ZERO_SWEEP_M3 = 1e-6


@dataclass(frozen=True)
class DigPose:
    """Dig location and heading (into the pile, normal to its contour)."""

    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.heading)


@dataclass(frozen=True)
class LoadAction:
    """Four loading-controller gains, each clamped to [0, 1].

    components: penetration drive, lift reactivity, tilt reactivity,
    throttle aggressiveness.
    """

    penetration: float = 1.0
    lift: float = 0.0
    tilt: float = 0.5
    throttle: float = 0.5

    def __post_init__(self):
        for name in ("penetration", "lift", "tilt", "throttle"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, min(max(value, 0.0), 1.0))

    def as_array(self) -> np.ndarray:
        return np.array([self.penetration, self.lift, self.tilt, self.throttle])

    @classmethod
    def from_array(cls, a) -> "LoadAction":
        a = np.asarray(a, dtype=np.float64)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class Normalization:
    """Reference mass/time/work and the objective weights."""

    mass_ref: float = 4800.0
    time_ref: float = 25.0
    work_ref: float = 1.0e6
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if min(self.mass_ref, self.time_ref, self.work_ref) <= 0:
            raise ValueError("normalization references must be positive")
        if min(self.weights) <= 0:
            raise ValueError("objective weights must be positive")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))


@dataclass(frozen=True)
class PerformanceTriple:
    """Raw loading outcome plus its normalized vector.

    The normalized entries are ``(mass_ref / mass, time / time_ref,
    work / work_ref)`` so that every entry improves downward.
    """

    mass: float
    time: float
    work: float
    normalized: tuple[float, float, float]

    @classmethod
    def from_raw(cls, mass: float, time: float, work: float,
                 norm: Normalization) -> "PerformanceTriple":
        if mass <= 0:
            raise ValueError("mass must be positive (use the mass floor for empty digs)")
        return cls(
            float(mass), float(time), float(work),
            (norm.mass_ref / mass, time / norm.time_ref, work / norm.work_ref),
        )


def objective(perf: PerformanceTriple, norm: Normalization) -> float:
    """Weighted scalar objective of a performance triple; lower is better."""
    w = norm.weights
    n = perf.normalized
    return w[0] * n[0] + w[1] * n[1] + w[2] * n[2]


@dataclass(frozen=True)
class SurrogateParams:
    """Coefficients of the analytic bucket-sweep surrogate.

    Lengths in metres, volumes m^3, density kg/m^3, times s, work J.
    """

    bucket_width: float = 2.7
    bucket_capacity: float = 3.0
    soil_density: float = 1600.0
    repose: float = math.radians(30.0)
    max_penetration: float = 1.7
    base_time: float = 8.0
    time_per_metre: float = 3.0
    fill_time: float = 6.0
    cut_work: float = 4000.0
    lift_work: float = 9.81 * 1.5
    berm_width: float = 0.4
    evenness_sensitivity: float = 1.5
    roughness_time: float = 1.5
    roughness_work: float = 1.5
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("bucket_width", "bucket_capacity", "soil_density", "repose",
                     "max_penetration", "base_time", "time_per_metre", "fill_time",
                     "cut_work", "lift_work", "berm_width", "gravity"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("evenness_sensitivity", "roughness_time", "roughness_work"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@runtime_checkable
class WorldModel(Protocol):
    """Pile-advance and performance predictors behind one interface."""

    def predict_pile(self, field: HeightField, dig: DigPose,
                     action: LoadAction) -> HeightField: ...

    def predict_performance(self, field: HeightField, dig: DigPose,
                            action: LoadAction, norm: Normalization) -> PerformanceTriple: ...


class _PatchGeometry:
    """Index caches for evaluating the sweep on an n x n patch."""

    def __init__(self, n: int, side: float, params: SurrogateParams):
        offs = (np.arange(n, dtype=np.float64) - (n - 1) / 2.0) * (side / n)
        self.cell = side / n
        self.cell_area = self.cell * self.cell
        self.u_idx = np.nonzero((offs >= 0.0) & (offs <= params.max_penetration))[0]
        self.u_values = offs[self.u_idx]
        half_w = params.bucket_width / 2.0
        self.v_idx = np.nonzero(np.abs(offs) <= half_w + 1e-12)[0]
        berm = (np.abs(offs) > half_w + 1e-12) & (
            np.abs(offs) <= half_w + params.berm_width + 1e-12
        )
        self.berm_v_idx = np.nonzero(berm)[0]


def _smootherstep(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


class AnalyticSurrogate:
    """Deterministic excavation surrogate.

    A dig thrusts a bucket-wide wedge into the pile along the dig heading.
    The wedge depth tapers smoothly from the entry cut depth to zero at the
    penetration length; per-cell capture saturates at the locally available
    soil and degrades on laterally uneven faces (side spillage), so ragged
    fronts load worse than organised ones.  Swept volume beyond the
    (fill-dependent) bucket cap spills into two side berms, and the disturbed
    pile relaxes back to its angle of repose.
    """

    def __init__(self, params: SurrogateParams | None = None):
        self.params = params or SurrogateParams()
        self._geometry: dict[tuple[int, float], _PatchGeometry] = {}

    def _geom(self, n: int, side: float) -> _PatchGeometry:
        key = (n, side)
        if key not in self._geometry:
            self._geometry[key] = _PatchGeometry(n, side, self.params)
        return self._geometry[key]

    # -- core sweep ---------------------------------------------------------

    def _sweep(self, patch_heights: np.ndarray, actions: np.ndarray,
               geom: _PatchGeometry):
        """Swept removal per cell plus volume accounting, batched over actions.

        Returns (removal[K, nu, nv], v_swept[K], v_net[K], length[K],
        unevenness).
        """
        p = self.params
        a = np.clip(np.asarray(actions, dtype=np.float64), 0.0, 1.0)
        if a.ndim == 1:
            a = a[None, :]
        block = patch_heights[np.ix_(geom.u_idx, geom.v_idx)]
        face_height = float(block.max(initial=0.0))
        # Lateral unevenness across the bucket swath lowers capture: material
        # spills around partial walls instead of entering the bucket.
        lateral = np.abs(np.diff(block, axis=1)) / geom.cell
        unevenness = float(lateral.mean()) if lateral.size else 0.0
        capture = 1.0 / (1.0 + p.evenness_sensitivity * unevenness * unevenness)

        length = a[:, 0] * p.max_penetration
        entry_depth = (0.3 + 0.7 * a[:, 2]) * min(1.2, face_height)
        t = 1.0 - geom.u_values[None, :] / np.maximum(length[:, None], 1e-9)
        np.clip(t, 0.0, 1.0, out=t)
        depth = entry_depth[:, None] * _smootherstep(t)

        lower = np.maximum(block, 1e-9)
        removal = block[None, :, :] * np.tanh(depth[:, :, None] / lower[None, :, :])
        removal *= capture
        v_swept = removal.sum(axis=(1, 2)) * geom.cell_area

        cap = p.bucket_capacity * (0.6 + 0.4 * a[:, 1])
        k = _CAP_SHARPNESS
        v_net = -np.logaddexp(-k * v_swept, -k * cap) / k
        np.clip(v_net, 0.0, None, out=v_net)
        return removal, v_swept, v_net, length, unevenness

    def performance_arrays(self, patch_heights: np.ndarray, actions: np.ndarray,
                           norm: Normalization):
        """Batched (mass, time, work, objective) for actions on one patch."""
        p = self.params
        geom = self._geom(PERF_PATCH_N, PERF_PATCH_SIDE)
        a = np.clip(np.asarray(actions, dtype=np.float64), 0.0, 1.0)
        if a.ndim == 1:
            a = a[None, :]
        _, v_swept, v_net, length, unevenness = self._sweep(patch_heights, a, geom)
        mass = p.soil_density * v_net + MASS_FLOOR_KG
        # Ragged faces slow the fill and raise digging resistance (bucket
        # chatter and repositioning), beyond what they cost in capture.
        rough = unevenness * unevenness
        time_factor = 1.0 + p.roughness_time * rough
        work_factor = 1.0 + p.roughness_work * rough
        time = (p.base_time + p.time_per_metre * length + p.fill_time * (
            mass / (p.soil_density * p.bucket_capacity)
        )) * time_factor
        lift_height = 0.8 + 0.5 * a[:, 1] + 0.2 * (a[:, 3] - 0.5) ** 2
        work = (p.cut_work * v_swept + p.lift_work * mass * lift_height) * work_factor
        w = norm.weights
        obj = (
            w[0] * norm.mass_ref / mass
            + w[1] * time / norm.time_ref
            + w[2] * work / norm.work_ref
        )
        return mass, time, work, obj

    # -- WorldModel interface -------------------------------------------------

    def predict_performance_patch(self, patch: LocalPatch, action: LoadAction,
                                  norm: Normalization) -> PerformanceTriple:
        mass, time, work, _ = self.performance_arrays(
            patch.heights, action.as_array()[None, :], norm
        )
        return PerformanceTriple.from_raw(float(mass[0]), float(time[0]), float(work[0]), norm)

    def predict_performance(self, field: HeightField, dig: DigPose,
                            action: LoadAction, norm: Normalization) -> PerformanceTriple:
        patch = cutout(field, dig.as_tuple(), PERF_PATCH_N, PERF_PATCH_SIDE)
        return self.predict_performance_patch(patch, action, norm)

    def predict_pile(self, field: HeightField, dig: DigPose,
                     action: LoadAction) -> HeightField:
        p = self.params
        patch = cutout(field, dig.as_tuple(), PILE_PATCH_N, PILE_PATCH_SIDE)
        geom = self._geom(PILE_PATCH_N, PILE_PATCH_SIDE)
        removal, v_swept, v_net, length, _ = self._sweep(
            patch.heights, action.as_array()[None, :], geom
        )
        if v_swept[0] < _ZERO_SWEEP_M3:
            return field

        new_heights = np.array(patch.heights)
        block = new_heights[np.ix_(geom.u_idx, geom.v_idx)]
        block -= removal[0]
        new_heights[np.ix_(geom.u_idx, geom.v_idx)] = block

        excess = float(v_swept[0] - v_net[0])
        if excess > 1e-12 and geom.berm_v_idx.size:
            active_u = geom.u_idx[geom.u_values <= max(float(length[0]), geom.cell)]
            if active_u.size:
                cells = active_u.size * geom.berm_v_idx.size
                lift = excess / (cells * geom.cell_area)
                berm = new_heights[np.ix_(active_u, geom.berm_v_idx)]
                berm += lift
                new_heights[np.ix_(active_u, geom.berm_v_idx)] = berm

        updated = replace(field, patch.with_heights(new_heights))
        window = self._patch_window(field, patch)
        return settle(updated, p.repose, window=window)

    @staticmethod
    def _patch_window(field: HeightField, patch: LocalPatch) -> tuple:
        half = patch.side / 2.0
        cx, cy, _ = patch.pose
        x0 = int(math.floor((cx - half - field.origin[0]) / field.cell))
        x1 = int(math.ceil((cx + half - field.origin[0]) / field.cell)) + 1
        y0 = int(math.floor((cy - half - field.origin[1]) / field.cell))
        y1 = int(math.ceil((cy + half - field.origin[1]) / field.cell)) + 1
        return (max(x0, 0), min(x1, field.nx), max(y0, 0), min(y1, field.ny))


# ---------------------------------------------------------------------------
# Module-level operation wrappers


def predict_pile(field: HeightField, dig: DigPose, action: LoadAction,
                 params: SurrogateParams) -> HeightField:
    """Advance the pile state past one dig using the analytic surrogate."""
    return AnalyticSurrogate(params).predict_pile(field, dig, action)


def predict_performance(field: HeightField, dig: DigPose, action: LoadAction,
                        params: SurrogateParams, norm: Normalization) -> PerformanceTriple:
    """Predict loading mass/time/work for one dig using the analytic surrogate."""
    return AnalyticSurrogate(params).predict_performance(field, dig, action, norm)


@dataclass(frozen=True)
class OptimizerOptions:
    """Projected-gradient settings for the per-dig action optimisation."""

    step: float = 0.05
    fd_step: float = 1e-3
    max_iters: int = 30
    patience: int = 3
    tol: float = 1e-4
    init: tuple[float, float, float, float] = (1.0, 0.0, 0.5, 0.5)


def optimize_action_on_patch(model: AnalyticSurrogate, patch_heights: np.ndarray,
                             norm: Normalization, opts: OptimizerOptions | None = None,
                             trace: list | None = None):
    """Projected gradient descent over [0, 1]^4 on a fixed performance patch.

    Central-difference gradients, fixed step length, early stopping once the
    objective stops improving beyond ``tol`` for ``patience`` iterations.
    Returns the best action seen and its (mass, time, work, objective).
    """
    opts = opts or OptimizerOptions()
    a = np.array(opts.init, dtype=np.float64)
    np.clip(a, 0.0, 1.0, out=a)

    def evaluate(batch: np.ndarray) -> tuple:
        return model.performance_arrays(patch_heights, batch, norm)

    mass, time, work, obj = evaluate(a[None, :])
    best = (a.copy(), float(mass[0]), float(time[0]), float(work[0]), float(obj[0]))
    best_obj = float(obj[0])
    stall = 0
    for _ in range(opts.max_iters):
        probes = np.repeat(a[None, :], 8, axis=0)
        spans = np.empty(4)
        for i in range(4):
            hi = min(a[i] + opts.fd_step, 1.0)
            lo = max(a[i] - opts.fd_step, 0.0)
            probes[2 * i, i] = hi
            probes[2 * i + 1, i] = lo
            spans[i] = hi - lo
        _, _, _, probe_obj = evaluate(probes)
        grad = (probe_obj[0::2] - probe_obj[1::2]) / spans

        a = np.clip(a - opts.step * grad, 0.0, 1.0)
        mass, time, work, obj = evaluate(a[None, :])
        value = float(obj[0])
        if trace is not None:
            trace.append(value)
        if best_obj - value > opts.tol:
            stall = 0
        else:
            stall += 1
        if value < best_obj:
            best = (a.copy(), float(mass[0]), float(time[0]), float(work[0]), value)
            best_obj = value
        if stall >= opts.patience:
            break
    return best


def optimize_action(field: HeightField, dig: DigPose, params: SurrogateParams,
                    norm: Normalization, opts: OptimizerOptions | None = None,
                    trace: list | None = None) -> tuple[LoadAction, PerformanceTriple]:
    """Optimise the loading action for a dig; returns the best action and its
    performance.  Never exceeds ``opts.max_iters`` iterations and never
    returns a worse objective than the initial guess."""
    model = AnalyticSurrogate(params)
    patch = cutout(field, dig.as_tuple(), PERF_PATCH_N, PERF_PATCH_SIDE)
    a, mass, time, work, _ = optimize_action_on_patch(model, patch.heights, norm, opts, trace)
    perf = PerformanceTriple.from_raw(mass, time, work, norm)
    return LoadAction.from_array(a), perf
