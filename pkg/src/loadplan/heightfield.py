"""Uniform-grid heightfield terrain.

A :class:`HeightField` stores elevations (metres) on a regular grid;
``heights[ix, iy]`` is the elevation at world point
``origin + (ix * cell, iy * cell)``.  The module provides bilinear sampling,
rotated square patch cutout/replace, synthetic pile generation with seeded
gradient noise, and an angle-of-repose settling pass.

All operations are pure: fields are immutable once constructed and every
operation returns a new value, so fields are safe to share across threads.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._util import atomic_write_bytes, atomic_write_text

GROUND_LEVEL = 0.0

HFLD_MAGIC = b"HFLD"
HFLD_VERSION = 1

# Residual slope slack accepted by settle, on top of tan(repose).
_SLOPE_SLACK = 5.0e-7

# 8-connected neighbourhood with grid distances in cells.
_NEIGHBOUR_OFFSETS = (
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, math.sqrt(2.0)),
    (1, -1, math.sqrt(2.0)),
    (-1, 1, math.sqrt(2.0)),
    (-1, -1, math.sqrt(2.0)),
)


class BoundsError(ValueError):
    """A query point or patch footprint lies outside the grid."""


class ConvergenceError(RuntimeError):
    """Settling failed to reach the repose slope cap within the sweep budget."""

    def __init__(self, sweeps: int, max_slope: float):
        self.sweeps = sweeps
        self.max_slope = max_slope
        super().__init__(
            f"settle did not converge after {sweeps} sweeps "
            f"(max residual slope {max_slope:.6g})"
        )


@dataclass(frozen=True)
class GridSpec:
    """Grid dimensions for building fields: counts, cell size, world origin."""

    nx: int
    ny: int
    cell: float = 0.1
    origin: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class HeightField:
    """Immutable elevation grid over a uniform cell lattice."""

    nx: int
    ny: int
    cell: float
    origin: tuple[float, float]
    heights: np.ndarray

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs at least 2x2 cells, got {self.nx}x{self.ny}")
        if not self.cell > 0:
            raise ValueError(f"cell size must be positive, got {self.cell}")
        h = np.ascontiguousarray(np.asarray(self.heights, dtype=np.float64))
        if h.shape != (self.nx, self.ny):
            raise ValueError(f"heights shape {h.shape} does not match ({self.nx}, {self.ny})")
        if not np.all(np.isfinite(h)):
            raise ValueError("heights contain non-finite values")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def x_min(self) -> float:
        return self.origin[0]

    @property
    def y_min(self) -> float:
        return self.origin[1]

    @property
    def x_max(self) -> float:
        return self.origin[0] + (self.nx - 1) * self.cell

    @property
    def y_max(self) -> float:
        return self.origin[1] + (self.ny - 1) * self.cell

    def volume(self) -> float:
        """Material volume above ground level zero, cell-summed."""
        return float(self.heights.sum()) * self.cell * self.cell

    def with_heights(self, heights: np.ndarray) -> "HeightField":
        return HeightField(self.nx, self.ny, self.cell, self.origin, heights)

    def grid_index(self, x: float, y: float) -> tuple[float, float]:
        """World point to fractional grid coordinates."""
        return (x - self.origin[0]) / self.cell, (y - self.origin[1]) / self.cell


@dataclass(frozen=True)
class LocalPatch:
    """Square patch of elevations resampled around a world pose.

    The patch +x axis points along the pose heading; ``heights[iu, iv]``
    corresponds to patch-local offsets that are symmetric about the centre.
    """

    n: int
    side: float
    pose: tuple[float, float, float]
    heights: np.ndarray

    def __post_init__(self):
        h = np.ascontiguousarray(np.asarray(self.heights, dtype=np.float64))
        if h.shape != (self.n, self.n):
            raise ValueError(f"patch heights shape {h.shape} does not match n={self.n}")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @property
    def cell(self) -> float:
        return self.side / self.n

    def with_heights(self, heights: np.ndarray) -> "LocalPatch":
        return LocalPatch(self.n, self.side, self.pose, heights)


@dataclass(frozen=True)
class PileSpec:
    """Parameters of the synthetic trapezoidal pile.

    The prism runs the full grid width along x: flat ground up to ``toe_y``,
    a planar front slope rising to ``crest_height``, a flat top of
    ``top_length``, then a matching back slope down to ground.  Seeded
    gradient noise is added on the pile body only.
    """

    crest_height: float = 1.8
    front_slope: float = math.radians(30.0)
    noise_amplitude: float = 0.1
    noise_frequency: float = 0.5
    noise_octaves: int = 2
    seed: int = 0
    toe_y: float = 3.0
    top_length: float = 4.0

    def __post_init__(self):
        if not self.crest_height > 0:
            raise ValueError("crest_height must be positive")
        if not 0 < self.front_slope < math.pi / 2:
            raise ValueError("front_slope must be in (0, pi/2)")
        if self.noise_amplitude < 0 or self.noise_frequency <= 0:
            raise ValueError("noise amplitude must be >= 0 and frequency > 0")
        if self.noise_octaves < 1:
            raise ValueError("noise_octaves must be >= 1")


# ---------------------------------------------------------------------------
# Sampling


def _sample_grid(heights: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at fractional grid coordinates (no bounds check)."""
    nx, ny = heights.shape
    gx = np.clip(gx, 0.0, nx - 1.0)
    gy = np.clip(gy, 0.0, ny - 1.0)
    i0 = np.minimum(gx.astype(np.intp), nx - 2)
    j0 = np.minimum(gy.astype(np.intp), ny - 2)
    fx = gx - i0
    fy = gy - j0
    h00 = heights[i0, j0]
    h10 = heights[i0 + 1, j0]
    h01 = heights[i0, j0 + 1]
    h11 = heights[i0 + 1, j0 + 1]
    return (
        h00 * (1.0 - fx) * (1.0 - fy)
        + h10 * fx * (1.0 - fy)
        + h01 * (1.0 - fx) * fy
        + h11 * fx * fy
    )


def sample(field: HeightField, x: float, y: float) -> float:
    """Bilinearly interpolated elevation at a world point.

    Raises :class:`BoundsError` for queries outside the grid's sample
    rectangle (cell-centre extents).
    """
    gx, gy = field.grid_index(x, y)
    eps = 1e-9
    if not (-eps <= gx <= field.nx - 1 + eps and -eps <= gy <= field.ny - 1 + eps):
        raise BoundsError(
            f"sample point ({x:.3f}, {y:.3f}) outside field "
            f"[{field.x_min:.3f}, {field.x_max:.3f}] x [{field.y_min:.3f}, {field.y_max:.3f}]"
        )
    return float(_sample_grid(field.heights, np.asarray(gx), np.asarray(gy)))


def sample_many(field: HeightField, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorised :func:`sample`; raises on the first out-of-bounds point."""
    gx = (np.asarray(xs, dtype=np.float64) - field.origin[0]) / field.cell
    gy = (np.asarray(ys, dtype=np.float64) - field.origin[1]) / field.cell
    eps = 1e-9
    bad = (gx < -eps) | (gx > field.nx - 1 + eps) | (gy < -eps) | (gy > field.ny - 1 + eps)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise BoundsError(
            f"sample point ({np.asarray(xs)[tuple(idx)]:.3f}, "
            f"{np.asarray(ys)[tuple(idx)]:.3f}) outside field bounds"
        )
    return _sample_grid(field.heights, gx, gy)


# ---------------------------------------------------------------------------
# Rotated patch cutout / replace


def _patch_offsets(n: int, side: float) -> np.ndarray:
    cell = side / n
    return (np.arange(n, dtype=np.float64) - (n - 1) / 2.0) * cell


def _footprint_corners(pose: tuple[float, float, float], side: float) -> np.ndarray:
    cx, cy, theta = pose
    c, s = math.cos(theta), math.sin(theta)
    half = side / 2.0
    local = np.array([(-half, -half), (half, -half), (half, half), (-half, half)])
    world = np.empty_like(local)
    world[:, 0] = cx + local[:, 0] * c - local[:, 1] * s
    world[:, 1] = cy + local[:, 0] * s + local[:, 1] * c
    return world


def _check_footprint(field: HeightField, pose: tuple[float, float, float], side: float) -> None:
    eps = 1e-9
    for wx, wy in _footprint_corners(pose, side):
        if not (
            field.x_min - eps <= wx <= field.x_max + eps
            and field.y_min - eps <= wy <= field.y_max + eps
        ):
            raise BoundsError(
                f"patch corner ({wx:.3f}, {wy:.3f}) outside field "
                f"[{field.x_min:.3f}, {field.x_max:.3f}] x "
                f"[{field.y_min:.3f}, {field.y_max:.3f}]"
            )


def footprint_in_bounds(field: HeightField, pose: tuple[float, float, float],
                        side: float) -> bool:
    """True when the rotated square footprint stays on the grid."""
    try:
        _check_footprint(field, pose, side)
    except BoundsError:
        return False
    return True


def cutout(field: HeightField, pose: tuple[float, float, float], n: int, side: float) -> LocalPatch:
    """Resample an n x n patch centred at ``pose`` with +x along the heading."""
    _check_footprint(field, pose, side)
    cx, cy, theta = pose
    offs = _patch_offsets(n, side)
    u, v = np.meshgrid(offs, offs, indexing="ij")
    c, s = math.cos(theta), math.sin(theta)
    xs = cx + u * c - v * s
    ys = cy + u * s + v * c
    gx = (xs - field.origin[0]) / field.cell
    gy = (ys - field.origin[1]) / field.cell
    heights = _sample_grid(field.heights, gx, gy)
    return LocalPatch(n, side, (float(cx), float(cy), float(theta)), heights)


def replace(field: HeightField, patch: LocalPatch) -> HeightField:
    """Write a patch back into the field by inverse-rotation bilinear sampling.

    Every field cell whose centre lies inside the rotated square footprint is
    set from the patch; cells outside are untouched.  Returns a new field.
    """
    _check_footprint(field, patch.pose, patch.side)
    cx, cy, theta = patch.pose
    corners = _footprint_corners(patch.pose, patch.side)
    ix0 = max(int(math.floor((corners[:, 0].min() - field.origin[0]) / field.cell)), 0)
    ix1 = min(int(math.ceil((corners[:, 0].max() - field.origin[0]) / field.cell)) + 1, field.nx)
    iy0 = max(int(math.floor((corners[:, 1].min() - field.origin[1]) / field.cell)), 0)
    iy1 = min(int(math.ceil((corners[:, 1].max() - field.origin[1]) / field.cell)) + 1, field.ny)

    xs = field.origin[0] + np.arange(ix0, ix1) * field.cell
    ys = field.origin[1] + np.arange(iy0, iy1) * field.cell
    wx, wy = np.meshgrid(xs, ys, indexing="ij")
    c, s = math.cos(theta), math.sin(theta)
    du = wx - cx
    dv = wy - cy
    u = du * c + dv * s
    v = -du * s + dv * c
    half = patch.side / 2.0 + 1e-12
    inside = (np.abs(u) <= half) & (np.abs(v) <= half)

    # Patch samples live on an inset lattice; clamp so edge cells reuse the
    # outermost sampled ring rather than extrapolating.
    pcell = patch.cell
    gu = np.clip(u / pcell + (patch.n - 1) / 2.0, 0.0, patch.n - 1.0)
    gv = np.clip(v / pcell + (patch.n - 1) / 2.0, 0.0, patch.n - 1.0)
    values = _sample_grid(patch.heights, gu, gv)

    new_heights = np.array(field.heights)
    block = new_heights[ix0:ix1, iy0:iy1]
    block[inside] = values[inside]
    return field.with_heights(new_heights)


# ---------------------------------------------------------------------------
# Pile generation


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _gradient_noise(gx: np.ndarray, gy: np.ndarray, perm: np.ndarray,
                    gcos: np.ndarray, gsin: np.ndarray) -> np.ndarray:
    """Classic 2D lattice gradient noise, roughly in [-1, 1]."""
    ix = np.floor(gx).astype(np.intp)
    iy = np.floor(gy).astype(np.intp)
    fx = gx - ix
    fy = gy - iy

    def grad_dot(di: int, dj: int) -> np.ndarray:
        h = perm[(perm[(ix + di) & 255] + ((iy + dj) & 255)) & 255]
        return gcos[h] * (fx - di) + gsin[h] * (fy - dj)

    u = _fade(fx)
    v = _fade(fy)
    n0 = grad_dot(0, 0) + u * (grad_dot(1, 0) - grad_dot(0, 0))
    n1 = grad_dot(0, 1) + u * (grad_dot(1, 1) - grad_dot(0, 1))
    return math.sqrt(2.0) * (n0 + v * (n1 - n0))


def _noise_octaves(x: np.ndarray, y: np.ndarray, frequency: float,
                   octaves: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(256).astype(np.intp)
    angles = rng.uniform(0.0, 2.0 * math.pi, 256)
    gcos = np.cos(angles)
    gsin = np.sin(angles)
    total = np.zeros_like(x)
    amp_sum = 0.0
    amp = 1.0
    freq = frequency
    for _ in range(octaves):
        total += amp * _gradient_noise(x * freq, y * freq, perm, gcos, gsin)
        amp_sum += amp
        amp *= 0.5
        freq *= 2.0
    return total / amp_sum


def generate_pile(spec: PileSpec, grid: GridSpec) -> HeightField:
    """Build the synthetic pile: trapezoidal prism plus seeded gradient noise.

    Deterministic per seed (bitwise).  The prism footprint must fit inside the
    grid in y; otherwise a :class:`BoundsError` is raised.
    """
    tan_front = math.tan(spec.front_slope)
    run = spec.crest_height / tan_front
    back_end = spec.toe_y + run + spec.top_length + run
    y_lo = grid.origin[1]
    y_hi = grid.origin[1] + (grid.ny - 1) * grid.cell
    if spec.toe_y < y_lo or back_end > y_hi:
        raise BoundsError(
            f"pile footprint y in [{spec.toe_y:.3f}, {back_end:.3f}] exceeds "
            f"grid y in [{y_lo:.3f}, {y_hi:.3f}]"
        )

    ys = grid.origin[1] + np.arange(grid.ny) * grid.cell
    rise = tan_front * (ys - spec.toe_y)
    fall = tan_front * (back_end - ys)
    profile = np.minimum(np.minimum(rise, fall), spec.crest_height)
    np.clip(profile, GROUND_LEVEL, None, out=profile)
    heights = np.broadcast_to(profile, (grid.nx, grid.ny)).copy()

    if spec.noise_amplitude > 0:
        xs = grid.origin[0] + np.arange(grid.nx) * grid.cell
        wx, wy = np.meshgrid(xs, ys, indexing="ij")
        noise = _noise_octaves(wx, wy, spec.noise_frequency, spec.noise_octaves, spec.seed)
        body = heights > 1e-9
        heights = heights + spec.noise_amplitude * noise * body
        np.clip(heights, GROUND_LEVEL, None, out=heights)

    return HeightField(grid.nx, grid.ny, grid.cell, grid.origin, heights)


# ---------------------------------------------------------------------------
# Angle-of-repose settling


def _violating_box(heights: np.ndarray, cell: float, tan_repose: float) -> tuple | None:
    """Bounding box (x0, x1, y0, y1) of cells violating the slope cap, or None."""
    nx, ny = heights.shape
    found = None
    for di, dj, dist in ((1, 0, 1.0), (0, 1, 1.0), (1, 1, math.sqrt(2.0)), (1, -1, math.sqrt(2.0))):
        a = heights[max(0, -di): nx - max(0, di), max(0, -dj): ny - max(0, dj)]
        b = heights[max(0, di): nx - max(0, -di), max(0, dj): ny - max(0, -dj)]
        limit = dist * cell * (tan_repose + _SLOPE_SLACK)
        mask = np.abs(a - b) > limit
        if not mask.any():
            continue
        xs, ys = np.nonzero(mask)
        # A mask hit at (i, j) involves grid cells spanning [i, i+|di|] x [j, j+|dj|].
        x0 = int(xs.min())
        x1 = int(xs.max()) + abs(di) + 1
        y0 = int(ys.min())
        y1 = int(ys.max()) + abs(dj) + 1
        if found is None:
            found = [x0, x1, y0, y1]
        else:
            found[0] = min(found[0], x0)
            found[1] = max(found[1], x1)
            found[2] = min(found[2], y0)
            found[3] = max(found[3], y1)
    return tuple(found) if found else None


def _expand_box(box: tuple, margin: int, shape: tuple[int, int]) -> tuple:
    return (
        max(box[0] - margin, 0),
        min(box[1] + margin, shape[0]),
        max(box[2] - margin, 0),
        min(box[3] + margin, shape[1]),
    )


# Transfers relax pairs a few percent below the cap, mimicking how granular
# avalanches overshoot past the critical slope; the slack absorbs follow-on
# arrivals so chains damp out instead of ping-ponging along marginal slopes.
_SETTLE_MARGIN_FRACTION = 0.05
# Over-relaxation on the half-excess transfer, capped at full equalisation so
# a pair can never flip sign.
_SETTLE_OMEGA = 1.7


def _scan_axis(sub: np.ndarray, axis: int, reverse: bool, cell: float,
               tan_repose: float) -> None:
    """Sequential pair-equalisation scan along one axis (both flow signs).

    Visiting pairs in order lets a transfer cascade into the next pair within
    the same pass row by row, so material crosses the active region in one
    scan instead of diffusing one cell per sweep.
    """
    threshold = cell * tan_repose
    give = threshold * _SETTLE_MARGIN_FRACTION
    n = sub.shape[axis]
    order = range(n - 1, 0, -1) if reverse else range(1, n)
    view = sub if axis == 0 else sub.T
    for k in order:
        a = view[k]
        b = view[k - 1]
        d = a - b
        mag = np.abs(d)
        above = mag - threshold
        if above.max() <= 0.0:
            continue
        fired = above > 0.0
        q = np.where(fired, (above + give) * (0.5 * _SETTLE_OMEGA), 0.0)
        np.minimum(q, 0.5 * mag, out=q)
        q *= np.sign(d)
        a -= q
        b += q


def _diagonal_pass(sub: np.ndarray, cell: float, tan_repose: float) -> None:
    """One bidirectional Jacobi transfer along each diagonal."""
    nx, ny = sub.shape
    step = cell * math.sqrt(2.0)
    threshold = step * tan_repose
    give = threshold * _SETTLE_MARGIN_FRACTION
    for di, dj in ((1, 1), (1, -1)):
        src = sub[max(0, -di): nx - max(0, di), max(0, -dj): ny - max(0, dj)]
        dst = sub[max(0, di): nx - max(0, -di), max(0, dj): ny - max(0, -dj)]
        d = src - dst
        mag = np.abs(d)
        above = mag - threshold
        if above.max() <= 0.0:
            continue
        fired = above > 0.0
        q = np.where(fired, (above + give) * (0.5 * _SETTLE_OMEGA), 0.0)
        np.minimum(q, 0.5 * mag, out=q)
        q *= np.sign(d)
        src -= q
        dst += q


def _union_box(a: tuple, b: tuple) -> tuple:
    return (min(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), max(a[3], b[3]))


def settle(field: HeightField, repose: float, *, max_sweeps: int = 10_000,
           window: tuple | None = None) -> HeightField:
    """Relax the field until no inter-cell slope exceeds tan(repose).

    Material moves downhill between 8-connected neighbours; total volume is
    conserved to float accuracy.  ``window`` optionally seeds the active
    region (grid index box ``(x0, x1, y0, y1)``); the active box follows the
    violating region as material spreads and a final global scan guarantees
    the cap holds everywhere.
    """
    if not 0 < repose < math.pi / 2:
        raise ValueError("repose must be in (0, pi/2)")
    tan_repose = math.tan(repose)
    shape = field.heights.shape

    if window is None:
        box = _violating_box(field.heights, field.cell, tan_repose)
    else:
        box = _expand_box(tuple(window), 2, shape)
    if box is None:
        return field

    h = np.array(field.heights)
    box = _expand_box(box, 2, shape)
    sweeps = 0
    while sweeps < max_sweeps:
        region = h[box[0]:box[1], box[2]:box[3]]
        local = _violating_box(region, field.cell, tan_repose)
        if local is None:
            remaining = _violating_box(h, field.cell, tan_repose)
            if remaining is None:
                return field.with_heights(h)
            box = _expand_box(remaining, 4, shape)
            continue
        vbox = (local[0] + box[0], local[1] + box[0], local[2] + box[2], local[3] + box[2])
        touches_rim = (
            (local[0] <= 1 and box[0] > 0)
            or (local[1] >= region.shape[0] - 1 and box[1] < shape[0])
            or (local[2] <= 1 and box[2] > 0)
            or (local[3] >= region.shape[1] - 1 and box[3] < shape[1])
        )
        # Track the violating region: grow generously when activity reaches the
        # window rim, otherwise shrink the window to the violations plus slack.
        box = _expand_box(vbox, 16 if touches_rim else 4, shape)
        active = _expand_box(vbox, 1, shape)
        sub = h[active[0]:active[1], active[2]:active[3]]
        _scan_axis(sub, 1, False, field.cell, tan_repose)
        _scan_axis(sub, 1, True, field.cell, tan_repose)
        _scan_axis(sub, 0, False, field.cell, tan_repose)
        _scan_axis(sub, 0, True, field.cell, tan_repose)
        _diagonal_pass(sub, field.cell, tan_repose)
        sweeps += 1

    final = _violating_box(h, field.cell, tan_repose)
    residual = 0.0
    if final is not None:
        sub = h[final[0]:final[1], final[2]:final[3]]
        gx, gy = np.gradient(sub, field.cell)
        residual = float(np.hypot(gx, gy).max())
    raise ConvergenceError(sweeps, residual)


# ---------------------------------------------------------------------------
# Binary (HFLD) and CSV formats

_HFLD_HEADER = struct.Struct("<4sHIIddd")


def write_hfld(field: HeightField, path: str | Path) -> None:
    """Serialise to the HFLD binary format (little-endian, f32 heights)."""
    header = _HFLD_HEADER.pack(
        HFLD_MAGIC, HFLD_VERSION, field.nx, field.ny,
        field.cell, field.origin[0], field.origin[1],
    )
    atomic_write_bytes(path, header + field.heights.astype("<f4").tobytes(order="C"))


def read_hfld(path: str | Path) -> HeightField:
    raw = Path(path).read_bytes()
    if len(raw) < _HFLD_HEADER.size:
        raise ValueError(f"{path}: truncated heightfield file")
    magic, version, nx, ny, cell, ox, oy = _HFLD_HEADER.unpack_from(raw)
    if magic != HFLD_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != HFLD_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = _HFLD_HEADER.size + 4 * nx * ny
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    heights = np.frombuffer(raw, dtype="<f4", offset=_HFLD_HEADER.size).astype(np.float64)
    return HeightField(nx, ny, cell, (ox, oy), heights.reshape(nx, ny))


def write_csv(field: HeightField, path: str | Path) -> None:
    """Debug CSV export: ny rows of nx comma-separated elevations."""
    lines = []
    for iy in range(field.ny):
        lines.append(",".join(repr(float(v)) for v in field.heights[:, iy]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path: str | Path, cell: float = 0.1,
             origin: tuple[float, float] = (0.0, 0.0)) -> HeightField:
    rows = []
    for line in Path(path).read_text().strip().splitlines():
        rows.append([float(tok) for tok in line.split(",")])
    ny = len(rows)
    nx = len(rows[0])
    heights = np.empty((nx, ny))
    for iy, row in enumerate(rows):
        if len(row) != nx:
            raise ValueError(f"{path}: ragged CSV row {iy}")
        heights[:, iy] = row
    return HeightField(nx, ny, cell, origin, heights)
