"""Brownian path sampling, bridge refinement and the pinned decomposition.

A path pinned at times ``0 < s_1 < ... < s_n <= 1`` splits as
``w = poly + residual`` where ``poly`` is the polygonal line through
``(0, 0), (s_1, w(s_1)), ..., (s_n, w(s_n))`` and ``residual`` is a sequence of
independent Brownian bridges, one per pin interval. Beyond the last pin the
path continues as a free Wiener process.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .rng import Stream, as_stream


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("time grid must be a non-empty 1-d sequence")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if t[-1] > 1.0:
            raise ValueError("time grid must lie in [0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, steps: int, horizon: float = 1.0) -> "TimeGrid":
        if steps < 0:
            raise ValueError("steps must be non-negative")
        if steps == 0:
            return cls(np.zeros(1))
        return cls(np.linspace(0.0, horizon, steps + 1))

    def __len__(self):
        return self.times.size

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class BrownianPath:
    dim: int
    grid: TimeGrid
    points: np.ndarray
    seed: object = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (len(self.grid), self.dim):
            raise ValueError(f"points shape {pts.shape} does not match grid/dim")
        if not np.all(np.isfinite(pts)):
            raise ValueError("path coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def _check_dim(dim: int):
    if int(dim) != dim or dim < 1:
        raise ValueError("dimension must be a positive integer")


def sample_path(dim: int, grid: TimeGrid, stream_id=0, start=None) -> BrownianPath:
    """Sample a Brownian path on ``grid``.

    ``stream_id`` is a seed, a ``(seed, replica)`` pair or a Stream. The
    path consumes exactly ``dim * (len(grid) - 1)`` counters, cell by cell
    and coordinate by coordinate.
    """
    _check_dim(dim)
    st = as_stream(stream_id, rng.PATH)
    origin = np.zeros(dim) if start is None else np.asarray(start, dtype=float)
    pts = np.empty((len(grid), dim))
    pts[0] = origin
    if len(grid) > 1:
        z = st.normals((len(grid) - 1, dim))
        pts[1:] = origin + np.cumsum(z * np.sqrt(grid.steps)[:, None], axis=0)
    return BrownianPath(dim, grid, pts, (st.seed, st.replica))


def sample_paths(dim: int, grid: TimeGrid, seed: int, replicas, start=None) -> np.ndarray:
    """Stack of paths for the given replica indices, shape ``(R, len(grid), dim)``.

    Replica ``r`` equals ``sample_path(dim, grid, (seed, r)).points``.
    """
    _check_dim(dim)
    reps = np.arange(replicas) if np.isscalar(replicas) else np.asarray(replicas)
    origin = np.zeros(dim) if start is None else np.asarray(start, dtype=float)
    n = len(grid) - 1
    out = np.empty((reps.size, n + 1, dim))
    out[:, 0] = origin
    if n:
        idx = np.arange(n * dim, dtype=np.uint64).reshape(n, dim)
        z = rng.normals_at(seed, reps[:, None, None], rng.PATH, idx[None])
        out[:, 1:] = origin + np.cumsum(z * np.sqrt(grid.steps)[None, :, None], axis=1)
    return out


def bridge_fill(left: np.ndarray, right: np.ndarray, dt, levels: int, st: Stream) -> np.ndarray:
    """Insert ``2**levels - 1`` bridge points between each endpoint pair.

    ``left`` and ``right`` have shape ``(K, d)`` and ``dt`` is the cell length
    (scalar or shape ``(K,)``). Returns shape ``(K, 2**levels + 1, d)`` including
    both endpoints. Midpoints are drawn level by level (coarse to fine), each
    level consuming ``K * 2**level * d`` counters.
    """
    left = np.atleast_2d(np.asarray(left, dtype=float))
    right = np.atleast_2d(np.asarray(right, dtype=float))
    k, d = left.shape
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (k,))
    m = 2**levels
    out = np.empty((k, m + 1, d))
    out[:, 0] = left
    out[:, m] = right
    stride = m
    for level in range(levels):
        half = stride // 2
        idx = np.arange(half, m, stride)
        sd = np.sqrt(dt * (stride / m) / 4.0)
        z = st.normals((k, idx.size, d))
        out[:, idx] = 0.5 * (out[:, idx - half] + out[:, idx + half]) + z * sd[:, None, None]
        stride = half
    return out


def refine_bridge(path: BrownianPath, cell_index: int, levels: int, stream_id) -> BrownianPath:
    """Refine one grid cell by dyadic Brownian-bridge midpoint insertion.

    The new points are conditionally Gaussian given the cell endpoints, so
    the law of the old grid points is unchanged.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    n_cells = len(path.grid) - 1
    if not 0 <= cell_index < n_cells:
        raise IndexError(f"cell index {cell_index} outside 0..{n_cells - 1}")
    t = path.times
    t0, t1 = t[cell_index], t[cell_index + 1]
    filled = bridge_fill(
        path.points[cell_index][None], path.points[cell_index + 1][None], t1 - t0, levels, as_stream(stream_id, rng.REFINE)
    )[0]
    m = 2**levels
    new_t = t0 + (t1 - t0) * np.arange(1, m) / m
    times = np.concatenate([t[: cell_index + 1], new_t, t[cell_index + 1 :]])
    points = np.concatenate([path.points[: cell_index + 1], filled[1:-1], path.points[cell_index + 1 :]])
    return BrownianPath(path.dim, TimeGrid(times), points, path.seed)


@dataclass(frozen=True)
class PinSet:
    """Pinned values ``w(s_k) = v_k``; the pin ``(0, origin)`` is implicit."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None] if t.size > 1 or v.size == 1 else v[None, :]
        if t.size == 0:
            raise ValueError("at least one pin is required")
        if v.shape[0] != t.size:
            raise ValueError("one value per pin time is required")
        if np.any(t <= 0) or np.any(t > 1):
            raise ValueError("pin times must lie in (0, 1]")
        if np.any(np.diff(t) <= 0):
            raise ValueError("pin times must be strictly increasing (no duplicates)")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def knots(self) -> np.ndarray:
        """Pin times with the implicit pin at 0 prepended."""
        return np.concatenate([[0.0], self.times])

    @property
    def knot_values(self) -> np.ndarray:
        return np.vstack([np.zeros(self.dim), self.values])

    @property
    def last(self) -> float:
        return float(self.times[-1])


def poly_interp(knots: np.ndarray, values: np.ndarray, t) -> np.ndarray:
    """Piecewise-linear interpolation of vector ``values`` at ``knots``."""
    t = np.asarray(t, dtype=float)
    return np.stack([np.interp(t, knots, values[:, j]) for j in range(values.shape[1])], axis=-1)


@dataclass(frozen=True)
class Decomposition:
    """``w = poly + residual`` on ``[0, s_n]`` plus the free tail on ``(s_n, 1]``."""

    pins: PinSet
    times: np.ndarray
    poly: np.ndarray
    residual: np.ndarray
    tail_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def path(self) -> BrownianPath:
        """The recombined path on the full grid."""
        times = np.concatenate([self.times, self.tail_times])
        pts = self.poly + self.residual
        if self.tail_times.size:
            pts = np.vstack([pts, self.tail])
        return BrownianPath(self.pins.dim, TimeGrid(times), pts)


def _decomposition_grid(pins: PinSet, grid: Optional[TimeGrid]) -> np.ndarray:
    base = TimeGrid.uniform(256).times if grid is None else grid.times
    return np.union1d(base, pins.knots)


def _conditioned_from_normals(z: np.ndarray, pins: PinSet, times: np.ndarray):
    """Residual and tail from a block of normals ``z`` of shape ``(..., len(times), d)``.

    Within each pin interval ``[a, b]`` the residual is ``B(t) - (t - a)/(b - a) B(b)``
    for a Brownian motion ``B`` started at ``a``; the normal in the slot of the
    right pin time drives ``B(b)``. Slots at ``0`` and at pins inside the tail
    region are unused, so consumption is always ``len(times) * d`` counters.
    """
    knots = pins.knots
    s_n = pins.last
    dt = np.diff(times, prepend=0.0)
    steps = z * np.sqrt(dt)[:, None]
    inner = times <= s_n
    residual = np.zeros(z.shape[:-2] + (int(inner.sum()), z.shape[-1]))
    for a, b in zip(knots[:-1], knots[1:]):
        sel = np.nonzero((times > a) & (times <= b))[0]
        walk = np.cumsum(steps[..., sel, :], axis=-2)
        frac = (times[sel] - a) / (b - a)
        residual[..., sel, :] = walk - frac[:, None] * walk[..., -1:, :]
        residual[..., sel[-1], :] = 0.0
    tail = pins.values[-1] + np.cumsum(steps[..., ~inner, :], axis=-2)
    return residual, tail


def decompose(dim: int, pins: PinSet, stream_id=0, grid: Optional[TimeGrid] = None) -> Decomposition:
    """Sample a path conditioned on the pins, returned in decomposed form.

    ``poly`` is deterministic given the pins; ``residual`` holds independent
    bridges per pin interval; after the last pin the path continues as a
    Wiener process from ``v_n``. The sampling grid is ``grid`` (default 256
    uniform steps) merged with the pin times.
    """
    _check_dim(dim)
    if pins.dim != dim:
        raise ValueError(f"pins live in R^{pins.dim}, expected R^{dim}")
    st = as_stream(stream_id, rng.BRIDGE)
    times = _decomposition_grid(pins, grid)
    inner = times[times <= pins.last]
    poly = poly_interp(pins.knots, pins.knot_values, inner)
    residual, tail = _conditioned_from_normals(st.normals((times.size, dim)), pins, times)
    return Decomposition(pins, inner, poly, residual, times[times > pins.last], tail)


def sample_conditioned(dim: int, pins: PinSet, seed: int, replicas, grid: Optional[TimeGrid] = None):
    """Vectorised :func:`decompose` over replicas.

    Returns ``(times, paths)`` with ``paths`` of shape ``(R, len(times), dim)``;
    replica ``r`` equals ``decompose(dim, pins, (seed, r), grid).path()``.
    """
    _check_dim(dim)
    reps = np.arange(replicas) if np.isscalar(replicas) else np.asarray(replicas)
    times = _decomposition_grid(pins, grid)
    idx = np.arange(times.size * dim, dtype=np.uint64).reshape(times.size, dim)
    z = rng.normals_at(seed, reps[:, None, None], rng.BRIDGE, idx[None])
    residual, tail = _conditioned_from_normals(z, pins, times)
    inner = times[times <= pins.last]
    poly = poly_interp(pins.knots, pins.knot_values, inner)
    return times, np.concatenate([poly[None] + residual, tail], axis=1)


def split_path(path: BrownianPath, pin_times) -> Decomposition:
    """Decompose an already sampled path at ``pin_times`` (which must be grid times)."""
    pin_times = np.asarray(pin_times, dtype=float)
    idx = np.searchsorted(path.times, pin_times)
    if np.any(idx >= len(path.grid)) or not np.array_equal(path.times[np.minimum(idx, len(path.grid) - 1)], pin_times):
        raise ValueError("pin times must be grid times of the path")
    pins = PinSet(pin_times, path.points[idx] - path.points[0])
    s_n = pins.last
    mask = path.times <= s_n
    inner = path.times[mask]
    rel = path.points - path.points[0]
    poly = poly_interp(pins.knots, pins.knot_values, inner)
    residual = rel[mask] - poly
    residual[np.isin(inner, pins.knots)] = 0.0
    return Decomposition(pins, inner, poly, residual, path.times[~mask], rel[~mask])


def split_paths(paths: np.ndarray, times: np.ndarray, pin_times) -> tuple:
    """Vectorised :func:`split_path` for a stack ``(R, T, d)``; returns ``(poly, residual)`` on ``[0, s_n]``."""
    times = np.asarray(times, dtype=float)
    pin_times = np.asarray(pin_times, dtype=float)
    idx = np.searchsorted(times, pin_times)
    if np.any(idx >= times.size) or not np.array_equal(times[np.minimum(idx, times.size - 1)], pin_times):
        raise ValueError("pin times must be grid times of the paths")
    knots = np.concatenate([[0.0], pin_times])
    rel = paths - paths[:, :1]
    kv = rel[:, np.concatenate([[0], idx])]
    inner = times[times <= pin_times[-1]]
    k = np.clip(np.searchsorted(knots, inner, side="right") - 1, 0, knots.size - 2)
    lam = ((inner - knots[k]) / (knots[k + 1] - knots[k]))[None, :, None]
    poly = (1 - lam) * kv[:, k] + lam * kv[:, k + 1]
    residual = rel[:, : inner.size] - poly
    residual[:, np.isin(inner, knots)] = 0.0
    return poly, residual


def _interval_of(t: float, knots: np.ndarray) -> int:
    """Index k such that ``knots[k-1] <= t <= knots[k]``; pins map to the left interval."""
    return max(int(np.searchsorted(knots, t, side="left")), 1)


def residual_covariance(t: float, s: float, pins: PinSet) -> float:
    """Exact per-coordinate covariance of the residual at times ``t`` and ``s``."""
    s_n = pins.last
    for x in (t, s):
        if x < 0 or x > s_n:
            raise ValueError(f"time {x} outside [0, {s_n}]; beyond the last pin the path is a free Wiener process")
    knots = pins.knots
    kt, ks = _interval_of(t, knots), _interval_of(s, knots)
    if kt != ks:
        return 0.0
    a, b = knots[kt - 1], knots[kt]
    length = b - a
    tp, sp = t - a, s - a
    return float(min(tp, sp) - tp * sp / length)


def conditional_variance(t: float, pins: PinSet) -> float:
    """Per-coordinate variance of ``w(t)`` given the pins."""
    if t > pins.last:
        return float(t - pins.last)
    return residual_covariance(t, t, pins)
