"""Visitation densities and self-intersection local times (SILT).

The mollifier is the normalised indicator of a ball,
``f_eps(x) = 1{|x| <= eps} / vol(B(0, eps))``. Time integrals are Riemann
sums with trapezoid weights ``c_i`` on the path grid; the two-fold local time
sums ``c_i c_j f_eps(w_j - w_i - u)`` over grid pairs ``i < j`` (the diagonal
is excluded).

Conditional expectations given pinned values are computed two ways: by
quadrature of the exact Gaussian density of the increment and by Monte Carlo
over bridge-sampled conditioned paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numba as nb
import numpy as np
from scipy import integrate, optimize
from scipy.special import logsumexp

from .estimate import Estimate
from .paths import BrownianPath, PinSet, TimeGrid, sample_conditioned, sample_paths


def ball_volume(d: int, eps: float) -> float:
    return math.pi ** (d / 2) * eps**d / math.gamma(d / 2 + 1)


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    c = np.zeros_like(times)
    if times.size > 1:
        dt = np.diff(times)
        c[:-1] += dt / 2
        c[1:] += dt / 2
    return c


@nb.njit(cache=True)
def _pair_sum(points, c, u, eps2):
    n, d = points.shape
    total = 0.0
    for i in range(n - 1):
        ci = c[i]
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                diff = points[j, k] - points[i, k] - u[k]
                s += diff * diff
            if s <= eps2:
                total += ci * c[j]
    return total


@nb.njit(cache=True)
def _pair_sum_batch(paths, c, u, eps2, out):
    for r in range(paths.shape[0]):
        out[r] = _pair_sum(paths[r], c, u, eps2)


def silt_values(paths: np.ndarray, times: np.ndarray, eps: float, u) -> np.ndarray:
    """Two-fold mollified local time at offset ``u`` for each path in ``paths`` (R, T, d)."""
    paths = np.ascontiguousarray(paths, dtype=float)
    if paths.ndim == 2:
        paths = paths[None]
    d = paths.shape[-1]
    u = np.broadcast_to(np.asarray(u, dtype=float), (d,)).copy()
    out = np.empty(paths.shape[0])
    _pair_sum_batch(paths, trapezoid_weights(times), u, eps * eps, out)
    return out / ball_volume(d, eps)


def occupation_values(paths: np.ndarray, times: np.ndarray, eps: float, x) -> np.ndarray:
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 2:
        paths = paths[None]
    d = paths.shape[-1]
    inside = np.linalg.norm(paths - np.asarray(x, dtype=float), axis=-1) <= eps
    return inside.astype(float) @ trapezoid_weights(times) / ball_volume(d, eps)


def _check_eps(eps):
    if not eps > 0:
        raise ValueError("bandwidth must be positive")


def occupation_density(path: BrownianPath, bandwidth: float, x) -> Estimate:
    """Mollified occupation density of a single path at ``x``."""
    _check_eps(bandwidth)
    if np.size(x) != path.dim:
        raise ValueError("x must have the path dimension")
    val = float(occupation_values(path.points, path.times, bandwidth, x)[0])
    return Estimate(val, 0.0, 1, path.seed)


def silt_estimate(path: BrownianPath, bandwidth: float, u) -> Estimate:
    """Mollified two-fold self-intersection local time of one path at offset ``u``."""
    _check_eps(bandwidth)
    if np.size(u) != path.dim:
        raise ValueError("u must have the path dimension")
    val = float(silt_values(path.points, path.times, bandwidth, u)[0])
    return Estimate(val, 0.0, 1, path.seed)


def mean_silt(dim: int, grid: TimeGrid, bandwidth: float, u, replicas: int, seed: int, scale: float = 1.0) -> Estimate:
    """Monte Carlo mean of :func:`silt_estimate` over Brownian paths ``scale * w``."""
    _check_eps(bandwidth)
    vals = []
    for lo in range(0, replicas, 2048):
        paths = scale * sample_paths(dim, grid, seed, np.arange(lo, min(lo + 2048, replicas)))
        vals.append(silt_values(paths, grid.times, bandwidth, u))
    return Estimate.from_samples(np.concatenate(vals), seed)


def mean_occupation(dim: int, grid: TimeGrid, bandwidth: float, x, replicas: int, seed: int) -> Estimate:
    _check_eps(bandwidth)
    vals = []
    for lo in range(0, replicas, 2048):
        paths = sample_paths(dim, grid, seed, np.arange(lo, min(lo + 2048, replicas)))
        vals.append(occupation_values(paths, grid.times, bandwidth, x))
    return Estimate.from_samples(np.concatenate(vals), seed)


def transformed_silt_prediction(l2_at: Callable, jacobian, k: int, x) -> Estimate:
    """Local time of the image curve ``phi(w)`` predicted from that of ``w``.

    ``prediction = l2_at(D^-1 x) / |det D|^(k-1)`` for the Jacobian ``D`` of an
    affine map; the standard error is scaled by the same factor. ``l2_at``
    returns an :class:`Estimate` (or a float).
    """
    if k < 2:
        raise ValueError("the transform needs k >= 2")
    jac = np.atleast_2d(np.asarray(jacobian, dtype=float))
    det = float(np.linalg.det(jac))
    if det == 0 or not np.isfinite(det) or np.linalg.cond(jac) > 1e14:
        raise ValueError("Jacobian matrix is singular")
    pre = np.linalg.solve(jac, np.atleast_1d(np.asarray(x, dtype=float)))
    est = l2_at(pre)
    if not isinstance(est, Estimate):
        est = Estimate(float(est), 0.0, 1)
    return est.scaled(1.0 / abs(det) ** (k - 1))


def cond_silt_log_asymptotic(u: float, v_star: float, s_star: float) -> float:
    for name, val in (("u", u), ("v_star", v_star), ("s_star", s_star)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    return 2 * math.log(s_star) - math.log(math.pi * u * v_star) - math.sqrt(2) * u * v_star / s_star


def cond_silt_asymptotic(u: float, v_star: float, s_star: float) -> float:
    """``s*^2 / (pi u v*) exp(-sqrt(2) u v* / s*)``: large-``v*`` form of the pinned local time."""
    return math.exp(cond_silt_log_asymptotic(u, v_star, s_star))


@dataclass(frozen=True)
class PinnedSiltQuery:
    """Pinned planar path and the diagonal offset ``(u, u)``."""

    u: float
    pins: PinSet

    def __post_init__(self):
        if self.u == 0:
            raise ValueError("u must be non-zero")
        if self.pins.dim != 2:
            raise ValueError("pinned local time queries are planar")

    @property
    def point(self) -> np.ndarray:
        return np.array([self.u, self.u], dtype=float)

    def _sums(self) -> np.ndarray:
        vals = self.pins.knot_values
        return np.linalg.norm(vals[1:] + vals[:-1], axis=1)

    @property
    def k_star(self) -> int:
        """1-based index of the pin interval minimising ``|v_(k-1) + v_k|``."""
        return int(np.argmin(self._sums())) + 1

    @property
    def v_star(self) -> float:
        return float(self._sums()[self.k_star - 1])

    @property
    def s_star(self) -> float:
        knots = self.pins.knots
        return float(knots[self.k_star] - knots[self.k_star - 1])


@dataclass(frozen=True)
class SiltQuadrature:
    log_value: float
    same_interval: tuple
    cross: float
    log_cross: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


def _cells(pins: PinSet):
    """Pin intervals plus the free tail ``(s_n, 1]`` when ``s_n < 1``."""
    knots = pins.knots
    vals = pins.knot_values
    cells = [(knots[k - 1], knots[k], vals[k - 1], vals[k], False) for k in range(1, knots.size)]
    if pins.last < 1.0:
        cells.append((pins.last, 1.0, vals[-1], vals[-1], True))
    for a, b, *_ in cells:
        if b - a <= 0:
            raise ValueError("pin interval of zero length")
    return cells


def _cell_mean_var(cell, t):
    a, b, va, vb, tail = cell
    tau = t - a
    if tail:
        return np.broadcast_to(va, np.shape(t) + va.shape), tau
    length = b - a
    lam = (tau / length)[..., None]
    return (1 - lam) * va + lam * vb, tau * (length - tau) / length


def _same_cell_log(cell, point: np.ndarray, rtol: float) -> float:
    """ln of the integral over ``a <= t1 < t2 <= b`` reduced to the lag ``tau = t2 - t1``.

    Bridge cell: ``int_0^L (L - tau) phi_g(point - tau delta) dtau`` with
    ``g = tau (L - tau) / L``; tail cell: Wiener variance ``g = tau``, no drift.
    """
    a, b, va, vb, tail = cell
    length = b - a
    d = point.size
    delta = np.zeros(d) if tail else (vb - va) / length

    def logf(tau):
        g = tau if tail else tau * (length - tau) / length
        r = point - tau * delta
        return math.log(length - tau) - 0.5 * d * math.log(2 * math.pi * g) - float(r @ r) / (2 * g)

    def safe(tau):
        if tau <= 0 or tau >= length:
            return -math.inf
        return logf(tau)

    res = optimize.minimize_scalar(lambda t: -safe(t), bounds=(0.0, length), method="bounded",
                                   options={"xatol": 1e-14 * length})
    tau_star = float(res.x)
    top = safe(tau_star)
    probe = np.linspace(0, length, 2049)[1:-1]
    lp = np.array([safe(t) for t in probe])
    if lp.max() > top:
        tau_star, top = float(probe[lp.argmax()]), float(lp.max())
    if not np.isfinite(top):
        return -math.inf
    # log-spaced breakpoints around the peak so the adaptive rule resolves it
    scales = 2.0 ** np.arange(-12, 13)
    pts = np.concatenate([tau_star * scales[scales < 1], tau_star + (length - tau_star) * (1 - 1 / scales[scales > 1])])
    pts = np.unique(np.concatenate([[tau_star], pts]))
    pts = pts[(pts > 0) & (pts < length)]
    val, _ = integrate.quad(lambda t: math.exp(safe(t) - top), 0.0, length, points=pts, epsabs=0.0,
                            epsrel=rtol, limit=1000)
    return top + math.log(val) if val > 0 else -math.inf


def _cross_cells_log(c1, c2, point: np.ndarray, rtol: float) -> float:
    """ln of ``int_{c1} int_{c2} phi_{var}(point - (m(t2) - m(t1)))`` for distinct cells."""
    d = point.size

    def logf(t2, t1):
        m1, g1 = _cell_mean_var(c1, np.asarray(t1))
        m2, g2 = _cell_mean_var(c2, np.asarray(t2))
        var = float(g1 + g2)
        if var <= 0:
            return -math.inf
        r = point - (m2 - m1)
        return -0.5 * d * math.log(2 * math.pi * var) - float(r @ r) / (2 * var)

    n = 33
    g1 = np.linspace(c1[0], c1[1], n)
    g2 = np.linspace(c2[0], c2[1], n)
    top = max(logf(t2, t1) for t1 in g1 for t2 in g2)
    if not np.isfinite(top):
        return -math.inf
    val, _ = integrate.dblquad(lambda t2, t1: math.exp(logf(t2, t1) - top), c1[0], c1[1], c2[0], c2[1],
                               epsabs=0.0, epsrel=rtol)
    return top + math.log(val) if val > 0 else -math.inf


def cond_silt_terms(query: PinnedSiltQuery, rtol: float = 1e-10, point=None) -> SiltQuadrature:
    """Quadrature of the pinned two-fold local time, split into its cell contributions."""
    point = query.point if point is None else np.asarray(point, dtype=float)
    cells = _cells(query.pins)
    same = tuple(_same_cell_log(c, point, rtol) for c in cells)
    cross = [_cross_cells_log(cells[i], cells[j], point, max(rtol, 1e-8))
             for i in range(len(cells)) for j in range(i + 1, len(cells))]
    log_cross = float(logsumexp(cross)) if cross else -math.inf
    total = float(logsumexp(list(same) + ([log_cross] if cross else [])))
    return SiltQuadrature(total, same, math.exp(log_cross), log_cross)


def cond_silt_quadrature(query: PinnedSiltQuery, resolution: float = 1e-10) -> float:
    """``E(int int_{t1<t2} delta_(u,u)(w(t2) - w(t1)) dt1 dt2 | pins)`` by quadrature.

    Underflows to 0.0 for extreme offsets; use :func:`cond_silt_terms` for the
    log value.
    """
    return cond_silt_terms(query, resolution).value


def cond_silt_mc(query: PinnedSiltQuery, bandwidth: float, replicas: int, seed: int,
                 grid: Optional[TimeGrid] = None) -> Estimate:
    """Monte Carlo of the pinned local time from bridge-sampled conditioned paths."""
    _check_eps(bandwidth)
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    vals = []
    for lo in range(0, replicas, 2048):
        times, paths = sample_conditioned(2, query.pins, seed, np.arange(lo, min(lo + 2048, replicas)), grid)
        vals.append(silt_values(paths, times, bandwidth, query.point))
    return Estimate.from_samples(np.concatenate(vals), seed)


def intermittency_probe(x_list: Sequence[float], bandwidth: float, replicas: int, seed: int,
                        grid: Optional[TimeGrid] = None) -> list:
    """Mean planar local time at offsets of norm ``x`` along the diagonal.

    Every offset is evaluated on the same paths (common random numbers).
    """
    xs = [float(x) for x in x_list]
    if not xs:
        raise ValueError("x_list must be non-empty")
    if any(x <= 0 for x in xs) or any(b >= a for a, b in zip(xs, xs[1:])):
        raise ValueError("x_list must be positive and strictly decreasing")
    _check_eps(bandwidth)
    grid = grid if grid is not None else TimeGrid.uniform(512)
    direction = np.array([1.0, 1.0]) / math.sqrt(2)
    vals = [[] for _ in xs]
    for lo in range(0, replicas, 1024):
        paths = sample_paths(2, grid, seed, np.arange(lo, min(lo + 1024, replicas)))
        for i, x in enumerate(xs):
            vals[i].append(silt_values(paths, grid.times, bandwidth, x * direction))
    return [(x, Estimate.from_samples(np.concatenate(v), seed)) for x, v in zip(xs, vals)]
