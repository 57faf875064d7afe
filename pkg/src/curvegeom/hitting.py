"""Small-ball hitting chains and the type-probability rate.

For Brownian motion in ``d >= 3`` the probability of visiting
``B(z_1, eps), ..., B(z_n, eps)`` in order within unit time is of the order
``|x - z_1|^(2-d) ... |z_(n-1) - z_n|^(2-d) eps^((d-2) n)``. The Monte Carlo
estimator here refines the path by Brownian-bridge midpoints wherever it
comes close to a target; missed sub-grid entries can only lower the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from . import rng
from .estimate import Estimate
from .paths import TimeGrid, sample_paths
from .polyline import greedy_match


@dataclass(frozen=True)
class HitChainQuery:
    start: np.ndarray
    targets: np.ndarray
    radius: float
    dim: int

    def __post_init__(self):
        x = np.asarray(self.start, dtype=float).reshape(-1)
        z = np.atleast_2d(np.asarray(self.targets, dtype=float))
        object.__setattr__(self, "start", x)
        object.__setattr__(self, "targets", z)
        if self.dim < 3:
            raise ValueError(f"hitting chains need a transient motion: d >= 3, got d={self.dim}")
        if x.size != self.dim or z.shape[1] != self.dim:
            raise ValueError("start and targets must live in R^d")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        for i in range(len(z)):
            for j in range(i + 1, len(z)):
                if np.array_equal(z[i], z[j]):
                    raise ValueError(f"targets {i + 1} and {j + 1} coincide")


def wiener_hit_constant(d: int) -> float:
    """``Gamma(d/2 - 1) / (2 pi^(d/2))``, the all-time small-ball hitting constant."""
    if d < 3:
        raise ValueError(f"d must be >= 3 (transience), got {d}")
    return math.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))


def chain_asymptotic_scale(query: HitChainQuery) -> float:
    d = query.dim
    chain = np.vstack([query.start, query.targets])
    gaps = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    if np.any(gaps == 0):
        raise ValueError("consecutive chain points coincide")
    return float(np.prod(gaps ** (2.0 - d)) * query.radius ** ((d - 2) * len(query.targets)))


def _segment_distance(a: np.ndarray, b: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Distance from each target ``z`` (n, d) to segments ``[a, b]`` (..., d); shape (..., n)."""
    ab = b - a
    den = np.einsum("...i,...i->...", ab, ab)[..., None]
    az = z - a[..., None, :]
    lam = np.einsum("...ki,...i->...k", az, ab) / np.where(den > 0, den, 1.0)
    lam = np.clip(lam, 0.0, 1.0)
    closest = a[..., None, :] + lam[..., None] * ab[..., None, :]
    return np.linalg.norm(closest - z, axis=-1)


def refinement_threshold(radius: float, dt) -> np.ndarray:
    """Segment-to-centre distance below which a cell of length ``dt`` is refined.

    Equals ``2 eps`` once cells are short, widened by four bridge standard
    deviations on coarse cells so long cells that could excurse into a ball
    are not skipped.
    """
    return radius + np.maximum(radius, 4.0 * np.sqrt(dt))


def _refine_batch(seed, reps, paths, times, targets, radius, max_dt):
    """Adaptive dyadic bridge refinement; returns extra points per replica.

    Midpoint of dyadic node ``h`` (heap numbering, root 1) inside base cell
    ``c`` of replica ``r`` uses counters ``index = 8 h + coord``, ``sub = c``,
    ``purpose = REFINE``. The refined value at a location therefore never
    depends on which other cells were refined.
    """
    d = paths.shape[-1]
    a, b = paths[:, :-1], paths[:, 1:]
    dt0 = np.diff(times)
    dist = _segment_distance(a, b, targets).min(axis=-1)
    flag = (dist <= refinement_threshold(radius, dt0)[None]) & (dt0[None] > max_dt)
    r_idx, c_idx = np.nonzero(flag)
    heap = np.ones(r_idx.size, dtype=np.uint64)
    t0 = times[c_idx]
    dt = dt0[c_idx]
    left = a[r_idx, c_idx]
    right = b[r_idx, c_idx]
    extra_r, extra_t, extra_p = [], [], []
    coords = np.arange(d, dtype=np.uint64)
    while r_idx.size:
        z = rng.normals_at(seed, reps[r_idx][:, None], rng.REFINE, heap[:, None] * np.uint64(8) + coords, c_idx[:, None])
        mid = 0.5 * (left + right) + z * np.sqrt(dt / 4.0)[:, None]
        tm = t0 + dt / 2
        extra_r.append(r_idx)
        extra_t.append(tm)
        extra_p.append(mid)
        half = dt / 2
        r2 = np.concatenate([r_idx, r_idx])
        c2 = np.concatenate([c_idx, c_idx])
        h2 = np.concatenate([heap * np.uint64(2), heap * np.uint64(2) + np.uint64(1)])
        t2 = np.concatenate([t0, tm])
        l2 = np.concatenate([left, mid])
        rt2 = np.concatenate([mid, right])
        dt2 = np.concatenate([half, half])
        dist = _segment_distance(l2, rt2, targets).min(axis=-1)
        keep = (dist <= refinement_threshold(radius, dt2)) & (dt2 > max_dt)
        r_idx, c_idx, heap, t0, dt, left, right = r2[keep], c2[keep], h2[keep], t2[keep], dt2[keep], l2[keep], rt2[keep]
    if not extra_r:
        return np.zeros(0, dtype=int), np.zeros(0), np.zeros((0, d))
    return np.concatenate(extra_r), np.concatenate(extra_t), np.concatenate(extra_p)


def _hits(times, points, targets, radius) -> bool:
    if targets.shape[0] == 1:
        return bool(np.any(np.linalg.norm(points - targets[0], axis=-1) <= radius))
    order = np.argsort(times, kind="stable")
    return greedy_match(points[order], targets, radius) is not None


def mc_hit_chain(
    query: HitChainQuery,
    replicas: int,
    base_grid: Optional[TimeGrid] = None,
    seed: int = 0,
    batch: int = 4096,
    step_tol: Optional[float] = None,
    path_source: Optional[Callable[[int], tuple]] = None,
) -> Estimate:
    """Fraction of paths from ``query.start`` visiting the target balls in order on [0, 1].

    Cells passing near a target are halved by bridge sampling until their
    length is at most ``step_tol`` (default ``(eps / 4)**2``). ``path_source(replica) -> (times,
    points)`` replaces the sampler (no refinement) for hand-built paths.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    targets, radius = query.targets, query.radius
    if path_source is not None:
        hits = sum(_hits(*map(np.asarray, path_source(r)), targets, radius) for r in range(replicas))
        return Estimate.from_fraction(int(hits), replicas, seed)

    grid = base_grid if base_grid is not None else TimeGrid.uniform(256)
    times = grid.times
    max_dt = (radius / 4.0) ** 2 if step_tol is None else float(step_tol)
    hits = 0
    for lo in range(0, replicas, batch):
        reps = np.arange(lo, min(lo + batch, replicas))
        paths = sample_paths(query.dim, grid, seed, reps, start=query.start)
        er, et, ep = _refine_batch(seed, reps, paths, times, targets, radius, max_dt)
        base_in = np.linalg.norm(paths[:, :, None, :] - targets, axis=-1) <= radius
        extra_in = np.linalg.norm(ep[:, None, :] - targets, axis=-1) <= radius
        seen = base_in.any(axis=1)
        for k in range(targets.shape[0]):
            np.logical_or.at(seen[:, k], er[extra_in[:, k]], True)
        candidates = np.flatnonzero(seen.all(axis=1))
        if targets.shape[0] == 1:
            hits += candidates.size
            continue
        order = np.argsort(er, kind="stable")
        er, et, ep = er[order], et[order], ep[order]
        bounds = np.searchsorted(er, np.arange(reps.size + 1))
        for i in candidates:
            sl = slice(bounds[i], bounds[i + 1])
            all_t = np.concatenate([times, et[sl]])
            all_p = np.concatenate([paths[i], ep[sl]])
            hits += _hits(all_t, all_p, targets, radius)
    return Estimate.from_fraction(int(hits), replicas, seed)


def gaussian_ball_logprob(mean, variance: float, radius: float, d: Optional[int] = None) -> float:
    """``ln P(|G - mean| <= radius)`` for ``G ~ N(0, variance I_d)``.

    Radial quadrature of the noncentral chi density in the log domain, so
    probabilities far below the float range are still returned accurately.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    d = mean.size if d is None else int(d)
    if mean.size == 1 and d > 1:
        mean = np.concatenate([mean, np.zeros(d - 1)])
    if mean.size != d:
        raise ValueError("mean must have d coordinates")
    if not variance > 0:
        raise ValueError("variance must be positive")
    if not radius > 0:
        raise ValueError("radius must be positive")
    sigma = math.sqrt(variance)
    lam = float(np.linalg.norm(mean)) / sigma
    big_r = radius / sigma
    nu = d / 2.0 - 1.0

    if lam == 0.0:
        # central chi: regularised incomplete gamma is exact
        p = special.gammainc(d / 2.0, big_r**2 / 2.0)
        if p > 0:
            return float(math.log(p))
        return float((d / 2.0) * math.log(big_r**2 / 2.0) - big_r**2 / 2.0 - special.gammaln(d / 2.0 + 1.0))

    def logf(rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore"):
            return (
                (d / 2.0) * np.log(rho)
                - nu * math.log(lam)
                - 0.5 * (rho - lam) ** 2
                + np.log(special.ive(nu, lam * rho))
            )

    # the integrand peaks at min(lam, R); 40 units of log-decay on either side suffice
    lo = max(0.0, min(lam, big_r) - 40.0)
    hi = min(big_r, lam + math.sqrt(d) + 40.0)
    if hi <= lo:
        return -math.inf
    probe = np.linspace(lo, hi, 513)[1:] if lo == 0.0 else np.linspace(lo, hi, 513)
    shift = float(np.max(logf(probe)))
    if not np.isfinite(shift):
        return -math.inf
    peak = min(max(lam, lo), hi)
    points = sorted({p for p in (peak,) if lo < p < hi})
    val, _ = integrate.quad(
        lambda r: math.exp(float(logf(r)) - shift) if r > 0 else 0.0,
        lo,
        hi,
        points=points or None,
        epsabs=0.0,
        epsrel=1e-12,
        limit=400,
    )
    if val <= 0:
        return -math.inf
    return shift + math.log(val)


def gaussian_ball_prob(mean, variance: float, radius: float, d: Optional[int] = None) -> float:
    """``P(|G - mean| <= radius)`` for ``G ~ N(0, variance I_d)``."""
    return math.exp(gaussian_ball_logprob(mean, variance, radius, d))


def type_steps(centers, sequence: Sequence[int], n: int) -> np.ndarray:
    """Steps ``Z_alpha(k) - Z_alpha(k-1)``, ``k = 1..n``, with ``Z_alpha(0)`` the origin.

    The index sequence is cycled to length ``n``.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    seq = np.asarray([sequence[k % len(sequence)] for k in range(n)]) - 1
    pts = np.vstack([np.zeros(centers.shape[1]), centers[seq]])
    return np.diff(pts, axis=0)


def type_rate_sequence(centers, sequence: Sequence[int], eps: float, n_list: Sequence[int], d: Optional[int] = None):
    """``[(n, n^-2 ln prod_k P(w(1/n) in B(step_k, eps/n)))]`` for each ``n``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    d = centers.shape[1] if d is None else d
    out = []
    for n in n_list:
        if n < 1:
            raise ValueError("n must be >= 1")
        steps = type_steps(centers, sequence, n)
        uniq, counts = np.unique(steps, axis=0, return_counts=True)
        total = 0.0
        for step, c in zip(uniq, counts):
            lp = gaussian_ball_logprob(step, 1.0 / n, eps / n, d)
            if lp == -math.inf:
                total = -math.inf
                break
            total += c * lp
        out.append((int(n), total / n**2))
    return out
