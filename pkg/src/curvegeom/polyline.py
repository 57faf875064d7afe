"""Polygonal lines and ``at least type`` detection up to epsilon.

A curve has at least type ``alpha(1), ..., alpha(n)`` up to ``eps`` when there
are increasing times at which it sits in the closed balls
``B(Z_alpha(1), eps), ..., B(Z_alpha(n), eps)`` in that order. Ball
membership is tested at the path's grid points only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class PolygonalLine:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.shape[0] < 1:
            raise ValueError("a polygonal line needs at least one vertex")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class TypeSpec:
    """Attractor centres, a radius and a 1-based index sequence."""

    centers: np.ndarray
    radius: float
    sequence: tuple

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        seq = tuple(int(a) for a in self.sequence)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "sequence", seq)
        problems = self.issues()
        if problems:
            raise ValueError("; ".join(problems))

    def issues(self) -> list:
        out = []
        if not self.radius > 0:
            out.append("radius must be positive")
        n = self.centers.shape[0]
        if not self.sequence:
            out.append("type sequence must be non-empty")
        bad = [a for a in self.sequence if not 1 <= a <= n]
        if bad:
            out.append(f"type indices {bad} outside 1..{n}")
        for i in range(n):
            for j in range(i + 1, n):
                gap = np.linalg.norm(self.centers[i] - self.centers[j])
                if gap <= 2 * self.radius:
                    out.append(
                        f"ball overlap: B(Z_{i + 1}, eps) and B(Z_{j + 1}, eps) intersect "
                        f"(|Z_{i + 1} - Z_{j + 1}| = {gap:g} <= 2 eps = {2 * self.radius:g})"
                    )
        return out

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def targets(self) -> np.ndarray:
        """Centres in sequence order, shape ``(n, d)``."""
        return self.centers[np.asarray(self.sequence) - 1]


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    times: Optional[tuple] = None


def greedy_match(points: np.ndarray, targets: np.ndarray, radius: float) -> Optional[list]:
    """Earliest strictly increasing indices with ``points[i_k]`` in ``B(targets[k], radius)``.

    Returns ``None`` if no such index sequence exists. Taking the earliest
    admissible index at every step is optimal: any valid sequence can be
    exchanged for the greedy one step by step.
    """
    inside = np.linalg.norm(points[:, None, :] - targets[None, :, :], axis=-1) <= radius
    out = []
    start = 0
    for k in range(targets.shape[0]):
        hits = np.flatnonzero(inside[start:, k])
        if hits.size == 0:
            return None
        i = start + int(hits[0])
        out.append(i)
        start = i + 1
    return out


def match_type(path, spec: TypeSpec) -> MatchResult:
    """Decide whether a sampled curve has at least the given type up to ``spec.radius``."""
    if path.dim != spec.dim:
        raise ValueError(f"path dimension {path.dim} does not match centres dimension {spec.dim}")
    idx = greedy_match(path.points, spec.targets(), spec.radius)
    if idx is None:
        return MatchResult(False)
    return MatchResult(True, tuple(float(path.times[i]) for i in idx))


def polyline_eval(line: PolygonalLine, knot_times: Sequence[float], t: float) -> np.ndarray:
    knots = np.asarray(knot_times, dtype=float)
    if knots.size != line.vertices.shape[0]:
        raise ValueError("need one knot time per vertex")
    if np.any(np.diff(knots) <= 0):
        raise ValueError("knot times must be strictly increasing")
    if not knots[0] <= t <= knots[-1]:
        raise ValueError(f"t={t} outside knot range [{knots[0]}, {knots[-1]}]")
    if knots.size == 1:
        return line.vertices[0].copy()
    k = min(int(np.searchsorted(knots, t, side="right")) - 1, knots.size - 2)
    lam = (t - knots[k]) / (knots[k + 1] - knots[k])
    return (1.0 - lam) * line.vertices[k] + lam * line.vertices[k + 1]
