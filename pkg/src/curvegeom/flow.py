"""Drift-only equation with interaction and a four-attractor planar field.

Particles ``x_i`` carry equal mass ``1/M`` and move with velocity
``V(x_i) * m_k`` where ``m_k`` is the ``h``-weighted mass of the domain that
contains ``x_i`` (``coupling="domain"``) or of the whole plane
(``coupling="global"``). Masses are frozen within each RK4 step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng
from .estimate import Estimate, combined_se
from .paths import TimeGrid, sample_paths
from .polyline import TypeSpec, greedy_match
from .transport import EmpiricalMeasure, rho

COUPLINGS = ("domain", "global")


def _component(z):
    return np.where(z > 0.5, 1.0 - z, np.where(z < -0.5, -1.0 - z, z))


def field_V_example(p) -> np.ndarray:
    """Nine-branch field with breakpoints at +-1/2 and attractors at ``(+-1, +-1)``."""
    p = np.asarray(p, dtype=float)
    return _component(p)


def weight_h_default(p) -> np.ndarray:
    """``x^2 y^2 / ((1 + x^2)(1 + y^2))``: zero on the axes, positive and below 1 elsewhere."""
    p = np.asarray(p, dtype=float)
    x2, y2 = p[..., 0] ** 2, p[..., 1] ** 2
    return x2 * y2 / ((1 + x2) * (1 + y2))


def weight_one(p) -> np.ndarray:
    return np.ones(np.shape(p)[:-1])


def _quadrant(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return 1 + 2 * (p[..., 0] < 0) + (p[..., 1] < 0)


def _axis_distance(p) -> np.ndarray:
    return np.min(np.abs(np.asarray(p, dtype=float)), axis=-1)


@dataclass(frozen=True)
class DomainPartition:
    """``classifier`` maps points (..., d) to 1-based domain indices."""

    classifier: Callable
    n: int
    boundary_distance: Callable

    @classmethod
    def quadrants(cls) -> "DomainPartition":
        # D1 = (+,+), D2 = (+,-), D3 = (-,+), D4 = (-,-); axis points go to the + side
        return cls(_quadrant, 4, _axis_distance)


@dataclass(frozen=True)
class FieldSpec:
    V: Callable
    h: Callable
    attractors: np.ndarray

    @classmethod
    def example(cls, oracle: bool = False) -> "FieldSpec":
        """The four-attractor field; ``oracle=True`` replaces ``h`` by 1."""
        z = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
        return cls(field_V_example, weight_one if oracle else weight_h_default, z)


@dataclass(frozen=True)
class ParticleSystem:
    """Particle positions ``(..., M, 2)``; leading axes hold independent replicas."""

    positions: np.ndarray
    params: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim < 2 or pos.shape[-2] != np.size(self.params):
            raise ValueError("positions must be (..., M, d) with one parameter per particle")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "params", np.asarray(self.params, dtype=float))

    @property
    def size(self) -> int:
        return self.params.size

    def measure(self) -> EmpiricalMeasure:
        if self.positions.ndim != 2:
            raise ValueError("measure() needs a single replica")
        return EmpiricalMeasure.uniform(self.positions)


def domain_masses(positions, field: FieldSpec, partition: DomainPartition, domains=None) -> np.ndarray:
    """``m_k = (1/M) sum_{x_i in D_k} h(x_i)``, shape ``(..., N)``."""
    positions = np.asarray(positions, dtype=float)
    dom = partition.classifier(positions) if domains is None else domains
    hv = field.h(positions)
    m = positions.shape[-2]
    onehot = dom[..., None] == np.arange(1, partition.n + 1)
    return np.sum(onehot * hv[..., None], axis=-2) / m


def drift(p, domain_masses_, field: Optional[FieldSpec] = None, partition: Optional[DomainPartition] = None):
    """``V(p) * m_k`` with ``k`` the domain of ``p``; a scalar mass applies everywhere."""
    field = field or FieldSpec.example()
    partition = partition or DomainPartition.quadrants()
    p = np.asarray(p, dtype=float)
    masses = np.asarray(domain_masses_, dtype=float)
    if masses.ndim == 0:
        return field.V(p) * masses
    k = partition.classifier(p)
    m = np.take_along_axis(masses, (k - 1).reshape(masses.shape[:-1] + (-1,)), axis=-1).reshape(k.shape)
    return field.V(p) * m[..., None]


def _masses(pos, field, partition, domains, coupling):
    m = domain_masses(pos, field, partition, domains)
    if coupling == "global":
        m = np.repeat(m.sum(axis=-1, keepdims=True), partition.n, axis=-1)
    return m


def _velocity(pos, masses, field, domains):
    m = np.take_along_axis(masses, domains - 1, axis=-1)
    return field.V(pos) * m[..., None]


def evolve(
    system: ParticleSystem,
    field: FieldSpec,
    partition: DomainPartition,
    T: float,
    dt: float,
    snapshots: Optional[Sequence[float]] = None,
    coupling: str = "domain",
) -> list:
    """RK4 with masses frozen per step; returns the systems at ``snapshots`` (default ``[T]``).

    Raises FloatingPointError on a non-finite position and RuntimeError if a
    particle changes domain, both with the failing step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not T >= 0:
        raise ValueError("T must be non-negative")
    if coupling not in COUPLINGS:
        raise ValueError(f"coupling must be one of {COUPLINGS}")
    times = sorted(float(t) for t in (snapshots if snapshots is not None else [T]))
    if times and (times[0] < system.time or times[-1] > system.time + T + 1e-12):
        raise ValueError("snapshot times must lie in [time, time + T]")
    pos = system.positions.copy()
    domains = partition.classifier(pos)
    t = system.time
    out = []
    step = 0
    for target in times:
        n = int(math.ceil((target - t) / dt - 1e-9))
        h = (target - t) / n if n > 0 else 0.0
        for _ in range(n):
            m = _masses(pos, field, partition, domains, coupling)
            k1 = _velocity(pos, m, field, domains)
            k2 = _velocity(pos + 0.5 * h * k1, m, field, domains)
            k3 = _velocity(pos + 0.5 * h * k2, m, field, domains)
            k4 = _velocity(pos + h * k3, m, field, domains)
            pos = pos + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            step += 1
            if not np.all(np.isfinite(pos)):
                raise FloatingPointError(f"non-finite position at step {step} (t={t + h:.6g})")
            if np.any(partition.classifier(pos) != domains):
                raise RuntimeError(f"particle changed domain at step {step} (t={t + h:.6g})")
            t += h
        t = target
        out.append(ParticleSystem(pos.copy(), system.params, t))
    return out


def _scalar_closed_form(z0: float, t: float) -> float:
    s = math.copysign(1.0, z0)
    a = abs(z0)
    if a <= 0.5:
        exit_time = math.log(0.5 / a)
        if t <= exit_time:
            return z0 * math.exp(t)
        return s * (1.0 - 0.5 * math.exp(-(t - exit_time)))
    return s * (1.0 + (a - 1.0) * math.exp(-t))


def cauchy_closed_form(u, t: float) -> np.ndarray:
    """Exact solution of ``dx = V(x) dt`` composed across the +-1/2 breakpoints."""
    u = np.asarray(u, dtype=float)
    if t < 0:
        raise ValueError("t must be non-negative")
    if np.any(u == 0):
        raise ValueError("start on an axis: repelling boundary, flow direction undefined")
    return np.array([_scalar_closed_form(float(z), t) for z in u])


def limit_measure(mu0: EmpiricalMeasure, partition: DomainPartition, attractors) -> EmpiricalMeasure:
    z = np.asarray(attractors, dtype=float)
    k = partition.classifier(mu0.atoms)
    w = np.array([mu0.weights[k == i].sum() for i in range(1, partition.n + 1)])
    return EmpiricalMeasure(z, w / w.sum())


def rho_to_limit(trajectory: Sequence[ParticleSystem], limit: EmpiricalMeasure) -> list:
    if not trajectory:
        raise ValueError("trajectory must be non-empty")
    return [(s.time, rho(s.measure(), limit)[0]) for s in trajectory]


def curve_params(m: int) -> np.ndarray:
    """Midpoint parameters ``(i + 1/2) / M``; no particle starts at the origin."""
    return (np.arange(m) + 0.5) / m


def brownian_curves(m: int, seed: int, replicas) -> ParticleSystem:
    """Planar Brownian curves sampled at :func:`curve_params`, shape ``(R, M, 2)``."""
    r = curve_params(m)
    grid = TimeGrid(np.concatenate([[0.0], r]))
    paths = sample_paths(2, grid, seed, np.atleast_1d(replicas))[:, 1:, :]
    return ParticleSystem(paths, r)


def check_type_balls(spec: TypeSpec, field: FieldSpec, partition: DomainPartition):
    for i, z in enumerate(spec.centers, start=1):
        if int(partition.classifier(z)) != i or not partition.boundary_distance(z) > spec.radius:
            raise ValueError(f"ball B(Z_{i}, eps) is not inside the interior of D_{i}")


def type_prob_over_time(
    spec: TypeSpec,
    times: Sequence[float],
    replicas: int,
    seed: int,
    particles: int = 200,
    dt: float = 0.01,
    field: Optional[FieldSpec] = None,
    partition: Optional[DomainPartition] = None,
    coupling: str = "domain",
) -> list:
    """Fraction of evolved curves with at least the type, per time; same curves at every time."""
    field = field or FieldSpec.example()
    partition = partition or DomainPartition.quadrants()
    check_type_balls(spec, field, partition)
    times = sorted(float(t) for t in times)
    targets = spec.targets()
    hits = np.zeros((len(times), replicas))
    for lo in range(0, replicas, 250):
        reps = np.arange(lo, min(lo + 250, replicas))
        system = brownian_curves(particles, seed, reps)
        for ti, snap in enumerate(evolve(system, field, partition, times[-1], dt, times, coupling)):
            for j, r in enumerate(reps):
                hits[ti, r] = greedy_match(snap.positions[j], targets, spec.radius) is not None
    return [(t, Estimate.from_fraction(int(h.sum()), replicas, seed)) for t, h in zip(times, hits)]


def escape_mass(positions: np.ndarray, spec: TypeSpec, delta: float) -> np.ndarray:
    """Per-replica escape mass of ordered particle pairs; positions ``(..., M, d)``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    targets = spec.targets()
    steps = np.unique(np.diff(targets, axis=0), axis=0)
    pos = np.asarray(positions, dtype=float)
    m = pos.shape[-2]
    i, j = np.triu_indices(m, 1)
    diff = pos[..., j, :] - pos[..., i, :]
    inside = np.zeros(diff.shape[:-1], dtype=bool)
    for s in steps:
        inside |= np.linalg.norm(diff - s, axis=-1) <= delta
    return 1.0 - inside.mean(axis=-1)


def visitation_escape_mass(system: ParticleSystem, spec: TypeSpec, delta: float, k: int = 2) -> float:
    """Share of parameter pairs ``r_i < r_j`` whose increment misses every ``B(Z_a(m+1) - Z_a(m), delta)``."""
    if k != 2:
        raise NotImplementedError("escape mass is implemented for k = 2 only")
    if len(spec.sequence) < 2:
        raise ValueError("type needs at least two entries")
    order = np.argsort(system.params, kind="stable")
    return float(np.mean(escape_mass(np.take(system.positions, order, axis=-2), spec, delta)))


def interaction_coefficient(u, mu: EmpiricalMeasure, field: FieldSpec, partition: DomainPartition,
                            coupling: str = "domain") -> np.ndarray:
    m = domain_masses(mu.atoms, field, partition)
    if coupling == "global":
        mass = m.sum()
    else:
        # atoms weighted by their own measure weights, not 1/M
        dom = partition.classifier(mu.atoms)
        k = int(partition.classifier(np.asarray(u, dtype=float)))
        mass = float(np.sum(mu.weights * field.h(mu.atoms) * (dom == k)))
    return field.V(np.asarray(u, dtype=float)) * mass


def lipschitz_probe(field: FieldSpec, partition: DomainPartition, samples: int, seed: int,
                    atoms: int = 16, box: float = 3.0, coupling: str = "domain", shift: Optional[float] = None) -> float:
    """Largest observed ``|a(u, mu) - a(v, nu)| / (|u - v| + rho(mu, nu))`` over random pairs.

    With ``shift`` set, ``nu`` is ``mu`` translated by a random vector of that
    length (translation-only pairs).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    best = 0.0
    for s in range(samples):
        st = rng.Stream(seed, s, rng.MEASURE)
        u, v = box * (2 * st.uniforms((2, 2)) - 1)
        n1, n2 = 1 + (st.uniforms(2) * atoms).astype(int)
        a = box * (2 * st.uniforms((n1, 2)) - 1)
        if shift is None:
            b = box * (2 * st.uniforms((n2, 2)) - 1)
        else:
            ang = 2 * math.pi * st.uniforms(1)[0]
            b = a + shift * np.array([math.cos(ang), math.sin(ang)])
        mu, nu = EmpiricalMeasure.uniform(a), EmpiricalMeasure.uniform(b)
        den = float(np.linalg.norm(u - v)) + rho(mu, nu)[0]
        if den == 0:
            continue
        num = np.linalg.norm(interaction_coefficient(u, mu, field, partition, coupling)
                             - interaction_coefficient(v, nu, field, partition, coupling))
        best = max(best, float(num) / den)
    return best
