"""Optimal transport distance with the bounded cost ``|u - v| / (1 + |u - v|)``.

Plans are solved exactly as integer min-cost flows on the complete bipartite
atom graph (networkx network simplex). Weights are brought to a common
integer denominator, capped at 10**6; the plan's objective is then evaluated
with the unrounded float costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import networkx as nx
import numpy as np

MAX_DENOMINATOR = 10**6
_COST_SCALE = 2**53


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if a.shape[0] != w.size or w.size == 0:
            raise ValueError("need one weight per atom and at least one atom")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {w.sum():.17g}, not 1")
        if not np.all(np.isfinite(a)):
            raise ValueError("atoms must be finite")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, atoms) -> "EmpiricalMeasure":
        a = np.atleast_2d(np.asarray(atoms, dtype=float))
        return cls(a, np.full(a.shape[0], 1.0 / a.shape[0]))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def __len__(self):
        return self.atoms.shape[0]


@dataclass(frozen=True)
class TransportPlan:
    """Coupling matrix ``plan[i, j]`` with margins ``mu.weights`` and ``nu.weights``."""

    plan: np.ndarray
    rounding_error: float = 0.0


def bounded_cost(u, v) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != v.shape:
        raise ValueError("dimension mismatch")
    diff = u - v
    scale = float(np.max(np.abs(diff))) if diff.size else 0.0
    if scale == 0.0:
        return 0.0
    # scaled norm avoids overflow; 1 / (1 + 1/r) stays finite as r grows
    r = scale * float(np.linalg.norm(diff / scale))
    return 1.0 / (1.0 + 1.0 / r)


def cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    return r / (1.0 + r)


def _integer_weights(w: np.ndarray, denom: int) -> np.ndarray:
    """Largest-remainder rounding of ``w * denom`` to integers summing to ``denom``."""
    raw = w * denom
    base = np.floor(raw).astype(np.int64)
    short = denom - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def _common_denominator(*weights) -> int:
    denom = 1
    for w in weights:
        for x in w:
            q = Fraction(float(x)).limit_denominator(MAX_DENOMINATOR).denominator
            denom = denom * q // math.gcd(denom, q)
            if denom > MAX_DENOMINATOR:
                return MAX_DENOMINATOR
    return denom


def rho(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> tuple:
    """Exact bounded-cost transport value and an optimal plan."""
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch")
    cost = cost_matrix(mu.atoms, nu.atoms)
    denom = _common_denominator(mu.weights, nu.weights)
    a = _integer_weights(mu.weights, denom)
    b = _integer_weights(nu.weights, denom)
    rounding = max(np.abs(a / denom - mu.weights).max(), np.abs(b / denom - nu.weights).max())
    g = nx.DiGraph()
    for i, x in enumerate(a):
        g.add_node(("s", i), demand=-int(x))
    for j, y in enumerate(b):
        g.add_node(("t", j), demand=int(y))
    # 2**53 keeps every float cost bit; Python ints make the flow objective exact
    icost = [[int(round(c * _COST_SCALE)) for c in row] for row in cost.tolist()]
    for i in range(len(mu)):
        if a[i] == 0:
            continue
        for j in range(len(nu)):
            if b[j]:
                g.add_edge(("s", i), ("t", j), weight=icost[i][j])
    _, flows = nx.network_simplex(g)
    flow = np.zeros((len(mu), len(nu)), dtype=np.int64)
    for i in range(len(mu)):
        for (_, j), f in flows.get(("s", i), {}).items():
            flow[i, j] = f
    plan = flow / denom
    return float(np.sum(plan * cost)), TransportPlan(plan, float(rounding))
