"""Config-driven experiment runner.

A config is one JSON object::

    {"experiment": "hit", "seed": 1, "replicas": 10000, "output": "out/hit",
     "params": {"dim": 3, "start": [0, 0, 0], "targets": [[1, 0, 0]], "radius": 0.1}}

:func:`validate` lists every problem without doing any work; :func:`run`
refuses configs with problems, computes rows and :func:`write_report` emits
``<output>.csv`` plus ``<output>.meta.json``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np

from . import flow, hitting, silt
from .paths import PinSet, TimeGrid
from .polyline import TypeSpec
from .transport import EmpiricalMeasure, rho

EXPERIMENTS = ("hit", "type-rate", "silt", "cond-silt", "transform", "flow", "wasserstein", "intermittency")
LEADING = ("experiment", "seed", "replicas")


class ConfigError(ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    replicas: int = 1000
    output: str = "report"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError(["config must be a JSON object"])
        unknown = set(raw) - {"experiment", "params", "seed", "replicas", "output"}
        if unknown:
            raise ConfigError([f"unknown top-level keys: {sorted(unknown)}"])
        if "experiment" not in raw:
            raise ConfigError(["missing key 'experiment'"])
        return cls(raw["experiment"], dict(raw.get("params", {})), raw.get("seed", 0),
                   raw.get("replicas", 1000), raw.get("output", "report"))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError([f"invalid JSON: {exc}"]) from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "seed": self.seed,
                "replicas": self.replicas, "output": self.output}


@dataclass
class Report:
    config: ExperimentConfig
    rows: list
    wall_time: float = 0.0

    def columns(self) -> list:
        cols = list(LEADING)
        for row in self.rows:
            cols += [k for k in row if k not in cols]
        return cols

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        writer.writerow(cols)
        lead = {"experiment": self.config.experiment, "seed": self.config.seed, "replicas": self.config.replicas}
        for row in self.rows:
            full = {**lead, **row}
            writer.writerow([_fmt(full.get(c, "")) for c in cols])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {"config": self.config.to_dict(), "version": _version(), "wall_time": self.wall_time,
                "columns": self.columns(), "rows": len(self.rows)}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# validation helpers: each appends human-readable issues naming the key

def _num(p, key, issues, positive=False, integer=False, minimum=None, required=True):
    if key not in p:
        if required:
            issues.append(f"missing required param '{key}'")
        return None
    v = p[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        issues.append(f"param '{key}' must be a finite number")
        return None
    if integer and int(v) != v:
        issues.append(f"param '{key}' must be an integer")
        return None
    if positive and not v > 0:
        issues.append(f"param '{key}' must be positive")
        return None
    if minimum is not None and v < minimum:
        issues.append(f"param '{key}' must be >= {minimum}")
        return None
    return v


def _array(p, key, issues, ndim, required=True):
    if key not in p:
        if required:
            issues.append(f"missing required param '{key}'")
        return None
    try:
        a = np.asarray(p[key], dtype=float)
    except (TypeError, ValueError):
        issues.append(f"param '{key}' must be numeric")
        return None
    if a.ndim != ndim or a.size == 0 or not np.all(np.isfinite(a)):
        issues.append(f"param '{key}' must be a non-empty finite {'vector' if ndim == 1 else 'matrix'}")
        return None
    return a


def _measure_issues(p, key, issues):
    m = p.get(key)
    if not isinstance(m, dict):
        issues.append(f"missing required param '{key}' (object with 'atoms' and optional 'weights')")
        return None
    atoms = _array(m, "atoms", issues, 2)
    if atoms is None:
        return None
    w = m.get("weights")
    try:
        return EmpiricalMeasure(atoms, np.full(len(atoms), 1 / len(atoms)) if w is None else w)
    except (ValueError, TypeError) as exc:
        issues.append(f"param '{key}': {exc}")
        return None


def _validate_hit(p, issues):
    d = _num(p, "dim", issues, integer=True)
    if d is not None and d < 3:
        issues.append(f"param 'dim'={d}: hitting chains need Brownian motion in dimension d >= 3")
    _num(p, "radius", issues, positive=True)
    start = _array(p, "start", issues, 1)
    targets = _array(p, "targets", issues, 2)
    _num(p, "steps", issues, integer=True, minimum=1, required=False)
    _num(p, "step_tol", issues, positive=True, required=False)
    if d is not None:
        for name, a in (("start", start), ("targets", targets)):
            if a is not None and a.shape[-1] != d:
                issues.append(f"param '{name}' must have dimension {d}")
    if targets is not None and "radius" in p and not issues:
        try:
            hitting.HitChainQuery(start, targets, p["radius"], int(d))
        except ValueError as exc:
            issues.append(str(exc))


def _validate_type_rate(p, issues):
    centers = _array(p, "centers", issues, 2)
    eps = _num(p, "radius", issues, positive=True)
    seq = p.get("sequence")
    if not isinstance(seq, list) or not seq:
        issues.append("missing required param 'sequence' (non-empty list of 1-based indices)")
        seq = None
    n_list = p.get("n_list")
    if not isinstance(n_list, list) or not n_list or not all(isinstance(n, int) and n >= 1 for n in n_list):
        issues.append("missing required param 'n_list' (list of positive integers)")
    if centers is not None and eps is not None and seq is not None:
        try:
            issues.extend(_spec_issues(centers, eps, seq))
        except (TypeError, ValueError) as exc:
            issues.append(str(exc))


def _spec_issues(centers, eps, seq):
    spec = object.__new__(TypeSpec)
    object.__setattr__(spec, "centers", np.atleast_2d(centers))
    object.__setattr__(spec, "radius", eps)
    object.__setattr__(spec, "sequence", tuple(int(a) for a in seq))
    return spec.issues()


def _validate_silt(p, issues):
    d = _num(p, "dim", issues, integer=True, minimum=1)
    _num(p, "radius", issues, positive=True)
    u = _array(p, "offset", issues, 1)
    _num(p, "steps", issues, integer=True, minimum=1, required=False)
    if d is not None and u is not None and u.size != d:
        issues.append(f"param 'offset' must have dimension {d}")


def _validate_cond_silt(p, issues):
    u = _num(p, "u", issues)
    if u == 0:
        issues.append("param 'u' must be non-zero")
    _num(p, "radius", issues, positive=True)
    times = _array(p, "pin_times", issues, 1)
    values = _array(p, "pin_values", issues, 2)
    _num(p, "steps", issues, integer=True, minimum=1, required=False)
    if times is not None and values is not None:
        try:
            pins = PinSet(times, values)
            if pins.dim != 2:
                issues.append("param 'pin_values' must be planar (d = 2)")
        except ValueError as exc:
            issues.append(f"pins: {exc}")


def _validate_transform(p, issues):
    _num(p, "radius", issues, positive=True)
    _num(p, "x", issues)
    k = _num(p, "k", issues, integer=True, required=False)
    if k is not None and k < 2:
        issues.append("param 'k' must be >= 2")
    s = _num(p, "scale", issues)
    if s == 0:
        issues.append("param 'scale' must be non-zero (Jacobian matrix is singular)")
    _num(p, "steps", issues, integer=True, minimum=1, required=False)


def _validate_flow(p, issues):
    mode = p.get("mode", "curve")
    if mode not in ("oracle", "curve"):
        issues.append("param 'mode' must be 'oracle' or 'curve'")
        return
    times = _array(p, "times", issues, 1)
    if times is not None and (np.any(times < 0) or np.any(np.diff(times) <= 0)):
        issues.append("param 'times' must be non-negative and strictly increasing")
    _num(p, "dt", issues, positive=True, required=False)
    if p.get("coupling", "domain") not in flow.COUPLINGS:
        issues.append(f"param 'coupling' must be one of {flow.COUPLINGS}")
    if mode == "oracle":
        u = _array(p, "start", issues, 1)
        if u is not None and (u.size != 2 or np.any(u == 0)):
            issues.append("param 'start' must be a planar point off the axes")
    else:
        _num(p, "particles", issues, integer=True, minimum=1, required=False)


def _validate_wasserstein(p, issues):
    mu = _measure_issues(p, "mu", issues)
    nu = _measure_issues(p, "nu", issues)
    if mu is not None and nu is not None and mu.dim != nu.dim:
        issues.append("params 'mu' and 'nu' have different dimensions")


def _validate_intermittency(p, issues):
    _num(p, "radius", issues, positive=True)
    xs = _array(p, "x_list", issues, 1)
    if xs is not None and (np.any(xs <= 0) or np.any(np.diff(xs) >= 0)):
        issues.append("param 'x_list' must be positive and strictly decreasing")
    _num(p, "steps", issues, integer=True, minimum=1, required=False)


_VALIDATORS = {
    "hit": _validate_hit, "type-rate": _validate_type_rate, "silt": _validate_silt,
    "cond-silt": _validate_cond_silt, "transform": _validate_transform, "flow": _validate_flow,
    "wasserstein": _validate_wasserstein, "intermittency": _validate_intermittency,
}


def validate(config: ExperimentConfig) -> list:
    """Every reason :func:`run` would reject ``config``; empty when it is acceptable."""
    issues = []
    if config.experiment not in EXPERIMENTS:
        return [f"unknown experiment '{config.experiment}' (expected one of {', '.join(EXPERIMENTS)})"]
    if isinstance(config.seed, bool) or not isinstance(config.seed, int) or not 0 <= config.seed < 2**64:
        issues.append("'seed' must be an integer in [0, 2**64)")
    if isinstance(config.replicas, bool) or not isinstance(config.replicas, int) or config.replicas < 1:
        issues.append("'replicas' must be a positive integer")
    if not isinstance(config.params, dict):
        return issues + ["'params' must be an object"]
    _VALIDATORS[config.experiment](config.params, issues)
    return issues


def _run_hit(c: ExperimentConfig):
    p = c.params
    q = hitting.HitChainQuery(p["start"], p["targets"], p["radius"], int(p["dim"]))
    grid = TimeGrid.uniform(int(p.get("steps", 256)))
    est = hitting.mc_hit_chain(q, c.replicas, grid, c.seed, step_tol=p.get("step_tol"))
    row = {"n_targets": len(q.targets), "radius": q.radius, "estimate": est.value, "std_error": est.std_error}
    try:
        scale = hitting.chain_asymptotic_scale(q)
        row.update(scale=scale, ratio=est.value / scale)
    except ValueError:
        pass
    return [row]


def _run_type_rate(c):
    p = c.params
    out = hitting.type_rate_sequence(p["centers"], p["sequence"], p["radius"], p["n_list"])
    return [{"n": n, "rate": r} for n, r in out]


def _run_silt(c):
    p = c.params
    grid = TimeGrid.uniform(int(p.get("steps", 256)))
    est = silt.mean_silt(int(p["dim"]), grid, p["radius"], p["offset"], c.replicas, c.seed)
    return [{"radius": p["radius"], "mean": est.value, "std_error": est.std_error}]


def _run_cond_silt(c):
    p = c.params
    q = silt.PinnedSiltQuery(p["u"], PinSet(p["pin_times"], p["pin_values"]))
    terms = silt.cond_silt_terms(q)
    mc = silt.cond_silt_mc(q, p["radius"], c.replicas, c.seed, TimeGrid.uniform(int(p.get("steps", 256))))
    return [{"u": q.u, "v_star": q.v_star, "s_star": q.s_star, "quadrature": terms.value,
             "log_quadrature": terms.log_value,
             "log_asymptotic": silt.cond_silt_log_asymptotic(abs(q.u), q.v_star, q.s_star) if q.v_star > 0 else "",
             "mc": mc.value, "mc_std_error": mc.std_error}]


def _run_transform(c):
    p = c.params
    scale, x, eps = float(p["scale"]), float(p["x"]), float(p["radius"])
    k = int(p.get("k", 2))
    grid = TimeGrid.uniform(int(p.get("steps", 256)))
    direct = silt.mean_silt(1, grid, eps, [x], c.replicas, c.seed, scale=scale)
    # independent paths for the prediction
    pred = silt.transformed_silt_prediction(
        lambda y: silt.mean_silt(1, grid, eps, y, c.replicas, c.seed + 1), [[scale]], k, [x])
    return [{"x": x, "direct": direct.value, "direct_std_error": direct.std_error,
             "predicted": pred.value, "predicted_std_error": pred.std_error}]


def _run_flow(c):
    p = c.params
    times = [float(t) for t in p["times"]]
    dt = float(p.get("dt", 1e-3 if p.get("mode") == "oracle" else 1e-2))
    part = flow.DomainPartition.quadrants()
    coupling = p.get("coupling", "domain")
    if p.get("mode", "curve") == "oracle":
        u = np.asarray(p["start"], dtype=float)
        sys0 = flow.ParticleSystem(u[None, :], [0.5])
        traj = flow.evolve(sys0, flow.FieldSpec.example(oracle=True), part, times[-1], dt, times, coupling)
        rows = []
        for s in traj:
            cf = flow.cauchy_closed_form(u, s.time)
            rows.append({"t": s.time, "x": s.positions[0, 0], "y": s.positions[0, 1],
                         "closed_x": cf[0], "closed_y": cf[1]})
        return rows
    field_ = flow.FieldSpec.example()
    m = int(p.get("particles", 200))
    rows = []
    for r in range(c.replicas):
        s0 = flow.brownian_curves(m, c.seed, [r])
        s0 = flow.ParticleSystem(s0.positions[0], s0.params)
        lim = flow.limit_measure(s0.measure(), part, field_.attractors)
        traj = flow.evolve(s0, field_, part, times[-1], dt, times, coupling)
        rows += [{"replica": r, "t": t, "rho": v} for t, v in flow.rho_to_limit(traj, lim)]
    return rows


def _measure(m):
    atoms = np.asarray(m["atoms"], dtype=float)
    w = m.get("weights")
    return EmpiricalMeasure(atoms, np.full(len(atoms), 1 / len(atoms)) if w is None else w)


def _run_wasserstein(c):
    value, plan = rho(_measure(c.params["mu"]), _measure(c.params["nu"]))
    return [{"value": value, "rounding_error": plan.rounding_error}]


def _run_intermittency(c):
    p = c.params
    grid = TimeGrid.uniform(int(p.get("steps", 512)))
    out = silt.intermittency_probe(p["x_list"], p["radius"], c.replicas, c.seed, grid)
    return [{"x": x, "mean": e.value, "std_error": e.std_error} for x, e in out]


_RUNNERS = {
    "hit": _run_hit, "type-rate": _run_type_rate, "silt": _run_silt, "cond-silt": _run_cond_silt,
    "transform": _run_transform, "flow": _run_flow, "wasserstein": _run_wasserstein,
    "intermittency": _run_intermittency,
}


def run(config: ExperimentConfig) -> Report:
    issues = validate(config)
    if issues:
        raise ConfigError(issues)
    t0 = time.perf_counter()
    rows = _RUNNERS[config.experiment](config)
    return Report(config, rows, time.perf_counter() - t0)


def write_report(report: Report, prefix: Optional[str] = None) -> tuple:
    prefix = Path(prefix or report.config.output)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_name(prefix.name + ".csv")
    meta_path = prefix.with_name(prefix.name + ".meta.json")
    csv_path.write_text(report.csv_text(), encoding="utf-8")
    meta_path.write_text(json.dumps(report.metadata(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, meta_path
