import json

import pytest

from curvegeom import experiments
from curvegeom.cli import main
from curvegeom.experiments import ConfigError, ExperimentConfig, run, validate

WASS = {"experiment": "wasserstein", "seed": 1, "replicas": 1,
        "params": {"mu": {"atoms": [[0, 0], [1, 0]], "weights": [0.5, 0.5]}, "nu": {"atoms": [[0, 0]]}}}
HIT = {"experiment": "hit", "seed": 2, "replicas": 200,
       "params": {"dim": 3, "start": [0, 0, 0], "targets": [[1, 0, 0]], "radius": 0.3, "steps": 64}}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _rows(path):
    lines = path.read_text().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, line.split(","))) for line in lines[1:]]


def test_wasserstein_row(tmp_path):
    assert main(["run", _write(tmp_path, WASS), "--out", str(tmp_path / "w")]) == 0
    rows = _rows(tmp_path / "w.csv")
    assert rows[0]["experiment"] == "wasserstein" and float(rows[0]["value"]) == 0.25
    meta = json.loads((tmp_path / "w.meta.json").read_text())
    assert meta["config"]["experiment"] == "wasserstein" and "wall_time" in meta and "version" in meta


def test_flow_oracle_row(tmp_path):
    cfg = {"experiment": "flow", "params": {"mode": "oracle", "start": [2, 2], "times": [1.0]}}
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "f")]) == 0
    row = _rows(tmp_path / "f.csv")[0]
    assert float(row["x"]) == pytest.approx(1.367879, abs=1e-6) and float(row["y"]) == pytest.approx(1.367879, abs=1e-6)


def test_missing_radius_names_key(tmp_path, capsys):
    cfg = json.loads(json.dumps(HIT))
    del cfg["params"]["radius"]
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "h")]) == 2
    assert "radius" in capsys.readouterr().err
    assert not (tmp_path / "h.csv").exists()


def test_validate_well_formed_and_d2(tmp_path, capsys):
    assert validate(ExperimentConfig.from_dict(HIT)) == []
    bad = json.loads(json.dumps(HIT))
    bad["params"].update(dim=2, start=[0, 0], targets=[[1, 0]])
    issues = validate(ExperimentConfig.from_dict(bad))
    assert any("d >= 3" in i for i in issues)
    assert main(["validate", _write(tmp_path, bad)]) == 2
    assert "d >= 3" in capsys.readouterr().out


def test_validate_ball_overlap():
    cfg = ExperimentConfig("type-rate", {"centers": [[0.0], [0.15]], "sequence": [1, 2], "radius": 0.1, "n_list": [10]})
    assert any("ball overlap" in i for i in validate(cfg))


def test_unknown_experiment(tmp_path):
    assert main(["run", _write(tmp_path, {"experiment": "nope"})]) == 2
    assert validate(ExperimentConfig("nope")) != []


def test_bad_json_and_usage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["run", str(p)]) == 2
    assert main([]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_run_refuses_invalid():
    with pytest.raises(ConfigError):
        run(ExperimentConfig("silt", {"dim": 2}))


def test_numeric_failure_exit_1(tmp_path, monkeypatch):
    def boom(cfg):
        raise FloatingPointError("non-finite position at step 3")
    monkeypatch.setitem(experiments._RUNNERS, "wasserstein", boom)
    assert main(["run", _write(tmp_path, WASS), "--out", str(tmp_path / "x")]) == 1


def test_seed_override_and_byte_identical(tmp_path):
    path = _write(tmp_path, HIT)
    assert main(["run", path, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", path, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert main(["run", path, "--seed", "9", "--out", str(tmp_path / "c")]) == 0
    assert _rows(tmp_path / "c.csv")[0]["seed"] == "9"


def test_float_format_roundtrip():
    x = 0.1 + 0.2
    assert float(experiments._fmt(x)) == x and len(experiments._fmt(x)) == 19


@pytest.mark.parametrize("name,params,replicas", [
    ("type-rate", {"centers": [[1.0], [0.0]], "sequence": [1, 2], "radius": 0.1, "n_list": [10, 20]}, 1),
    ("silt", {"dim": 2, "radius": 0.1, "offset": [0.2, 0.0], "steps": 32}, 50),
    ("cond-silt", {"u": 0.5, "radius": 0.05, "pin_times": [1.0], "pin_values": [[1.0, -1.0]], "steps": 32}, 50),
    ("transform", {"scale": 2.0, "x": 0.4, "radius": 0.05, "steps": 32}, 50),
    ("intermittency", {"x_list": [0.5, 0.25], "radius": 0.05, "steps": 32}, 50),
    ("flow", {"times": [1.0, 2.0], "particles": 20, "dt": 0.05}, 2),
])
def test_every_experiment_runs(tmp_path, name, params, replicas):
    cfg = {"experiment": name, "seed": 3, "replicas": replicas, "params": params}
    assert validate(ExperimentConfig.from_dict(cfg)) == []
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / name)]) == 0
    rows = _rows(tmp_path / f"{name}.csv")
    assert rows and all(r["experiment"] == name and r["seed"] == "3" for r in rows)
