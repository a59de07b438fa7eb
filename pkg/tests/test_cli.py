import csv
import json

import numpy as np
import pytest

from torsionflow.cli import main, render_json
from torsionflow.flow import JGrid


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def geometry_config(geometry, count=2, seed=1, command="inspect", **extra):
    cfg = {
        "schema": 1,
        "command": command,
        "geometry": geometry,
        "points": {"count": count, "seed": seed},
    }
    cfg.update(extra)
    return cfg


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_config_errors_exit_2(tmp_path, capsys):
    bad = [
        {"schema": 2, "geometry": {"type": "flat", "n": 2}},
        {"geometry": {"type": "flat", "n": 2}},
        {"schema": 1, "geometry": {"type": "flat", "n": 2}, "bogus": 1},
        {"schema": 1, "command": "verify", "geometry": {"type": "flat", "n": 2}},
        {"schema": 1, "geometry": {"type": "flat", "n": 2}, "tol": -1.0},
        {"schema": 1, "geometry": {"type": "flat", "n": 2}, "points": {"n": 2}},
        {"schema": 1, "geometry": {"type": "flat", "n": 2}, "points": {"count": 0}},
        {"schema": 1},
    ]
    for idx, cfg in enumerate(bad):
        path = write_config(tmp_path, f"bad{idx}.json", cfg)
        code, out, err = run(["inspect", "--config", path], capsys)
        assert code == 2, cfg
        assert out == ""
        assert "error" in json.loads(err)

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["inspect", "--config", str(broken)]) == 2
    capsys.readouterr()
    assert main(["inspect", "--config", str(tmp_path / "missing.json")]) == 2
    capsys.readouterr()


def test_geometry_errors_exit_3(tmp_path, capsys):
    bad = [
        {"type": "torus", "n": 2},
        {"type": "flat", "n": 2, "extra": 1},
        {"type": "conformal", "n": 2, "f": "sin(x1"},
        {"type": "conformal", "n": 2, "f": "x1", "periodic": True},
        {"type": "conformal", "n": 2, "f": "1/x1"},
    ]
    for idx, geo in enumerate(bad):
        path = write_config(tmp_path, f"geo{idx}.json", geometry_config(geo))
        code, out, err = run(["inspect", "--config", path], capsys)
        assert code == 3, geo
        assert out == ""
        assert "error" in json.loads(err)


def test_inspect_flat_is_all_zero(tmp_path, capsys):
    path = write_config(
        tmp_path, "flat.json", geometry_config({"type": "flat", "n": 2}, count=3)
    )
    code, out, _ = run(["inspect", "--config", path], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["schema"] == 1
    assert report["pass"] is True
    assert report["sign_audit"] == "paper-convention"
    assert report["summary"]["label"] == "Kahler"
    assert len(report["points"]) == 3
    for row in report["points"]:
        assert row["class"] == "Kahler"
        assert max(row["residuals"].values()) < 1e-12
    assert all(report["summary"]["passes"].values())


def test_inspect_s6_reports_w1(tmp_path, capsys):
    path = write_config(tmp_path, "s6.json", geometry_config({"type": "s6"}, count=2))
    code, out, _ = run(["inspect", "--config", path], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["pass"] is True
    assert report["summary"]["label"] == "W1"
    assert report["summary"]["class_match"] is True
    passes = report["summary"]["passes"]
    assert passes["harmonic"] and passes["harmonic_map"] and passes["vert_geodesic"]
    assert not passes["flatness"]


def test_inspect_conformal_sin_verdicts(tmp_path, capsys):
    geo = {"type": "conformal", "n": 2, "f": "sin(x1)", "periodic": True}
    path = write_config(tmp_path, "conf.json", geometry_config(geo, count=3, seed=11))
    code, out, _ = run(["inspect", "--config", path], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["pass"] is True
    assert report["summary"]["label"] == "W4"
    passes = report["summary"]["passes"]
    assert passes["harmonic"] is True
    assert passes["harmonic_map"] is False


def test_verify_hopf_checks_pass(tmp_path, capsys):
    geo = {"type": "hopf", "n": 2}
    path = write_config(
        tmp_path, "hopf.json", geometry_config(geo, count=2, command="verify")
    )
    code, out, _ = run(["verify", "--config", path], capsys)
    assert code == 0
    report = json.loads(out)
    names = {c["name"] for c in report["checks"]}
    assert "harmonicity_coupling" in names
    assert "identity:rough_laplacian_omega" in names
    assert all(c["pass"] for c in report["checks"])
    assert report["pass"] is True


def test_classify_labels(tmp_path, capsys):
    cases = [
        ({"type": "flat", "n": 2}, "Kahler"),
        ({"type": "conformal", "n": 2, "f": "sin(x1)", "periodic": True}, "W4"),
    ]
    for geo, expected in cases:
        path = write_config(
            tmp_path, "cls.json", geometry_config(geo, command="classify")
        )
        code, out, _ = run(["classify", "--config", path], capsys)
        assert code == 0
        report = json.loads(out)
        assert report["label"] == expected
        assert report["pass"] is True


def test_classify_tolerance_override_flags_mismatch(tmp_path, capsys):
    geo = {"type": "conformal", "n": 2, "f": "sin(x1)", "periodic": True}
    path = write_config(tmp_path, "cls.json", geometry_config(geo, command="classify"))
    code, out, _ = run(["classify", "--config", path, "--tol", "10.0"], capsys)
    assert code == 1
    report = json.loads(out)
    assert report["label"] == "Kahler"
    assert report["summary"]["class_match"] is False
    assert report["pass"] is False


def test_flow_zero_amplitude_single_row(tmp_path, capsys):
    cfg = {
        "schema": 1,
        "command": "flow",
        "flow": {"seed": 7, "n": 2, "m": 8, "amplitude": 0.0},
    }
    path = write_config(tmp_path, "flow0.json", cfg)
    out_path = tmp_path / "report.json"
    code, out, _ = run(["flow", "--config", path, "--out", str(out_path)], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["iterations"] == 0
    assert report["sign"] is None
    assert report["converged"] is True
    rows = list(csv.DictReader(open(tmp_path / "report.trace.csv")))
    assert len(rows) == 1
    assert float(rows[0]["energy"]) == 0.0


def test_flow_rejects_tiny_grid(tmp_path, capsys):
    cfg = {"schema": 1, "flow": {"seed": 7, "n": 2, "m": 2}}
    path = write_config(tmp_path, "flow2.json", cfg)
    code, out, err = run(["flow", "--config", path], capsys)
    assert code == 2
    assert out == ""
    assert "resolution" in json.loads(err)["error"]


def test_flow_descends_and_writes_artifacts(tmp_path, capsys):
    cfg = {
        "schema": 1,
        "command": "flow",
        "flow": {
            "seed": 7,
            "n": 2,
            "m": 8,
            "amplitude": 0.3,
            "max_iter": 900,
            "tol_grad": 1e-2,
        },
    }
    path = write_config(tmp_path, "flow8.json", cfg)
    out_path = tmp_path / "flow8.report.json"
    code, out, _ = run(["flow", "--config", path, "--out", str(out_path)], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["converged"] is True
    assert report["monotone"] is True
    assert report["sign"] == 1
    assert report["iterations"] == 736
    assert report["terminal_grad_norm"] < 1e-2
    assert report["max_drift"] < 1e-8
    assert out_path.read_text().rstrip("\n") == out.rstrip("\n")

    rows = list(csv.DictReader(open(tmp_path / "flow8.report.trace.csv")))
    assert len(rows) == 737
    energies = [float(r["energy"]) for r in rows]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert energies[0] == report["initial_energy"]

    payload = json.loads((tmp_path / "flow8.report.grid.json").read_text())
    values = np.asarray(payload["nodes"]).reshape((8, 8, 8, 8, 4, 4))
    grid = JGrid(payload["n"], payload["resolution"], values)
    assert grid.structure_defect() < 1e-10


def test_reports_are_byte_identical(tmp_path, capsys):
    geo = {"type": "conformal", "n": 2, "f": "sin(x1)", "periodic": True}
    path = write_config(tmp_path, "conf.json", geometry_config(geo, count=2))
    _, first, _ = run(["inspect", "--config", path], capsys)
    _, second, _ = run(["inspect", "--config", path], capsys)
    assert first == second
    # every float is serialized so that parsing and re-rendering is stable
    assert render_json(json.loads(first)) == first.rstrip("\n")


def test_seed_override_moves_sample_points(tmp_path, capsys):
    path = write_config(
        tmp_path, "flat.json", geometry_config({"type": "flat", "n": 2}, count=2)
    )
    _, base, _ = run(["inspect", "--config", path], capsys)
    _, moved, _ = run(["inspect", "--config", path, "--seed", "9"], capsys)
    xs = json.loads(base)["points"][0]["x"]
    ys = json.loads(moved)["points"][0]["x"]
    assert np.abs(np.asarray(xs) - np.asarray(ys)).max() > 1e-3
