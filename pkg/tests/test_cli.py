import json

import numpy as np
import pytest

from lsfield import writers
from lsfield.cli import main

SMALL = {"lattice": {"cells": [3, 3, 3]}}


def cfg_file(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_validate(tmp_path, capsys):
    assert main(["validate", "--config", str(cfg_file(tmp_path, {}))]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["potential"]["A"] == 1.0239e8


def test_invalid_config_writes_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg_file(tmp_path, {"cutof": 1})), "--out", str(out)])
    assert code != 0
    assert not out.exists()
    assert "potential.r_cut" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(out)]) != 0
    assert not out.exists()


@pytest.fixture(scope="module")
def uniform_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("uniform")
    assert main(["run", "--config", str(cfg_file(d, SMALL)), "--out", str(d / "run")]) == 0
    return d / "run"


def test_run_outputs(uniform_run):
    names = {p.name for p in uniform_run.iterdir()}
    assert {"summary.json", "fields.csv", "convergence.csv", "fields.vtk"} <= names
    doc = json.loads((uniform_run / "summary.json").read_text())
    assert doc["schema_version"] == writers.SCHEMA_VERSION
    assert doc["config"]["lattice"]["cells"] == [3, 3, 3]
    assert doc["solver"]["penalty_scale"] == 1e5
    assert doc["results"]["strain"]["mean"][2] == pytest.approx(0.02)
    header = (uniform_run / "fields.csv").read_text().splitlines()[0].split(",")
    assert header == writers.FIELD_COLUMNS
    trace = (uniform_run / "convergence.csv").read_text().splitlines()
    assert trace[0] == "step,iteration,energy,residual"


def test_vtk_layout(uniform_run):
    text = (uniform_run / "fields.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    for token in ("POINT_DATA", "SCALARS vm double 1", "TENSORS sigma double"):
        assert token in text


def test_report_uniform(uniform_run, capsys):
    assert main(["report", str(uniform_run)]) == 0
    out = capsys.readouterr().out
    for label in ("sigma^ref", "sigma^QC", "sigma^int", "Err", "Std"):
        assert label in out
    assert (uniform_run / "report_table.csv").is_file()
    assert (uniform_run / "report_strain_slice.csv").is_file()


def test_threads_do_not_change_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = cfg_file(tmp_path, {**SMALL, "scenario": {"kind": "indentation", "depth": 0.1, "increments": 1}})
    assert main(["run", "--config", str(cfg), "--out", str(a), "--threads", "1"]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b), "--threads", "3"]) == 0
    for name in ("summary.json", "fields.csv", "fields.vtk", "convergence.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert main(["report", str(a)]) == 0
    assert (a / "report_field_indentation.csv").is_file()


def test_tensile_run_and_report(tmp_path, capsys):
    doc = {**SMALL, "scenario": {"kind": "tensile", "e33_min": -0.02, "e33_max": 0.02, "steps": 4}}
    out = tmp_path / "t"
    assert main(["run", "--config", str(cfg_file(tmp_path, doc)), "--out", str(out)]) == 0
    curve = writers.read_csv_columns(out / "curve.csv")
    assert list(curve) == writers.CURVE_COLUMNS
    np.testing.assert_allclose(curve["E33"], [-0.02, -0.01, 0, 0.01, 0.02])
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "monotonicity: sigma33_recovered strictly increasing in E33: yes" in capsys.readouterr().out


def test_partial_run_flagged(tmp_path):
    doc = {**SMALL, "scenario": {"kind": "tensile", "e33_min": -0.02, "e33_max": 0.02, "steps": 4},
           "relax": {"max_iterations": 2}}
    out = tmp_path / "p"
    assert main(["run", "--config", str(cfg_file(tmp_path, doc)), "--out", str(out)]) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["partial"] is True and summary["error"]


def test_report_errors(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) != 0
    (empty / "summary.json").write_text("{broken")
    assert main(["report", str(empty)]) != 0
    (empty / "summary.json").write_text(json.dumps({"schema_version": 99}))
    assert main(["report", str(empty)]) != 0
