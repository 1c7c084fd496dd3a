import json

import numpy as np
import pytest

import gibbsvar as gv
from gibbsvar.cli import main


@pytest.fixture()
def model_file(tmp_path):
    spec = {"basis": "lennard-jones", "theta": {"sigma": 0.1, "epsilon": 0.5},
            "z": 100.0, "R0": 0.25}
    path = tmp_path / "model.json"
    path.write_text(json.dumps(spec))
    return path


def test_simulate_and_fit_roundtrip(tmp_path, model_file, capsys):
    pattern = tmp_path / "pattern.csv"
    rc = main(["simulate", "--model", str(model_file), "--window", "0,0,2,2",
               "--seed", "11", "--steps", "120000", "--out", str(pattern)])
    assert rc == 0
    config = gv.read_pattern(pattern)
    assert len(config) > 50
    out = tmp_path / "fit.json"
    rc = main(["fit", "--pattern", str(pattern), "--model", str(model_file),
               "--estimator", "grid", "--cell-side", "0.2", "--covariance",
               "--out", str(out)])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["variant"] == "grid"
    assert payload["valid"] in (True, False)
    assert len(payload["theta"]) == 2
    assert "covariance" in payload


def test_fit_mple_cli(tmp_path, model_file, capsys):
    pattern = tmp_path / "pattern.csv"
    main(["simulate", "--model", str(model_file), "--window", "0,0,2,2",
          "--seed", "12", "--steps", "120000", "--out", str(pattern)])
    capsys.readouterr()
    rc = main(["fit", "--pattern", str(pattern), "--model", str(model_file),
               "--estimator", "mple", "--grid-res", "64", "--rescale", "0.1"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["variant"] == "mple"


def test_simulate_fixed_n(tmp_path, model_file):
    pattern = tmp_path / "fixed.csv"
    main(["simulate", "--model", str(model_file), "--window", "0,0,2,2",
          "--seed", "3", "--steps", "20000", "--fixed-n", "25",
          "--out", str(pattern)])
    assert len(gv.read_pattern(pattern)) == 25


def test_experiment_and_summarize_cli(tmp_path, model_file, capsys):
    plan = {
        "model": json.loads(model_file.read_text()),
        "window": {"lower": [0.0, 0.0], "upper": [2.0, 2.0]},
        "replicates": 2,
        "seed": 5,
        "sampler": {"steps": 50000},
        "estimators": [{"kind": "grid", "cell_side": 0.2}],
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    outdir = tmp_path / "exp"
    rc = main(["experiment", "--plan", str(plan_path), "--outdir", str(outdir),
               "--workers", "1"])
    assert rc == 0
    capsys.readouterr()
    rc = main(["summarize", "--rows", str(outdir / "rows.csv"),
               "--outdir", str(tmp_path / "summ")])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["estimators"]["grid"]["rows"] == 2
    assert (tmp_path / "summ" / "scatter.csv").exists()
