import csv
import json
import os
import xml.etree.ElementTree as ET

import pytest
import yaml

from camtse.cli import main
from camtse.config import DEFAULTS, RunConfig
from camtse.core import ConfigurationError
from camtse.ingest import save_runs
from camtse.plots import histogram_svg, scatter_svg

SMALL = {
    "scenario": {"count": 3},
    "calibrate": {"repeats": 1},
    "estimate": {"repeats": 1, "ga": {"generations": 10, "population_size": 60, "crossover_fraction": 20}},
    "gridsearch": {"stages": []},
}

ARTIFACTS = ["trajectories.csv", "scenarios.json", "calibration.json", "report.csv", "summary.json",
             "hist.csv", "scatter.csv", "rmse_hist.svg", "rmse_vs_mean_density.svg",
             "rmse_vs_camera_speed.svg"]


def write_config(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    cfg = write_config(root, SMALL)
    out = root / "out"
    assert main(["pipeline", "--config", cfg, "--out", str(out)]) == 0
    return root, cfg, out


def test_config_init_roundtrip(tmp_path, capsys):
    assert main(["config-init"]) == 0
    printed = yaml.safe_load(capsys.readouterr().out)
    assert printed == RunConfig().data
    path = tmp_path / "c.yaml"
    assert main(["config-init", str(path)]) == 0
    assert RunConfig.load(path).data == DEFAULTS


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = write_config(tmp_path, {"estimate": {"ga": {"generatons": 5}}})
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "estimate.ga.generatons" in capsys.readouterr().err


@pytest.mark.parametrize("data", [
    {"grid": {"dx": 7.0}},
    {"jobs": 0},
    {"scenario": {"v_f": 50.0}},
    {"discretize": {"normalize": "area"}},
])
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict(data)


def test_malformed_yaml(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("grid: [1, 2\n")
    assert main(["generate", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "bad.yaml" in capsys.readouterr().err


def test_missing_artifact_names_path(tmp_path, capsys):
    assert main(["calibrate", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert str(tmp_path) in err and "missing input file" in err


def test_pipeline_artifacts(small_run):
    _, _, out = small_run
    for name in ARTIFACTS:
        assert (out / name).is_file(), name
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert len(rows) == 3
    ids = [r["run_id"] for r in json.loads((out / "scenarios.json").read_text())["runs"]]
    assert [r["run_id"] for r in rows] == ids
    for rid in ids:
        for rel in (f"matrices/{rid}.truth.csv", f"matrices/{rid}.partial.csv",
                    f"matrices/{rid}.partial.mask.csv", f"estimates/{rid}.csv", f"estimates/{rid}.json",
                    f"baselines/{rid}.csv"):
            assert (out / rel).is_file(), rel
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_scenarios"] == 3
    assert {"calibrated", "measured"} <= set(summary["fd"])


def test_estimate_rerun_is_byte_identical(small_run, tmp_path):
    root, cfg, out = small_run
    rid = json.loads((out / "scenarios.json").read_text())["runs"][0]["run_id"]
    before = (out / "estimates" / f"{rid}.csv").read_bytes()
    assert main(["estimate", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "estimates" / f"{rid}.csv").read_bytes() == before


def test_out_env_variable(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, SMALL)
    monkeypatch.setenv("CAMTSE_OUT", str(tmp_path / "env_out"))
    assert main(["generate", "--config", cfg]) == 0
    assert (tmp_path / "env_out" / "scenarios.json").is_file()
    # the flag still wins over the environment
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "flag_out")]) == 0
    assert (tmp_path / "flag_out" / "scenarios.json").is_file()


def test_ingest_pipeline(tmp_path, congested_bundle):
    src = tmp_path / "runs.csv"
    save_runs([congested_bundle.diagram], src)
    data = dict(SMALL, ingest={"path": str(src), "fov": [10.0, 60.0]}, calibrate={"repeats": 1, "k_j": 1 / 6.5})
    del data["scenario"]
    cfg = write_config(tmp_path, data)
    out = tmp_path / "out"
    assert main(["pipeline", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert [r["run_id"] for r in rows] == [congested_bundle.diagram.run_id]


def test_ingest_needs_jam_density(tmp_path):
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"ingest": {"path": "x.csv", "fov": [10, 60]}}).k_j


def test_svg_output_is_well_formed():
    for svg in (histogram_svg([0.01, 0.02, 0.02, 0.05], 5, "h", "rmse"),
                scatter_svg([1, 2, 3], [0.1, 0.3, 0.2], 0.05, 0.1, "s", "x", "y"),
                histogram_svg([], 5), scatter_svg([1.0], [1.0])):
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")


def test_invalid_output_directory(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code = main(["generate", "--out", os.path.join(str(blocker), "sub")])
    assert code in (1, 2)
    assert "error" in capsys.readouterr().err
