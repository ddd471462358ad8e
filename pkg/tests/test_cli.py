import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from elastrip.cli import main

BASE_CFG = {
    "physics": {"omega": 1.0},
    "geometry": {"m": -0.2, "M_sup": 0.25, "h": 1.0},
    "surface": {"f0_offset": 0.0, "delta": 0.25},
    "discretization": {"N1": 1, "N2": 1, "n_z": 16},
    "source": {"amplitude": 1.0, "component": 2, "j1": 1, "j2": 0},
    "run": {"seed": 0, "n_samples": 2},
}


@pytest.fixture
def runner():
    return CliRunner()


def write_cfg(tmp_path, extra=None, name="cfg.yaml"):
    data = json.loads(json.dumps(BASE_CFG))
    for sec, kv in (extra or {}).items():
        data.setdefault(sec, {}).update(kv)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_constants_reference_bound(runner, tmp_path):
    cfg = write_cfg(tmp_path, {"geometry": {"m": 0.0}})
    out = tmp_path / "out"
    res = runner.invoke(main, ["constants", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 0
    payload = json.loads((out / "constants.json").read_text())
    assert payload["total_bound"] == pytest.approx(2166.0, rel=1e-12)
    assert "total_bound = 2166" in res.output
    assert (out / "config.yaml").exists()


def test_verify_dtn_clean(runner, tmp_path):
    out = tmp_path / "out"
    res = runner.invoke(main, ["verify-dtn", "--out", str(out),
                               "--n-xi", "200", "--n-materials", "2"])
    assert res.exit_code == 0
    assert "0 violations" in res.output
    report = json.loads((out / "verify_dtn.json").read_text())
    assert report["n_violations"] == 0


def test_solve_writes_reports(runner, tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "out"
    res = runner.invoke(main, ["solve", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["diagnostics"]["energy_residual"] < 1e-8
    csv_text = (out / "runs.csv").read_text()
    assert "measured_ratio" in csv_text.splitlines()[0]


def test_unknown_config_key_exits_1(runner, tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"physics": {"omga": 2.0}}))
    res = runner.invoke(main, ["solve", "--config", str(path),
                               "--out", str(tmp_path / "out")])
    assert res.exit_code == 1
    assert "omga" in res.output


def test_missing_config_file_exits_1(runner, tmp_path):
    res = runner.invoke(main, ["solve", "--config", str(tmp_path / "nope.yaml"),
                               "--out", str(tmp_path / "out")])
    assert res.exit_code == 1


def test_sweep_csv(runner, tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "out"
    res = runner.invoke(main, ["sweep", "--config", cfg, "--out", str(out),
                               "--axis", "omega", "--values", "0.5,1.0"])
    assert res.exit_code == 0
    assert "2/2 sweep points succeeded" in res.output
    assert (out / "sweep.csv").exists()
    assert len((out / "sweep.csv").read_text().splitlines()) == 3


def test_mc_without_law_exits_2(runner, tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "out"
    res = runner.invoke(main, ["mc", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 2
    err = json.loads((out / "error.json").read_text())
    assert err["exit_code"] == 2


def test_mc_deterministic_outputs(runner, tmp_path):
    cfg = write_cfg(tmp_path, {"surface": {"law_bands": [[1, 0, 0.05]], "M0": 0.3}})
    texts = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        res = runner.invoke(main, ["mc", "--config", cfg, "--out", str(out),
                                   "--n-samples", "2", "--seed", "5"])
        assert res.exit_code == 0
        texts.append((out / "mc_samples.csv").read_bytes())
    assert texts[0] == texts[1]


def test_threads_flag_does_not_change_outputs(runner, tmp_path):
    cfg = write_cfg(tmp_path, {"surface": {"law_bands": [[1, 0, 0.05]], "M0": 0.3}})
    texts = []
    for sub, threads in (("t1", "1"), ("t4", "4")):
        out = tmp_path / sub
        res = runner.invoke(main, ["mc", "--config", cfg, "--out", str(out),
                                   "--n-samples", "2", "--threads", threads])
        assert res.exit_code == 0
        texts.append((out / "mc_samples.csv").read_bytes())
    assert texts[0] == texts[1]


def test_pushforward_command(runner, tmp_path):
    cfg = write_cfg(tmp_path, {"surface": {"terms": [[1, 0, 0.08, 0.0]]},
                               "discretization": {"N1": 2, "N2": 2}})
    out = tmp_path / "out"
    res = runner.invoke(main, ["pushforward", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 0
    payload = json.loads((out / "pushforward.json").read_text())
    assert payload["rel_l2"] < 0.01


def test_extend_command(runner, tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((3, 3, 3))
    trace = {"N1": 1, "N2": 1, "cell": [2 * np.pi, 2 * np.pi],
             "values_re": vals.tolist(), "values_im": (0 * vals).tolist()}
    tr_path = tmp_path / "trace.json"
    tr_path.write_text(json.dumps(trace))
    out = tmp_path / "out"
    res = runner.invoke(main, ["extend", "--trace", str(tr_path),
                               "--height", "0.3", "--out", str(out)])
    assert res.exit_code == 0
    payload = json.loads((out / "extend.json").read_text())
    ext = np.array(payload["values_re"]) + 1j * np.array(payload["values_im"])
    assert ext.shape == (3, 3, 3)
    assert np.isfinite(ext).all()
