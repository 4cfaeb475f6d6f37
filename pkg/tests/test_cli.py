import json

import numpy as np
import pytest

from catdyn import cli
from catdyn.series import TimeSeries, fmt

QUICK = {
    "identities-ba": {"space": {"n_cut": 30}},
    "identities-aa": {"space": {"n_cut": 30}},
    "rechoose": {"space": {"n_cut": 30}, "run": {"horizon": 0.6}},
    "ehrenfest-fi": {"space": {"n_cut": 30}, "run": {"horizon": 0.4}},
    "ehrenfest-fni": {"space": {"n_cut": 30}, "run": {"horizon": 0.4}},
    "delta-suite": {},
    "fpi-convergence": {"run": {"horizon": 0.5, "n_slices": [11, 21]}},
    "momentum-window": {},
    "theorem1-sweep": {},
}


def write_cfg(path, experiment, extra=None):
    doc = json.loads(json.dumps(extra or {}))
    doc.setdefault("run", {})["experiment"] = experiment
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def outroot(tmp_path, monkeypatch):
    monkeypatch.setenv("CATDYN_OUT", str(tmp_path))
    return tmp_path


def test_series_roundtrip_and_format():
    ts = TimeSeries({"t": [0.0, 0.1], "x": [1 / 3, np.nan]}, {"k": 1})
    assert ts.to_csv() == "t,x\n0,0.33333333333333331\n0.10000000000000001,nan\n"
    assert TimeSeries.from_json(ts.to_json()) == ts
    assert fmt(np.inf) == "inf"
    with pytest.raises(ValueError):
        TimeSeries({"a": [1, 2], "b": [1]})


def test_parse_config_defaults_and_hash():
    ec = cli.parse_config({"run": {"experiment": "delta-suite"}})
    assert ec.model.m == 1 + 0.5j
    assert ec.space["n_cut"] == 60
    assert ec.hash == cli.parse_config({"run": {"experiment": "delta-suite"}}).hash
    assert ec.hash != cli.parse_config({"run": {"experiment": "delta-suite", "dt": 0.01}}).hash


@pytest.mark.parametrize("doc,msg", [
    ({"run": {"experiment": "nope"}}, "run.experiment"),
    ({"run": {"experiment": "rechoose", "speed": 1}}, "unknown keys"),
    ({"extra": {}, "run": {"experiment": "rechoose"}}, "unknown top-level"),
    ({"model": {"m_im": -0.5}, "run": {"experiment": "rechoose"}}, "precondition m_I"),
    ({"model": {"m_re": 0}, "run": {"experiment": "rechoose"}}, "singular"),
    ({"space": {"n_cut": 4}, "run": {"experiment": "rechoose"}}, "n_cut"),
    ({"run": {"experiment": "rechoose", "dt": 0}}, "positive"),
    ({"output": {"format": "xml"}, "run": {"experiment": "rechoose"}}, "format"),
])
def test_config_errors(doc, msg):
    with pytest.raises(cli.ConfigError, match=msg):
        cli.parse_config(doc)


def test_load_config_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(cli.ConfigError, match="invalid JSON"):
        cli.load_config(p)
    with pytest.raises(cli.ConfigError, match="cannot read"):
        cli.load_config(tmp_path / "missing.json")


@pytest.mark.parametrize("experiment", cli.EXPERIMENTS)
def test_each_experiment_runs_and_passes(experiment, tmp_path, outroot, capsys):
    cfg = write_cfg(tmp_path / f"{experiment}.json", experiment, QUICK[experiment])
    assert cli.main(["run", str(cfg)]) == cli.EXIT_OK
    out = outroot / "catdyn_out" / experiment
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True
    assert summary["metadata"]["experiment"] == experiment
    assert (out / "series.csv").read_text().count("\n") >= 2
    assert "PASS" in capsys.readouterr().out


def test_json_output_and_determinism(tmp_path, outroot):
    cfg = write_cfg(tmp_path / "d.json", "delta-suite", {"output": {"format": "json"}})
    cli.main(["run", str(cfg)])
    out = outroot / "catdyn_out" / "d"
    first = (out / "series.json").read_bytes(), (out / "summary.json").read_bytes()
    cli.main(["run", str(cfg)])
    assert ((out / "series.json").read_bytes(), (out / "summary.json").read_bytes()) == first
    doc = json.loads(first[0])
    assert doc["metadata"]["config_hash"] == cli.load_config(cfg).hash


def test_exit_codes(tmp_path, outroot):
    bad = write_cfg(tmp_path / "bad.json", "rechoose", {"model": {"m_im": -0.1}})
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["validate", str(bad)]) == cli.EXIT_CONFIG
    trust = write_cfg(tmp_path / "trust.json", "identities-aa",
                      {"space": {"n_cut": 20}, "run": {"alpha": [8, 0]}})
    assert cli.main(["run", str(trust)]) == cli.EXIT_NUMERIC
    good = write_cfg(tmp_path / "good.json", "momentum-window")
    assert cli.main(["validate", str(good)]) == cli.EXIT_OK


def test_failing_check_exit_code(tmp_path, outroot):
    # three and four time points are far from the first-order regime, so the ratio check fails
    cfg = write_cfg(tmp_path / "wide.json", "fpi-convergence",
                    {"run": {"horizon": 0.5, "n_slices": [3, 4]}})
    assert cli.main(["run", str(cfg)]) == cli.EXIT_FAIL


def test_suite(tmp_path, outroot, capsys):
    d = tmp_path / "cfgs"
    d.mkdir()
    write_cfg(d / "a.json", "momentum-window")
    write_cfg(d / "b.json", "rechoose", {"model": {"m_im": -1}})
    assert cli.main(["suite", str(d)]) == cli.EXIT_CONFIG
    assert "a.json: exit 0" in capsys.readouterr().out
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["suite", str(empty)]) == cli.EXIT_CONFIG
