import json

import pytest

from fpplab import cli

CALIB = {"family": {"family": "ExpPower", "sn": {"kind": "explicit", "value": 2}}, "n": 10}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _only_dir(root):
    dirs = [p for p in root.glob("*/*") if p.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def test_calibrate_example(tmp_path, capsys):
    code = cli.main(["calibrate", "--config", _write(tmp_path, CALIB), "--outdir", str(tmp_path / "out")])
    assert code == 0
    out = _only_dir(tmp_path / "out")
    assert out.parent.name == "calibrate"
    js = json.loads((out / "summary.json").read_text())
    assert js["summary"]["params"][0]["lambda_n"] == pytest.approx(78.5398163397, rel=1e-9)
    assert js["passed"] is True
    head = (out / "records.csv").read_text().splitlines()
    assert head[0] == f"# fpplab 0.1.0 config={out.name}"
    assert {"records.csv", "summary.json", "plotdata.csv", "figure.png"} <= {p.name for p in out.iterdir()}
    assert str(out) in capsys.readouterr().out


def test_unknown_key_is_rejected(tmp_path, capsys):
    bad = dict(CALIB, colour="blue")
    assert cli.main(["calibrate", "--config", _write(tmp_path, bad), "--outdir", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err


@pytest.mark.parametrize("cfg", [
    {"family": {"family": "ExpPower", "sn": {"kind": "constant", "value": 2}}, "n": 10},
    {"family": {"family": "ExpPower"}, "n": -3},
    dict(CALIB, params={"window": 5}),
])
def test_schema_violations_exit_two(tmp_path, cfg):
    assert cli.main(["calibrate", "--config", _write(tmp_path, cfg), "--outdir", str(tmp_path)]) == 2


def test_malformed_json_exits_two(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["calibrate", "--config", str(p)]) == 2


def test_set_override_changes_result_and_hash(tmp_path):
    cfgp = _write(tmp_path, CALIB)
    root = tmp_path / "out"
    assert cli.main(["calibrate", "--config", cfgp, "--outdir", str(root), "--set", "n=100", "--no-figure"]) == 0
    out = _only_dir(root)
    js = json.loads((out / "summary.json").read_text())
    assert js["config"]["n"] == 100
    assert not (out / "figure.png").exists()


def test_apply_set_dotted_keys():
    cfg = {"family": {"family": "ExpPower"}}
    cli.apply_set(cfg, "family.sn.kind=\"log_n\"")
    cli.apply_set(cfg, "params.var_band=[0.5, 1.5]")
    assert cfg["family"]["sn"] == {"kind": "log_n"}
    assert cfg["params"]["var_band"] == [0.5, 1.5]


def test_hash_ignores_output_location():
    a = cli.resolve_config("calibrate", dict(CALIB, outdir="x"))
    b = cli.resolve_config("calibrate", dict(CALIB, outdir="y"))
    c = cli.resolve_config("calibrate", CALIB, seed=4)
    assert cli.config_hash(a) == cli.config_hash(b) != cli.config_hash(c)


def test_artifacts_are_byte_identical(tmp_path):
    cfgp = _write(tmp_path, {"family": {"family": "ExpPower", "sn": {"kind": "explicit", "value": 8}},
                             "n": 1000000, "replicas": 40, "seed": 3})
    runs = []
    for tag in ("a", "b"):
        assert cli.main(["freeze", "--config", cfgp, "--outdir", str(tmp_path / tag)]) in (0, 1)
        runs.append(_only_dir(tmp_path / tag))
    for name in ("records.csv", "summary.json", "plotdata.csv", "figure.png"):
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name


def test_failed_checks_exit_one_with_table(tmp_path, capsys):
    cfg = {"family": {"family": "ExpPower", "sn": {"kind": "explicit", "value": 8}}, "n": 1000,
           "replicas": 50, "params": {"ks_max": 1e-6}}
    assert cli.main(["ip-law", "--config", _write(tmp_path, cfg), "--outdir", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "ks_ip_vs_q" in err and "FAIL" in err


def test_exhausted_budget_exits_three(tmp_path):
    cfg = {"family": {"family": "ExpPower", "sn": {"kind": "explicit", "value": 8}}, "n": 1000000,
           "replicas": 2, "budgets": {"node_cap": 5}}
    assert cli.main(["freeze", "--config", _write(tmp_path, cfg), "--outdir", str(tmp_path)]) == 3


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FPPLAB_OUTDIR", str(tmp_path / "env"))
    assert cli.main(["calibrate", "--config", _write(tmp_path, CALIB), "--no-figure"]) == 0
    assert _only_dir(tmp_path / "env").parent.name == "calibrate"
