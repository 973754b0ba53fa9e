import json
import math

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from purimetro import cli
from purimetro.config import ConfigError, RunConfig, reference_multiparam_setting

CONFIG = """
schema: 1
task: {kind: zeeman-sequential, params: [0.1], N: 3, t: 1.0}
noise:
  single_qubit: {family: depolarizing, p: 0.001}
  two_qubit: {family: depolarizing, p: 0.01}
  cswap: {family: depolarizing, p: 0.05}
mitigation: {method: pvcp, m: 2, layers: 1, pec_mode: exact-branch-sum}
shots: 2000
trials: 3
seed: 42
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(CONFIG)
    return str(p)


def test_config_roundtrip(cfg_path):
    cfg = RunConfig.load(cfg_path)
    again = RunConfig.from_dict(yaml.safe_load(cfg.dump()))
    assert again.spec == cfg.spec
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("patch,msg", [
    ({"schema": 2}, "schema"),
    ({"bogus": 1}, "unknown key"),
    ({"mitigation": {"method": "pvcp"}}, "PEC mode"),
    ({"task": {"kind": "zeeman-sequential", "params": [0.1], "N": 0}}, "N must be"),
    ({"noise": {"cswap": {"family": "nope", "p": 0.1}}}, "family"),
    ({"output": {"format": "xml"}}, "format"),
])
def test_config_rejects(patch, msg):
    raw = yaml.safe_load(CONFIG)
    raw.update(patch)
    with pytest.raises(ConfigError, match=msg):
        RunConfig.from_dict(raw)


def test_malformed_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("schema: [1\n")
    with pytest.raises(ConfigError):
        RunConfig.load(str(p))


def test_run_command_csv(cfg_path, capsys):
    assert cli.main(["run", "--config", cfg_path]) == 0
    rows = cli.parse_rows(capsys.readouterr().out, "csv")
    assert len(rows) == 3
    assert [r["trial"] for r in rows] == [0, 1, 2]
    assert all(r["method"] == "pvcp" for r in rows)


def test_run_overrides(cfg_path, capsys):
    assert cli.main(["run", "--config", cfg_path, "--trials", "2", "--N", "4", "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 2 and rows[0]["N"] == 4


def test_errors(tmp_path, capsys):
    assert cli.main(["run"]) == 2
    assert cli.main(["nonsense"]) != 0
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert cli.main(["cost-compare", "--out", str(tmp_path / "no" / "dir.csv")]) == 1
    assert cli.main(["noise-locations", "--regions", "roof"]) == 2
    assert cli.main(["cost-compare", "--seed", str(2**64)]) == 2
    err = capsys.readouterr().err
    assert "error" in err


def test_cost_compare_example(capsys):
    assert cli.main(["cost-compare", "--family", "dephasing", "--p", "0.1"]) == 0
    (row,) = cli.parse_rows(capsys.readouterr().out, "csv")
    assert row["verdict"] == "equal"
    assert row["ignore_cost"] == pytest.approx(row["pec_cost"])


def test_theorem1_command(capsys):
    assert cli.main(["theorem1", "--family", "all", "--p", "0.1,0.3"]) == 0
    rows = cli.parse_rows(capsys.readouterr().out, "csv")
    assert len(rows) == 6 and all(r["ok"] == "true" for r in rows)


def test_scaling_json(capsys):
    assert cli.main(["scaling", "--N", "10,100", "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert {r["method"] for r in rows} == {"none", "sql", "pvcp"}


def test_noise_locations_command(capsys):
    args = ["noise-locations", "--N", "5", "--p", "0,0.05", "--regions", "control,tar_after"]
    assert cli.main(args) == 0
    rows = cli.parse_rows(capsys.readouterr().out, "csv")
    assert len(rows) == 4
    ctrl = [r for r in rows if r["region"] == "control"]
    assert ctrl[0]["gap"] == pytest.approx(ctrl[1]["gap"], abs=1e-10)


def test_output_file(tmp_path, cfg_path):
    out = tmp_path / "o.csv"
    assert cli.main(["run", "--config", cfg_path, "--out", str(out)]) == 0
    assert out.read_text().startswith(",".join(cli.RECORD_COLUMNS))


@pytest.mark.parametrize("argv", [
    ["run", "--config", "CFG"],
    ["theorem1", "--family", "ad", "--seed", "9"],
    ["scaling", "--N", "10,20"],
])
def test_byte_identical_reruns(argv, cfg_path, tmp_path):
    argv = [cfg_path if a == "CFG" else a for a in argv]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(argv + ["--out", str(a)]) == 0
    assert cli.main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_changes_output(cfg_path, capsys):
    cli.main(["run", "--config", cfg_path, "--seed", "1"])
    one = capsys.readouterr().out
    cli.main(["run", "--config", cfg_path, "--seed", "2"])
    assert capsys.readouterr().out != one


def test_reference_setting():
    spec = reference_multiparam_setting(100)
    assert spec.task.true_params == (1.0, 0.9, 0.8) and spec.task.t == 0.001


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, st.integers(-2**62, 2**62), st.booleans()), max_size=5),
       st.sampled_from(["csv", "json"]))
def test_emit_parse_roundtrip(values, fmt):
    rows = [{"a": x, "b": i, "c": "nan"} for x, i, _ in values]
    cols = ("a", "b", "c")
    parsed = cli.parse_rows(cli.emit(rows, fmt, None, cols), fmt)
    assert len(parsed) == len(rows)
    for r, p in zip(rows, parsed):
        assert float(p["a"]) == r["a"]
        assert int(p["b"]) == r["b"]


def test_nan_serialisation():
    rows = [{"gap": float("nan"), "N": 3}]
    csv_text = cli.emit(rows, "csv", None, ("gap", "N"))
    assert "nan,3" in csv_text
    obj = json.loads(cli.emit(rows, "json", None, ("gap", "N")))
    assert obj[0]["gap"] is None
    assert math.isnan(cli.parse_rows(cli.emit(rows, "json", None, ("gap", "N")), "json")[0]["gap"])
    assert np.isfinite(cli.parse_rows(csv_text, "csv")[0]["N"])
