import json
import math
import subprocess
import sys

import pytest

from geoadapt import cli
from geoadapt.errors import SchemaError

FAST = {
    "gfk-verify": ["--trials", "5"],
    "gfk-distance": ["--trials", "5"],
    "crossview-demo": ["--trials", "4"],
    "cluster-props": [],
    "cluster-demo": ["--trials", "40"],
    "metrics-fairness": ["--trials", "5"],
    "flow-check": ["--trials", "5"],
    "transport-check": ["--trials", "20000"],
    "order-recover": ["--trials", "20"],
    "sgw-check": ["--trials", "4"],
}


def run_main(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_every_command_registered():
    assert set(FAST) == set(cli.COMMANDS)


@pytest.mark.parametrize("command", sorted(FAST))
def test_command_passes_and_is_deterministic(capsys, command):
    code, first, _ = run_main(capsys, [command, *FAST[command]])
    assert code == 0
    code2, second, _ = run_main(capsys, [command, *FAST[command]])
    assert code2 == 0 and first == second
    assert first.endswith("}\n") and not first.endswith("\n\n")
    report = json.loads(first)
    assert report["status"] == "pass" and report["command"] == command
    assert "wall_time" not in report
    assert list(report) == sorted(report)


def test_timing_flag_adds_wall_time(capsys):
    code, out, _ = run_main(capsys, ["gfk-distance", "--trials", "2", "--timing"])
    assert code == 0 and json.loads(out)["wall_time"] >= 0


def test_cluster_props_values(capsys):
    code, out, _ = run_main(capsys, ["cluster-props", "--alpha", "0.05", "--L", "100"])
    metrics = json.loads(out)["metrics"]
    assert code == 0
    assert abs(metrics["ell_star"] - 1 / 120) <= 1e-6
    assert abs(metrics["ell_star_oracle"] - 0.0083333) <= 1e-6


def test_out_file_matches_stdout(capsys, tmp_path):
    _, stdout, _ = run_main(capsys, ["order-recover", "--trials", "5"])
    path = tmp_path / "r.json"
    assert cli.main(["order-recover", "--trials", "5", "--out", str(path)]) == 0
    assert path.read_bytes() == stdout.encode()


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"trials": 3, "dim": 6}))
    _, out, _ = run_main(capsys, ["gfk-distance", "--config", str(cfg), "--trials", "4"])
    config = json.loads(out)["config"]
    assert config["trials"] == 4 and config["dim"] == 6 and config["sub"] == 3


@pytest.mark.parametrize("content", ['{"bogus": 1}', "{not json", "[1, 2]", '{"trials": "many"}', '{"trials": 2.5}'])
def test_bad_config_exit_3(capsys, tmp_path, content):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    code, out, err = run_main(capsys, ["gfk-distance", "--config", str(cfg)])
    assert code == 3 and out == "" and err


def test_missing_config_exit_3(capsys, tmp_path):
    assert run_main(capsys, ["gfk-distance", "--config", str(tmp_path / "nope.json")])[0] == 3


def test_invalid_value_exit_3(capsys):
    assert run_main(capsys, ["cluster-props", "--alpha", "-1"])[0] == 3
    assert run_main(capsys, ["order-recover", "--T", "40"])[0] == 3


def test_usage_errors_exit_2(capsys):
    assert run_main(capsys, ["no-such-command"])[0] == 2
    assert run_main(capsys, [])[0] == 2
    assert run_main(capsys, ["gfk-verify", "--rho", "0.1"])[0] == 2
    assert run_main(capsys, ["gfk-verify", "--trials", "lots"])[0] == 2


def test_unwritable_out_exit_5(capsys, tmp_path):
    code, _, err = run_main(capsys, ["gfk-distance", "--trials", "2", "--out", str(tmp_path / "missing" / "r.json")])
    assert code == 5 and "cannot write" in err


def test_empty_checks_is_schema_error():
    with pytest.raises(SchemaError):
        cli.render_report(cli.RunReport("gfk-verify", {}, {}, []))


def test_failed_check_exit_1(capsys, monkeypatch):
    func, defaults = cli.COMMANDS["gfk-distance"]
    monkeypatch.setitem(cli.COMMANDS, "gfk-distance", (lambda cfg: ({}, [cli.Check("x", False, 1.0, 0.0)]), defaults))
    code, out, _ = run_main(capsys, ["gfk-distance"])
    assert code == 1 and json.loads(out)["status"] == "fail"


def test_encoder_canonical():
    text = cli._encode({"b": [1, 2.5], "a": {"z": math.nan, "y": -math.inf}, "c": True, "d": None})
    assert text == (
        '{\n  "a": {\n    "y": "-inf",\n    "z": "nan"\n  },\n  "b": [\n    1,\n    2.5\n  ],\n'
        '  "c": true,\n  "d": null\n}'
    )
    assert float(json.loads(cli._encode({"x": 0.1}))["x"]) == 0.1


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "geoadapt", "cluster-props"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["status"] == "pass"
