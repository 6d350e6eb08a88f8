"""Command-line surface and exit codes"""
import csv
import json

import pytest

from hgfc.exceptions import EXIT_DOMAIN_ERROR, EXIT_INTERNAL_ERROR, EXIT_INVARIANT_FAILED, EXIT_OK
from hgfc.main import build_parser, main

QUIET = ["--log-level", "WARNING"]


def run_cli(capsys, *argv):
    code = main(QUIET + list(argv))
    captured = capsys.readouterr()
    return code, captured


def test_gen_writes_instance_files(tmp_path, capsys):
    code, captured = run_cli(capsys, "gen", "--out", str(tmp_path), "--trials", "2", "--seed", "4")
    assert code == EXIT_OK
    response = json.loads(captured.out)
    assert response["ok"] is True
    names = [item["instance_id"] for item in response["result"]["instances"]]
    assert names == ["experiment-s4-t0", "experiment-s4-t1"]
    assert (tmp_path / "instances" / "experiment-s4-t1.json").exists()


def test_run_then_verify(tmp_path, capsys):
    code, captured = run_cli(capsys, "run", "--out", str(tmp_path), "--algorithm", "hdf", "--trials", "2")
    assert code == EXIT_OK
    result = json.loads(captured.out)["result"]
    assert result["trials"] == 2
    assert result["passed"] == 2

    code, captured = run_cli(capsys, "verify", "--out", str(tmp_path))
    assert code == EXIT_OK
    verified = json.loads(captured.out)["result"]
    assert verified["failed"] == 0
    assert len(verified["ledgers"]) == 2


def test_verify_flags_an_edited_summary(tmp_path, capsys):
    run_cli(capsys, "run", "--out", str(tmp_path), "--algorithm", "hdf")
    summary = tmp_path / "summary.csv"
    with summary.open(newline="") as f:
        reader = csv.DictReader(f)
        columns = reader.fieldnames
        rows = list(reader)
    rows[0]["ratio"] = "0.5"
    with summary.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)

    code, captured = run_cli(capsys, "verify", "--out", str(tmp_path))
    assert code == EXIT_INVARIANT_FAILED
    (ledger,) = json.loads(captured.out)["result"]["ledgers"]
    assert any("summary ratio" in f for f in ledger["failures"])


def test_verify_without_ledgers(tmp_path, capsys):
    code, captured = run_cli(capsys, "verify", "--out", str(tmp_path))
    assert code == EXIT_DOMAIN_ERROR
    assert json.loads(captured.err.strip().splitlines()[-1])["error"]["code"] == "validation_error"


def test_config_file_with_flag_overrides(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"name": "cfg", "n_jobs": 3, "algorithm": "alg2", "epsilon": 0.5}))
    code, captured = run_cli(
        capsys, "run", "--config", str(config), "--out", str(tmp_path / "out"), "--algorithm", "hdf", "--epsilon", "0"
    )
    assert code == EXIT_OK
    assert json.loads(captured.out)["result"]["name"] == "cfg"
    assert (tmp_path / "out" / "plots" / "cfg-s0-t0.segments.csv").exists()


@pytest.mark.parametrize("content", [None, "{broken", json.dumps({"n_jobs": -1})])
def test_bad_config_is_a_domain_error(tmp_path, capsys, content):
    config = tmp_path / "config.json"
    if content is not None:
        config.write_text(content)
    code, captured = run_cli(capsys, "run", "--config", str(config), "--out", str(tmp_path))
    assert code == EXIT_DOMAIN_ERROR
    envelope = json.loads(captured.err.strip().splitlines()[-1])
    assert envelope["ok"] is False
    assert envelope["error"]["code"] == "bad_config"


def test_unexpected_error_exit_code(tmp_path, capsys, mocker):
    mocker.patch("hgfc.commands.experiments.run_experiment", side_effect=RuntimeError("boom"))
    code, captured = run_cli(capsys, "run", "--out", str(tmp_path))
    assert code == EXIT_INTERNAL_ERROR
    envelope = json.loads(captured.err.strip().splitlines()[-1])
    assert envelope["error"]["code"] == "internal_error"
    assert envelope["error"]["details"]["error"] == "boom"


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
