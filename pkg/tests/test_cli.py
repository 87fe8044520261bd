import csv
import io
import json
import shutil
import subprocess
import sys

import pytest
from conftest import FIXTURES

from setrisk.cli import SCHEMAS, main

DATA = FIXTURES / "cli"
JOBS = sorted((DATA / "jobs").glob("*.json"))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_scalar_shortfall_logcosh(capsys):
    code, out, _ = run(capsys, "scalar-shortfall", "--space", DATA / "coin.json",
                       "--loss", DATA / "exponential.json", "--x0", 0, "--component", 0)
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(0.4337809, abs=1e-6)


def test_region_csv_has_one_row_per_direction(capsys):
    code, out, _ = run(capsys, "region", "--space", DATA / "coin.json",
                       "--loss", DATA / "exponential.json", "--directions", 64)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["w1", "w2", "support", "z1", "z2"]
    assert len(rows) == 65
    assert all(len(r) == 5 for r in rows)


def test_json_format_override(capsys):
    code, out, _ = run(capsys, "support-sweep", "--space", DATA / "coin.json",
                       "--loss", DATA / "exponential.json", "--directions", 4, "--format", "json")
    assert code == 0
    assert isinstance(json.loads(out), (dict, list))


def test_schema_error_names_the_field(capsys):
    code, out, err = run(capsys, "scalar-shortfall", "--space", DATA / "bad_space.json",
                         "--loss", DATA / "exponential.json", "--x0", 0)
    assert code == 2 and out == ""
    assert "/probabilities/1" in err


def test_precondition_error_exit_code(capsys):
    code, _, err = run(capsys, "scalar-shortfall", "--space", DATA / "coin.json",
                       "--loss", DATA / "exponential.json", "--x0", -1)
    assert code == 2 and err.startswith("error:")


def test_bad_vector_argument(capsys):
    code, _, err = run(capsys, "entropic", "--space", DATA / "coin.json", "--beta", "1,x")
    assert code == 2 and "--beta" in err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_tolerance": 1.0}))
    code, _, err = run(capsys, "scalar-shortfall", "--space", DATA / "coin.json",
                       "--loss", DATA / "exponential.json", "--x0", 0, "--config", cfg)
    assert code == 2 and "no_such_tolerance" in err


def test_unbounded_market_exit_code_carries_certificate(capsys):
    code, out, _ = run(capsys, "run", "--job", DATA / "jobs" / "arbitrage.json")
    assert code == 3
    payload = json.loads(out)
    assert payload["status"] == "unbounded"
    assert payload["results"][0]["value"] == "-inf"
    assert payload["results"][0]["certificate"]["trades"]


def test_market_and_dual_commands(capsys):
    code, out, _ = run(capsys, "run", "--job", DATA / "jobs" / "bid_ask.json")
    assert code == 0 and json.loads(out)["results"][0]["value"] == pytest.approx(-0.95, abs=1e-9)
    code, out, _ = run(capsys, "run", "--job", DATA / "jobs" / "two_period.json")
    assert code == 0 and json.loads(out)["results"][0]["value"] == pytest.approx(-1.0 - 0.05 / 9, abs=1e-8)
    code, out, _ = run(capsys, "run", "--job", DATA / "jobs" / "wcone.json")
    assert code == 0 and json.loads(out)["member"] is True
    # no common halfspace is a valid answer, not a failure
    code, out, _ = run(capsys, "run", "--job", DATA / "jobs" / "finiteness.json")
    assert code == 0 and json.loads(out)["common_halfspace"] is False


def test_job_paths_are_relative_to_the_job(tmp_path, capsys):
    work = tmp_path / "work"
    shutil.copytree(DATA, work)
    job = json.loads((work / "jobs" / "logcosh.json").read_text())
    job["out"] = "result.json"
    (work / "jobs" / "logcosh.json").write_text(json.dumps(job))
    code, out, _ = run(capsys, "run", "--job", work / "jobs" / "logcosh.json")
    assert code == 0 and out == ""
    assert json.loads((work / "jobs" / "result.json").read_text())["value"] == pytest.approx(0.4337809, abs=1e-6)


def test_job_schema_is_enforced(tmp_path, capsys):
    job = tmp_path / "job.json"
    job.write_text(json.dumps({"command": "no-such-command", "args": {}}))
    code, _, err = run(capsys, "run", "--job", job)
    assert code == 2 and "/command" in err


def test_schemas_are_valid():
    from jsonschema import Draft202012Validator

    for schema in SCHEMAS.values():
        Draft202012Validator.check_schema(schema)


@pytest.mark.parametrize("job", JOBS, ids=[j.stem for j in JOBS])
def test_jobs_are_deterministic(job):
    def once():
        proc = subprocess.run([sys.executable, "-m", "setrisk", "run", "--job", str(job)],
                              capture_output=True, check=False)
        return proc.returncode, proc.stdout

    first, second = once(), once()
    assert first == second
    assert first[0] in (0, 3) and first[1]
