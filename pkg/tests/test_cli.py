from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from bapmsim.cli import main
from bapmsim.experiments import data_path

EXIT_OK, EXIT_INPUT, EXIT_MODEL, EXIT_REPRO = 0, 1, 2, 3


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# --- advise ------------------------------------------------------------------

def test_advise_text(capsys):
    code, out, _ = run(capsys, "advise", "castep")
    assert code == EXIT_OK and out.startswith("castep: MemoryMode")


def test_advise_json(capsys):
    code, out, _ = run(capsys, "advise", "fdb5", "--format", "json")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["label"] == "AppDirect + DirectAccess"


def test_advise_csv_lists_the_trail(capsys):
    code, out, _ = run(capsys, "advise", "monc", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_OK and rows and set(rows[0]) == {"step", "question", "answer"}


def test_advise_profile_path(capsys, tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"name": "x", "memory_intensive": True}))
    code, out, _ = run(capsys, "advise", str(p))
    assert code == EXIT_OK and "MemoryMode" in out


def test_advise_missing_pattern_is_input_error(capsys, tmp_path):
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"name": "x", "io_intensive": True, "io_pattern": "None"}))
    code, _, err = run(capsys, "advise", str(p))
    assert code == EXIT_INPUT and "PatternRequired" in err


@pytest.mark.parametrize("content", ["", "{not json", "[]"])
def test_advise_bad_files_are_input_errors(capsys, tmp_path, content):
    p = tmp_path / "p.json"
    p.write_text(content)
    assert run(capsys, "advise", str(p))[0] == EXIT_INPUT


def test_advise_unknown_profile(capsys):
    assert run(capsys, "advise", "no-such-profile")[0] == EXIT_INPUT


def test_usage_error_is_input_error(capsys):
    assert run(capsys, "advise")[0] == EXIT_INPUT
    assert run(capsys, "advise", "castep", "--format", "xml")[0] == EXIT_INPUT


# --- simulate ----------------------------------------------------------------

def test_simulate_unknown_scenario(capsys):
    code, _, err = run(capsys, "simulate", "bogus")
    assert code == EXIT_INPUT and "table1" in err


def test_simulate_scenario_outputs_are_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "simulate", "monc", "--out", str(a))[0] == EXIT_OK
    assert run(capsys, "simulate", "monc", "--out", str(b))[0] == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and "monc.csv" in names
    assert any(n.endswith("_io.csv") for n in names)
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_simulate_seed_changes_jittered_output(capsys):
    _, one, _ = run(capsys, "simulate", "monc", "--format", "json", "--seed", "1")
    _, two, _ = run(capsys, "simulate", "monc", "--format", "json", "--seed", "2")
    assert json.loads(one)["seed"] == 1 and one != two


@pytest.mark.parametrize("fmt", ["text", "json", "csv"])
def test_simulate_formats(capsys, fmt):
    code, out, _ = run(capsys, "simulate", "snappy", "--format", fmt)
    assert code == EXIT_OK and out
    if fmt == "json":
        assert json.loads(out)["scenario"] == "snappy"


def _spec(tmp_path, doc):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_simulate_spec_file(capsys, tmp_path):
    doc = {"jobs": [{"id": "a", "profile": "monc", "nodes": [0], "storage": "Fsdax"},
                    {"id": "b", "profile": "monc", "nodes": [1]}]}
    code, out, _ = run(capsys, "simulate", _spec(tmp_path, doc), "--format", "json")
    assert code == EXIT_OK and set(json.loads(out)["report"]["jobs"]) == {"a", "b"}


def test_simulate_out_of_memory_is_model_error(capsys, tmp_path):
    doc = {"jobs": [{"id": "s", "profile": "snappyhexmesh", "nodes": [0], "storage": "Fsdax"}]}
    code, _, err = run(capsys, "simulate", _spec(tmp_path, doc))
    assert code == EXIT_MODEL and "OutOfMemory" in err


def test_simulate_allocation_conflict_is_model_error(capsys, tmp_path):
    doc = {"jobs": [{"id": "a", "profile": "monc", "nodes": [0]},
                    {"id": "b", "profile": "monc", "nodes": [0]}]}
    assert run(capsys, "simulate", _spec(tmp_path, doc))[0] == EXIT_MODEL


def test_simulate_empty_spec_is_input_error(capsys, tmp_path):
    assert run(capsys, "simulate", _spec(tmp_path, {"jobs": []}))[0] == EXIT_INPUT


def test_simulate_cyclic_workflow_is_input_error(capsys, tmp_path):
    job = {"profile": {"name": "p", "steps": 1, "compute_seconds_per_step": 1.0}}
    wf = {"jobs": [dict(job, id="a"), dict(job, id="b")],
          "datasets": [{"id": "x", "size": "1GiB"}, {"id": "y", "size": "1GiB"}],
          "edges": [["a", "x", "b"], ["b", "y", "a"]]}
    code, _, err = run(capsys, "simulate", _spec(tmp_path, {"workflow": wf}))
    assert code == EXIT_INPUT and "Cyclic" in err


def test_simulate_workflow_spec(capsys, tmp_path):
    job = {"profile": {"name": "p", "steps": 2, "compute_seconds_per_step": 1.0}}
    wf = {"jobs": [dict(job, id="a"), dict(job, id="b")],
          "datasets": [{"id": "x", "size": "10GiB"}], "edges": [["a", "x", "b"]]}
    code, out, _ = run(capsys, "simulate", _spec(tmp_path, {"workflow": wf}), "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_OK and [r["label"].split()[0] for r in rows if r["kind"] == "job"] == ["a", "b"]


# --- calibrate ---------------------------------------------------------------

def test_check_only_scores_bundled_calibration_without_writing(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, _ = run(capsys, "calibrate", "--check-only", "--out", str(tmp_path / "o"))
    assert code == EXIT_OK and "max |rel.err|" in out
    assert list(tmp_path.iterdir()) == []


def _targets(tmp_path, targets):
    p = tmp_path / "targets.json"
    p.write_text(json.dumps({"targets": targets}))
    return str(p)


OBJ = {"id": "fdb5.write", "observed": 72 * 1024 ** 3, "units": "B/s", "model": "objectstore_throughput",
       "args": {"servers": 32}, "tolerance": 1e-6, "group": "objectstore"}


def test_calibrate_writes_file(capsys, tmp_path):
    out = tmp_path / "cal.json"
    code, _, err = run(capsys, "calibrate", "--targets", _targets(tmp_path, [OBJ]), "--out", str(out),
                       "--format", "json")
    assert code == EXIT_OK and out.exists()
    doc = json.loads(out.read_text())
    assert doc["params"]["objectstore.per_server_bw"]["provenance"] == "fitted"
    assert "no targets for group" in err


def test_calibrate_unidentifiable_group_exits_2(capsys, tmp_path):
    eph = [{"id": f"e{i}", "observed": 1e10, "units": "B/s", "model": "ior_throughput",
            "args": {"access": a, "nodes": 10, "clients": 10}, "group": "ephemeral"}
           for i, a in enumerate(["EasyRead", "EasyWrite", "HardRead"])]
    code, _, err = run(capsys, "calibrate", "--targets", _targets(tmp_path, eph), "--out", str(tmp_path))
    assert code == EXIT_MODEL and "ephemeral" in err
    assert not (tmp_path / "calibration.json").exists()


def test_check_only_failing_targets_exit_2(capsys, tmp_path):
    bad = dict(OBJ, observed=1.0)
    assert run(capsys, "calibrate", "--check-only", "--targets", _targets(tmp_path, [bad]))[0] == EXIT_MODEL


# --- reproduce ---------------------------------------------------------------

def test_reproduce_unknown(capsys):
    assert run(capsys, "reproduce", "bogus")[0] == EXIT_INPUT


def test_reproduce_one_scenario_writes_files(capsys, tmp_path):
    code, out, _ = run(capsys, "reproduce", "io500", "--out", str(tmp_path))
    assert code == EXIT_OK and "PASS" in out
    assert (tmp_path / "reproduce.csv").exists() and (tmp_path / "reproduce.json").exists()


def test_reproduce_failure_exits_3(capsys, tmp_path):
    cal = json.loads(data_path("calibration.json").read_text())
    cal["params"]["ephemeral.per_node_read_bw"]["value"] /= 4
    p = tmp_path / "cal.json"
    p.write_text(json.dumps(cal))
    code, out, _ = run(capsys, "reproduce", "io500", "--calibration", str(p))
    assert code == EXIT_REPRO and "FAIL" in out


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "bapmsim.cli", "advise", "castep", "--format", "json"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["platform"] == "MemoryMode"
