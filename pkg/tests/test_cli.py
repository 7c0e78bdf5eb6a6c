"""
Tests for the edgeswarm command line
"""

import json

import pytest

from edgeswarm.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from edgeswarm.engine import EventLog
from edgeswarm.scenarios import builtin_path

from tests.conftest import scenario_dict


@pytest.fixture
def scenario_file(tmp_path):
    workload = [{
        "capability": "hazard-detection", "arrival": "fixed-interval",
        "interval_s": 120.0, "start_s": 0.0,
    }]
    path = tmp_path / "unit.json"
    path.write_text(json.dumps(scenario_dict(workload=workload)), encoding="utf-8")
    return path


def _simulate(scenario, out, *extra):
    return main(["simulate", "--scenario", str(scenario), "--out", str(out), *extra])


def test_scenario_list(capsys):
    """Built-in names are printed one per line"""
    assert main(["scenario", "list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == [
        "firefighter_indoor", "paramedic_five_rights", "urban_walk_topology",
    ]


def test_scenario_validate(capsys, scenario_file, tmp_path):
    """Valid scenarios summarize; invalid ones exit with the validation code"""
    assert main(["scenario", "validate", "--scenario", str(scenario_file)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("unit: ok (1 devices, 1 towers, 1 workloads")

    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(scenario_dict(duration_s=-1)), encoding="utf-8")
    assert main(["scenario", "validate", "--scenario", str(broken)]) == EXIT_VALIDATION
    assert "duration_s" in capsys.readouterr().err


def test_simulate_then_report(scenario_file, tmp_path):
    """simulate writes an NDJSON log that report turns into metrics and a trace"""
    log_path = tmp_path / "run.ndjson"
    report_path = tmp_path / "report.json"
    csv_path = tmp_path / "trace.csv"

    assert _simulate(scenario_file, log_path, "--seed", "3") == EXIT_OK
    log = EventLog.loads(log_path.read_text(encoding="utf-8"))
    assert log.entries[0].payload["seed"] == 3

    assert main([
        "report", "--log", str(log_path), "--out", str(report_path),
        "--trace-csv", str(csv_path),
    ]) == EXIT_OK
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["scenario_id"] == "unit"
    assert report["arch_mode"] == "agent"
    assert report["tasks"]["count"] == 4
    assert csv_path.read_text(encoding="utf-8").splitlines()[0] == (
        "t_s,device_id,battery_pct,memory_used_bytes"
    )


def test_simulate_seed_range(scenario_file, tmp_path):
    """A seed range writes one log per seed and needs a {seed} placeholder"""
    pattern = str(tmp_path / "run-{seed}.ndjson")

    assert _simulate(scenario_file, pattern, "--seeds", "1..2") == EXIT_OK
    assert (tmp_path / "run-1.ndjson").exists() and (tmp_path / "run-2.ndjson").exists()

    assert _simulate(scenario_file, tmp_path / "single.ndjson", "--seeds", "1..2") == EXIT_VALIDATION
    assert _simulate(scenario_file, pattern, "--seeds", "5..1") == EXIT_VALIDATION


def test_compare_runs(scenario_file, tmp_path, capsys):
    """Both architectures of one seed compare; different seeds do not"""
    remote = tmp_path / "remote.ndjson"
    agent = tmp_path / "agent.ndjson"
    other_seed = tmp_path / "other.ndjson"
    out = tmp_path / "compare.json"

    assert _simulate(scenario_file, remote, "--arch", "remote", "--seed", "9") == EXIT_OK
    assert _simulate(scenario_file, agent, "--arch", "agent", "--seed", "9") == EXIT_OK
    assert _simulate(scenario_file, other_seed, "--seed", "10") == EXIT_OK

    assert main(["compare", "--log-a", str(remote), "--log-b", str(agent),
                 "--out", str(out), "--text"]) == EXIT_OK
    comparison = json.loads(out.read_text(encoding="utf-8"))
    assert comparison["a"]["arch_mode"] == "remote"
    assert comparison["b"]["arch_mode"] == "agent"
    assert "remote (a) vs agent (b)" in capsys.readouterr().out

    assert main(["compare", "--log-a", str(remote), "--log-b", str(other_seed)]) == EXIT_VALIDATION


def test_report_errors(tmp_path):
    """A missing log is a runtime error; a corrupt one a validation error"""
    assert main(["report", "--log", str(tmp_path / "missing.ndjson")]) == EXIT_RUNTIME

    corrupt = tmp_path / "corrupt.ndjson"
    corrupt.write_text("{not json\n", encoding="utf-8")
    assert main(["report", "--log", str(corrupt)]) == EXIT_VALIDATION


def test_topology_ingest(tmp_path, capsys):
    """The shipped towers CSV normalizes without row errors"""
    source = builtin_path("urban_walk_topology").parent / "urban_walk_towers.csv"
    out = tmp_path / "towers.csv"

    assert main(["topology", "ingest", "--csv", str(source), "--out", str(out)]) == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "tower_id,lat,lon,rat,max_bandwidth_bps,range_m,base_latency_s"
    assert len(lines) == 17
    assert capsys.readouterr().err == ""


def test_topology_ingest_bad_header(tmp_path):
    """A wrong header fails validation"""
    source = tmp_path / "bad.csv"
    source.write_text("id,lat,lon\nT1,0,0\n", encoding="utf-8")

    assert main(["topology", "ingest", "--csv", str(source)]) == EXIT_VALIDATION


def test_bad_arguments_are_validation_errors(capsys):
    """Missing flags and bad choices exit 1, not argparse's 2"""
    assert main(["simulate", "--scenario", "firefighter_indoor"]) == EXIT_VALIDATION
    assert "--out" in capsys.readouterr().err

    assert main(["simulate", "--scenario", "firefighter_indoor", "--arch", "satellite",
                 "--out", "x.ndjson"]) == EXIT_VALIDATION
    assert main(["frobnicate"]) == EXIT_VALIDATION
    assert main(["--version"]) == EXIT_OK


def test_compare_paramedic_agent_lowers_timeouts(tmp_path):
    """On the paramedic route the agent run times out less than the remote run"""
    remote = tmp_path / "remote.ndjson"
    agent = tmp_path / "agent.ndjson"
    out = tmp_path / "compare.json"

    for arch, path in (("remote", remote), ("agent", agent)):
        assert _simulate("paramedic_five_rights", path, "--arch", arch, "--seed", "7") == EXIT_OK
    assert main(["compare", "--log-a", str(remote), "--log-b", str(agent),
                 "--out", str(out)]) == EXIT_OK

    deltas = json.loads(out.read_text(encoding="utf-8"))["deltas"]
    assert deltas["tasks.timeout"] < 0
    assert deltas["tasks.first_try"] > 0
