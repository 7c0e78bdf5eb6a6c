"""
End-to-end checks of the two architectures on the built-in scenarios,
plus statistical checks of the planner, retries and inference
"""

import math

import numpy as np
import pytest

from edgeswarm.cli import EXIT_OK, main
from edgeswarm.device import DeviceResources, TaskRequest, run_inference
from edgeswarm.engine import RngStream
from edgeswarm.exceptions import NoFeasibleBundle
from edgeswarm.metrics import battery_trace, collect
from edgeswarm.models import AgentManifest, ArchMode, Capability, ModelClass, TaskCategory
from edgeswarm.registry import brute_force_plan, plan_bundle
from edgeswarm.scenarios import builtin_scenarios, load_scenario, parse_scenario
from edgeswarm.simulation import Simulation, run_scenario

from tests.conftest import payloads, scenario_dict

SEEDS = range(1, 21)
DEGRADED = {TaskCategory.RETRIED.value, TaskCategory.TIMEOUT.value, TaskCategory.UNACCEPTABLE.value}
SUCCESS = {TaskCategory.FIRST_TRY.value, TaskCategory.RETRIED.value}


def _events(log, kind, **match):
    return [e for e in log.of_kind(kind) if all(e.payload.get(k) == v for k, v in match.items())]


def _continuous_drug_checks(duration_s, preinstalled=()):
    """One device next to a 4G tower classifying a drug label every 30 s"""
    return parse_scenario(scenario_dict(
        scenario_id="continuous",
        duration_s=duration_s,
        devices=[{"device_id": "dev-1", "position": [0.0, 0.0],
                  "preinstalled": [{"agent_id": a} for a in preinstalled]}],
        workload=[{"capability": "drug-label-classification", "arrival": "fixed-interval",
                   "interval_s": 30.0}],
    ))


# ============================================
# Remote inference degrades on the paramedic route
# ============================================

def test_remote_paramedic_tasks_mostly_degraded():
    """More than half of the remote classifications retry, time out or arrive too late"""
    scenario = load_scenario("paramedic_five_rights")
    categories = []
    for seed in SEEDS:
        log = run_scenario(scenario, seed, arch_mode=ArchMode.REMOTE)
        categories += [p["category"] for p in payloads(log, "task")]

    assert len(categories) == 200
    degraded = sum(1 for c in categories if c in DEGRADED) / len(categories)
    assert 0.50 <= degraded <= 0.95


# ============================================
# Deployed agents keep working without the network
# ============================================

def test_agent_paramedic_survives_lost_cellular():
    """Deploys take at most two round trips; tasks after it succeed with or without cellular"""
    scenario = load_scenario("paramedic_five_rights")
    for seed in SEEDS:
        log = run_scenario(scenario, seed, arch_mode=ArchMode.AGENT)

        installed = _events(log, "deploy", outcome="installed")
        assert installed
        assert all(e.payload["round_trips"] <= 2 for e in installed)

        deployed_at = installed[0].time_s
        after = [e.payload for e in log.of_kind("task") if e.time_s >= deployed_at]
        assert after
        assert sum(1 for p in after if p["category"] in SUCCESS) / len(after) >= 0.95

        severed = run_scenario(
            scenario, seed, arch_mode=ArchMode.AGENT,
            overrides={"network": {"sever_cellular_at_s": deployed_at}},
        )
        assert payloads(severed, "task") == payloads(log, "task")


# ============================================
# Battery drain under a continuous active agent
# ============================================

def test_battery_half_empty_after_four_to_six_hours():
    """A continuously busy agent drains half the battery in 4 to 6 hours, every run alike"""
    scenario = _continuous_drug_checks(25_200.0)

    crossings = [collect(run_scenario(scenario, 8)).battery["dev-1"].time_to_50_s for _ in range(2)]

    assert crossings[0] is not None
    assert 4 * 3600 <= crossings[0] <= 6 * 3600
    assert crossings[0] == crossings[1]


def test_dormant_agent_is_free():
    """A never-activated agent leaves the battery trace unchanged point for point"""
    plain = run_scenario(_continuous_drug_checks(3600.0), 8)
    dormant = run_scenario(_continuous_drug_checks(3600.0, preinstalled=("hazard-logreg",)), 8)

    def trace(log):
        return [(t, pct) for t, _device, pct, _memory in battery_trace(log)]

    assert trace(plain) == trace(dormant)
    assert not _events(dormant, "lifecycle", agent_id="hazard-logreg", to="Active")


# ============================================
# GPS to PDR swap indoors
# ============================================

def _swap_run(seed):
    sim = Simulation(load_scenario("firefighter_indoor"), seed)
    log = sim.run()
    n_bad = sim.config.lifecycle.n_bad

    paused = _events(log, "lifecycle", agent_id="loc-gps", to="Paused")
    assert len(paused) == 1
    pause_t = paused[0].time_s
    gps_indoor = [e for e in _events(log, "sensor", agent_id="loc-gps") if e.payload["indoor"]]
    assert 0 < len([e for e in gps_indoor if e.time_s <= pause_t]) <= n_bad + 1

    assert [p["outcome"] for p in payloads(log, "replacement")] == ["requested", "installed"]
    assert _events(log, "replacement", outcome="requested")[0].time_s == pause_t
    assert payloads(log, "user-interaction") == []

    # pause, request, install and activation all within n_bad + 1 fixes indoors
    deadline = gps_indoor[0].time_s + n_bad * sim.config.engine.sensor_tick_s
    active = _events(log, "lifecycle", agent_id="loc-pdr", to="Active")
    assert active
    assert active[0].time_s <= deadline

    swap_t = _events(log, "replacement", outcome="installed")[0].time_s
    pdr = [
        e.payload["error_m"] for e in _events(log, "sensor", agent_id="loc-pdr")
        if swap_t < e.time_s <= swap_t + 60.0
    ]
    assert pdr
    return float(np.mean(pdr)), float(np.mean([e.payload["error_m"] for e in gps_indoor]))


def test_gps_swapped_for_pdr_without_user():
    """Dead reckoning after the swap beats the paused GPS indoors (sign test)"""
    wins = 0
    for seed in range(100):
        pdr_error, gps_error = _swap_run(seed)
        wins += pdr_error < gps_error

    p_value = sum(math.comb(100, i) for i in range(wins, 101)) / 2 ** 100
    assert p_value < 0.01


# ============================================
# Apoptosis and determinism
# ============================================

@pytest.mark.parametrize("name", builtin_scenarios())
@pytest.mark.parametrize("arch", list(ArchMode))
def test_end_of_emergency_leaves_nothing_installed(name, arch):
    """Every agent is gone and every byte released after the final sweep"""
    sim = Simulation(load_scenario(name), seed=5, arch_mode=arch)
    sim.run()

    for rt in sim.devices.values():
        assert rt.state.installed == {}
        assert rt.state.memory_used == 0


@pytest.mark.parametrize("name", builtin_scenarios())
def test_simulate_is_byte_identical(name, tmp_path):
    """Same scenario, seed and config produce the same log file"""
    first, second = tmp_path / "first.ndjson", tmp_path / "second.ndjson"

    for out in (first, second):
        assert main(["simulate", "--scenario", name, "--seed", "17", "--out", str(out)]) == EXIT_OK

    assert first.read_bytes() == second.read_bytes()
    assert first.stat().st_size > 0


# ============================================
# Planner properties
# ============================================

def _random_catalog(rng, capability):
    manifests = []
    for i in range(int(rng.integers(1, 8))):
        manifests.append(AgentManifest(
            agent_id=f"agent-{i}",
            capability=capability if rng.random() < 0.8 else Capability.HAZARD_DETECTION,
            model_class=list(ModelClass)[int(rng.integers(0, len(ModelClass)))],
            payload_size=int(10 ** rng.uniform(4, 9)),
            memory_footprint=int(10 ** rng.uniform(5, 9.5)),
            per_inference_energy=0.01,
            per_inference_latency=0.1,
            accuracy=round(float(rng.uniform(0.5, 1.0)), 2),
            ttl=3600.0,
        ))
    return manifests


def test_planner_matches_exhaustive_search(make_link):
    """1000 random catalogs, links and devices: greedy and exhaustive agree"""
    rng = np.random.default_rng(20)
    capability = Capability.DRUG_LABEL_CLASSIFICATION

    for _ in range(1000):
        catalog = _random_catalog(rng, capability)
        link = make_link(bandwidth_bps=10 ** rng.uniform(3, 8.5),
                         base_latency_s=float(rng.uniform(0.01, 0.5)))
        resources = DeviceResources(free_memory_bytes=int(10 ** rng.uniform(5, 9.5)))
        exclude = (ModelClass.DNN,) if rng.random() < 0.2 else ()

        expected = brute_force_plan(capability, link, resources, catalog, 120.0, exclude)
        if expected is None:
            with pytest.raises(NoFeasibleBundle):
                plan_bundle(capability, link, resources, catalog, exclude=exclude)
        else:
            assert plan_bundle(capability, link, resources, catalog, exclude=exclude) == expected


def test_planner_never_grows_payload_as_bandwidth_drops(make_link):
    """Sweeping bandwidth down never yields a larger bundle"""
    rng = np.random.default_rng(21)
    capability = Capability.DRUG_LABEL_CLASSIFICATION
    resources = DeviceResources(free_memory_bytes=4_000_000_000)

    for _ in range(200):
        catalog = _random_catalog(rng, capability)
        previous = math.inf
        for bandwidth in np.geomspace(1e9, 1e3, 25):
            try:
                chosen = plan_bundle(capability, make_link(float(bandwidth)), resources, catalog)
            except NoFeasibleBundle:
                previous = 0
                continue
            assert chosen.payload_size <= previous
            previous = chosen.payload_size


# ============================================
# Statistical oracles
# ============================================

def test_remote_retry_distribution(registry, make_link):
    """Loss 0.5, three attempts: 0.5 first-try, 0.375 retried, 0.125 timeout"""
    link = make_link(loss_prob=0.5)
    counts = {c: 0 for c in TaskCategory}
    n = 10_000

    for i in range(n):
        task = TaskRequest(
            task_id=f"task-{i:05d}", device_id="dev-1",
            capability=Capability.DRUG_LABEL_CLASSIFICATION, time_s=0.0,
            payload_bytes=100_000, acceptable_latency_s=60.0,
        )
        counts[registry.remote_infer(task, link).category] += 1

    assert counts[TaskCategory.FIRST_TRY] / n == pytest.approx(0.5, abs=0.02)
    assert counts[TaskCategory.RETRIED] / n == pytest.approx(0.375, abs=0.02)
    assert counts[TaskCategory.TIMEOUT] / n == pytest.approx(0.125, abs=0.02)
    assert counts[TaskCategory.UNACCEPTABLE] == 0


def test_inference_correctness_matches_accuracy(device, place_agent):
    """Onboard correctness frequency tracks the manifest accuracy within 0.01"""
    agent = place_agent(device, "drug-dnn")
    rng = RngStream("inference", 3)
    task = TaskRequest(
        task_id="task-00001", device_id=device.device_id,
        capability=Capability.DRUG_LABEL_CLASSIFICATION, time_s=0.0,
        payload_bytes=500_000, acceptable_latency_s=10.0,
    )

    n = 10_000
    correct = sum(run_inference(device, agent.agent_id, task, rng).correct for _ in range(n))

    assert correct / n == pytest.approx(agent.manifest.accuracy, abs=0.01)
