"""
Shared fixtures for the edgeswarm test suite
"""

from typing import Dict, List

import pytest

from edgeswarm.config import load_config
from edgeswarm.device import DeviceState, InstalledAgent
from edgeswarm.engine import EventEngine
from edgeswarm.lifecycle import LifecycleEvent, LifecycleManager
from edgeswarm.models import AgentManifest, LifecycleState, Rat
from edgeswarm.network import LinkSample
from edgeswarm.registry import ServiceRegistry


def _link(
    bandwidth_bps: float = 50_000_000.0,
    loss_prob: float = 0.0,
    base_latency_s: float = 0.05,
    tower: str = "t1",
    rat: Rat = Rat.G4,
) -> LinkSample:
    return LinkSample(
        serving_tower=tower,
        rat=rat,
        snr_db=30.0,
        bandwidth_bps=bandwidth_bps,
        loss_prob=loss_prob,
        base_latency_s=base_latency_s,
    )


def scenario_dict(**updates) -> Dict:
    """A small valid scenario: one device next to one 4G tower"""
    data = {
        "schema_version": 1,
        "scenario_id": "unit",
        "duration_s": 600.0,
        "arch_mode": "agent",
        "towers": [
            {"tower_id": "t1", "rat": "4G", "max_bandwidth_bps": 50000000.0,
             "range_m": 2000.0, "base_latency_s": 0.05, "x_m": 100.0, "y_m": 0.0},
        ],
        "devices": [{"device_id": "dev-1", "position": [0.0, 0.0]}],
        "workload": [],
    }
    data.update(updates)
    return data


@pytest.fixture
def config():
    """Packaged defaults, ignoring EDGESWARM_CONFIG"""
    return load_config(env={})


@pytest.fixture
def catalog(config) -> Dict[str, AgentManifest]:
    return {o.manifest.agent_id: o.manifest for o in config.offerings if o.manifest is not None}


@pytest.fixture
def engine():
    return EventEngine("unit", master_seed=7)


@pytest.fixture
def lifecycle(engine, config):
    return LifecycleManager(engine, config)


@pytest.fixture
def registry(config, engine, lifecycle):
    return ServiceRegistry(config.offerings, config, engine, lifecycle)


@pytest.fixture
def device(config):
    return DeviceState(
        device_id="dev-1",
        memory_capacity=4_000_000_000,
        battery_config=config.battery,
    )


@pytest.fixture
def make_link():
    return _link


@pytest.fixture
def fast_link():
    """Lossless 50 Mb/s 4G link"""
    return _link()


@pytest.fixture
def place_agent(lifecycle, catalog):
    """Put a catalog agent on a device through the lifecycle (Dormant, or Active)"""

    def place(device: DeviceState, agent_id: str, activate: bool = True) -> InstalledAgent:
        agent = InstalledAgent(manifest=catalog[agent_id], state=LifecycleState.REQUESTED)
        device.installed[agent_id] = agent
        lifecycle.transition(device, agent, LifecycleEvent.BEGIN_DEPLOY, "test")
        lifecycle.transition(device, agent, LifecycleEvent.INSTALLED, "test")
        if activate:
            lifecycle.transition(device, agent, LifecycleEvent.ACTIVATE, "test")
        return agent

    return place


def payloads(log, kind: str, **match) -> List[Dict]:
    """Payloads of one event kind whose fields equal ``match``"""
    found = []
    for event in log.of_kind(kind):
        if all(event.payload.get(k) == v for k, v in match.items()):
            found.append(event.payload)
    return found