"""edgeswarm - remote inference vs. deployable edge AI agents over degraded cellular networks"""

__version__ = "0.2.0"
__author__ = "Surenthar"

from .config import SimConfig, load_config
from .engine import EventEngine, EventLog, SimEvent
from .exceptions import (
    EdgeSwarmError,
    ValidationError,
    DiscoveryTimeout,
    NoConnectivity,
    NoFeasibleBundle,
    TransferFailed,
    IllegalTransition,
)
from .metrics import MetricsReport, collect, compare
from .registry import ServiceRegistry, plan_bundle
from .scenarios import Scenario, load_scenario
from .simulation import Simulation, run_scenario

__all__ = [
    "SimConfig",
    "load_config",
    "EventEngine",
    "EventLog",
    "SimEvent",
    "EdgeSwarmError",
    "ValidationError",
    "DiscoveryTimeout",
    "NoConnectivity",
    "NoFeasibleBundle",
    "TransferFailed",
    "IllegalTransition",
    "MetricsReport",
    "collect",
    "compare",
    "ServiceRegistry",
    "plan_bundle",
    "Scenario",
    "load_scenario",
    "Simulation",
    "run_scenario",
]
