"""
File: edgeswarm/scenarios.py
Scenario definition format, loading/emitting, built-in scenario lookup
and task workload generation
"""

import json
import logging
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import BatteryConfig, SimConfig, load_config, pydantic_error_path, read_json_file
from .device import TaskRequest, Trajectory
from .engine import RngStream
from .exceptions import ScenarioValidationError, ValidationError
from .models import ArchMode, Capability, OfferingMode, ServiceOffering
from .network import CellTower, ingest_topology
from .utils import deep_merge, to_us

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

Position = Tuple[float, float]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Building(_Frozen):
    """Axis-aligned indoor region in meters (edges count as indoor)"""

    building_id: str = ""
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @model_validator(mode="after")
    def _ordered(self) -> "Building":
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("building needs x_min < x_max and y_min < y_max")
        return self

    def contains(self, position: Position) -> bool:
        x, y = position
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


class Waypoint(_Frozen):
    t: float = Field(ge=0)
    x: float
    y: float


class PreinstalledAgent(_Frozen):
    """A catalog agent placed on the device before the run (Dormant, or Active)"""

    agent_id: str
    activate: bool = False


class DeviceSpec(_Frozen):
    device_id: str = Field(min_length=1)
    position: Position = (0.0, 0.0)
    battery_pct: float = Field(default=100.0, ge=0, le=100)
    memory_bytes: int = Field(default=4_000_000_000, gt=0)
    credential: bool = True
    waypoints: List[Waypoint] = Field(default_factory=list)
    preinstalled: List[PreinstalledAgent] = Field(default_factory=list)
    battery: Optional[BatteryConfig] = None

    def trajectory(self) -> Trajectory:
        if self.waypoints:
            return Trajectory([(w.t, w.x, w.y) for w in self.waypoints])
        return Trajectory([(0.0, self.position[0], self.position[1])])


class WorkloadSpec(_Frozen):
    """
    A task stream for one capability

    ``rate_per_min`` drives poisson arrivals, ``interval_s`` fixed-interval
    arrivals and ``times`` scripted arrivals. Tasks start after ``start_s``.
    """

    capability: Capability
    arrival: Literal["poisson", "fixed-interval", "scripted"]
    rate_per_min: Optional[float] = Field(default=None, gt=0)
    interval_s: Optional[float] = Field(default=None, gt=0)
    times: List[float] = Field(default_factory=list)
    acceptable_latency_s: float = Field(default=10.0, gt=0)
    payload_bytes: int = Field(default=500_000, gt=0)
    start_s: float = Field(default=0.0, ge=0)
    device_ids: Optional[List[str]] = None

    @model_validator(mode="after")
    def _arrival_parameters(self) -> "WorkloadSpec":
        if self.arrival == "poisson" and self.rate_per_min is None:
            raise ValueError("poisson arrivals need rate_per_min > 0")
        if self.arrival == "fixed-interval" and self.interval_s is None:
            raise ValueError("fixed-interval arrivals need interval_s > 0")
        if any(t < 0 for t in self.times):
            raise ValueError("scripted times must be >= 0")
        return self


class Scenario(_Frozen):
    """A fully described simulation setup"""

    schema_version: Literal[1] = SCHEMA_VERSION
    scenario_id: str = Field(min_length=1)
    description: str = ""
    duration_s: float = Field(gt=0)
    arch_mode: ArchMode = ArchMode.AGENT
    towers: List[CellTower] = Field(default_factory=list)
    towers_csv: Optional[str] = None
    buildings: List[Building] = Field(default_factory=list)
    devices: List[DeviceSpec] = Field(min_length=1)
    workload: List[WorkloadSpec] = Field(default_factory=list)
    catalog: Optional[List[ServiceOffering]] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    link_probe_period_s: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _within_duration(self) -> "Scenario":
        ids = [d.device_id for d in self.devices]
        if len(ids) != len(set(ids)):
            raise ScenarioValidationError("duplicate device ids", path="devices")

        for di, device in enumerate(self.devices):
            for wi, waypoint in enumerate(device.waypoints):
                if waypoint.t > self.duration_s:
                    raise ScenarioValidationError(
                        f"waypoint at t={waypoint.t} is after duration {self.duration_s}",
                        path=f"devices[{di}].waypoints[{wi}].t",
                    )

        for wi, spec in enumerate(self.workload):
            if any(t > self.duration_s for t in spec.times):
                raise ScenarioValidationError(
                    "scripted task time after duration", path=f"workload[{wi}].times"
                )
            for device_id in spec.device_ids or ():
                if device_id not in ids:
                    raise ScenarioValidationError(
                        f"unknown device {device_id!r}", path=f"workload[{wi}].device_ids"
                    )

        tower_ids = [t.tower_id for t in self.towers]
        if len(tower_ids) != len(set(tower_ids)):
            raise ScenarioValidationError("duplicate tower ids", path="towers")
        return self

    def is_indoor(self, position: Position) -> bool:
        return any(b.contains(position) for b in self.buildings)

    def with_arch_mode(self, arch_mode: ArchMode) -> "Scenario":
        return self.model_copy(update={"arch_mode": arch_mode})

    def sim_config(
        self,
        overrides: Optional[Mapping] = None,
        env: Optional[Mapping[str, str]] = None,
    ) -> SimConfig:
        """
        Resolve the run configuration: defaults, EDGESWARM_CONFIG, the
        scenario's ``config`` and ``catalog``, then ``overrides``
        """
        layered = dict(self.config)
        if self.catalog is not None:
            layered["offerings"] = [o.model_dump(mode="json") for o in self.catalog]
        if overrides:
            layered = deep_merge(layered, dict(overrides))
        return load_config(layered, env)


# ============================================
# Loading and emitting
# ============================================

def builtin_scenarios() -> List[str]:
    """Names of the scenarios shipped with the package"""
    folder = resources.files("edgeswarm").joinpath("data/scenarios")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def builtin_path(name: str) -> Path:
    """
    Filesystem path of a built-in scenario

    Raises:
        ScenarioValidationError: If no built-in scenario has that name
    """
    if name not in builtin_scenarios():
        raise ScenarioValidationError(
            f"no built-in scenario {name!r} (have: {', '.join(builtin_scenarios())})"
        )
    return Path(str(resources.files("edgeswarm").joinpath(f"data/scenarios/{name}.json")))


def resolve_source(source: Union[str, Path]) -> Path:
    """A scenario path, or a built-in scenario name"""
    path = Path(source)
    if path.exists() or path.suffix == ".json" or len(path.parts) > 1:
        return path
    return builtin_path(str(source))


def parse_scenario(data: Mapping, base_dir: Optional[Path] = None) -> Scenario:
    """
    Validate a scenario dict; a ``towers_csv`` path is ingested (relative to
    ``base_dir``) and folded into ``towers``

    Raises:
        ScenarioValidationError: With the failing field path
    """
    try:
        scenario = Scenario.model_validate(data)
    except ScenarioValidationError:
        raise
    except pydantic.ValidationError as exc:
        raise ScenarioValidationError(
            f"invalid scenario: {pydantic_error_path(exc)}",
            path=pydantic_error_path(exc).split(":")[0],
        ) from exc

    if scenario.towers_csv is not None:
        csv_path = Path(scenario.towers_csv)
        if not csv_path.is_absolute() and base_dir is not None:
            csv_path = base_dir / csv_path
        try:
            with open(csv_path, "r", encoding="utf-8", newline="") as f:
                topology = ingest_topology(f)
        except OSError as exc:
            raise ScenarioValidationError(
                f"cannot read towers_csv {csv_path}: {exc}", path="towers_csv"
            ) from exc
        for error in topology.row_errors:
            logger.warning("%s: %s", csv_path, error)
        scenario = scenario.model_copy(
            update={"towers": list(scenario.towers) + topology.towers, "towers_csv": None}
        )
        # Re-run cross-field checks on the merged tower set.
        scenario = Scenario.model_validate(scenario.model_dump(mode="json"))

    try:
        config = scenario.sim_config()
    except ValidationError as exc:
        raise ScenarioValidationError(str(exc), path="config") from exc
    _check_preinstalled(scenario, config)
    return scenario


def _check_preinstalled(scenario: Scenario, config: SimConfig) -> None:
    deployable = {
        o.manifest.agent_id for o in config.offerings if o.mode is OfferingMode.DEPLOYABLE_AGENT
    }
    for di, device in enumerate(scenario.devices):
        for pi, agent in enumerate(device.preinstalled):
            if agent.agent_id not in deployable:
                raise ScenarioValidationError(
                    f"preinstalled agent {agent.agent_id!r} is not in the catalog",
                    path=f"devices[{di}].preinstalled[{pi}].agent_id",
                )


def load_scenario(source: Union[str, Path]) -> Scenario:
    """
    Load and fully validate a scenario file or built-in scenario name

    Args:
        source: Path to a scenario JSON file, or a built-in name

    Returns:
        Validated Scenario with CSV towers resolved and defaults filled

    Raises:
        ParseError: If the file is not valid JSON
        ScenarioValidationError: If the content violates the schema

    Example:
        scenario = load_scenario("paramedic_five_rights")
    """
    path = resolve_source(source)
    data = read_json_file(str(path))
    return parse_scenario(data, base_dir=path.parent)


def emit_scenario(scenario: Scenario) -> str:
    """Serialize a scenario as schema JSON (towers inline)"""
    return json.dumps(scenario.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


# ============================================
# Workload generation
# ============================================

def arrival_times(spec: WorkloadSpec, duration: float, rng: RngStream) -> List[float]:
    """
    Task arrival times, strictly increasing within (start_s, duration]

    Example:
        >>> spec = WorkloadSpec(capability="localization", arrival="fixed-interval", interval_s=60)
        >>> arrival_times(spec, 300, None)
        [60.0, 120.0, 180.0, 240.0, 300.0]
    """
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")

    if spec.arrival == "fixed-interval":
        times, k = [], 1
        while spec.start_s + k * spec.interval_s <= duration:
            times.append(float(spec.start_s + k * spec.interval_s))
            k += 1
        return times

    if spec.arrival == "scripted":
        raw = sorted(float(t) for t in spec.times if spec.start_s <= t <= duration)
    else:
        raw, t = [], spec.start_s
        mean_gap = 60.0 / spec.rate_per_min
        while True:
            t += rng.exponential(mean_gap)
            if t > duration:
                break
            raw.append(t)

    times = []
    for t in raw:
        if not times or to_us(t) > to_us(times[-1]):
            times.append(t)
    return times


def generate_tasks(
    spec: WorkloadSpec,
    duration: float,
    rng: RngStream,
    device_id: str = "device",
    prefix: str = "task",
) -> List[TaskRequest]:
    """
    Ordered task requests of one workload for one device

    Deterministic given the ``task-arrival`` stream state.
    """
    return [
        TaskRequest(
            task_id=f"{prefix}-{i:04d}",
            device_id=device_id,
            capability=spec.capability,
            time_s=t,
            payload_bytes=spec.payload_bytes,
            acceptable_latency_s=spec.acceptable_latency_s,
        )
        for i, t in enumerate(arrival_times(spec, duration, rng), start=1)
    ]
