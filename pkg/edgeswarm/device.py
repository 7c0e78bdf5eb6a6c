"""
File: edgeswarm/device.py
Edge device model: battery and memory budgets, GPS/IMU sensors,
onboard inference, PDR localization and the agent installation ledger
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .config import BatteryConfig, SensorConfig
from .engine import RngStream
from .exceptions import (
    AgentAlreadyInstalled,
    AgentNotActive,
    CapabilityMismatch,
    InsufficientMemory,
    UnknownAgent,
)
from .models import (
    MEMORY_HOLDING_STATES,
    AgentManifest,
    Capability,
    LifecycleState,
    TaskCategory,
)

logger = logging.getLogger(__name__)

Position = Tuple[float, float]

GPS_FIX = "gps-fix"
IMU_STEP = "imu-step"


@dataclass
class InstalledAgent:
    """One row of the device's agent ledger"""

    manifest: AgentManifest
    state: LifecycleState
    activated_at: Optional[float] = None
    installed_at: Optional[float] = None

    @property
    def agent_id(self) -> str:
        return self.manifest.agent_id

    @property
    def expires_at(self) -> Optional[float]:
        """Activation time + ttl; None while the TTL clock has not started"""
        if self.activated_at is None:
            return None
        return self.activated_at + self.manifest.ttl


@dataclass(frozen=True)
class DeviceResources:
    free_memory_bytes: int


@dataclass
class Activity:
    """Battery-relevant activity accumulated since the last battery step"""

    inference_pct: float = 0.0
    radio_bytes: int = 0
    dormant_extra: float = 0.0


@dataclass(frozen=True)
class TaskRequest:
    task_id: str
    device_id: str
    capability: Capability
    time_s: float
    payload_bytes: int
    acceptable_latency_s: float


@dataclass(frozen=True)
class TaskOutcome:
    task_id: str
    category: TaskCategory
    attempts: int
    latency_s: float
    correct: bool
    served_by: str

    @property
    def succeeded(self) -> bool:
        return self.category in (TaskCategory.FIRST_TRY, TaskCategory.RETRIED)

    def to_payload(self, device_id: str, capability: Capability) -> dict:
        return {
            "task_id": self.task_id,
            "device_id": device_id,
            "capability": capability.value,
            "served_by": self.served_by,
            "category": self.category.value,
            "attempts": self.attempts,
            "latency_s": self.latency_s,
            "correct": self.correct,
        }


@dataclass(frozen=True)
class SensorReading:
    """A GPS fix (x, y, error_estimate_m) or an IMU step (heading, stride_m)"""

    t: float
    kind: str
    x: float = 0.0
    y: float = 0.0
    error_estimate_m: float = 0.0
    heading: float = 0.0
    stride_m: float = 0.0

    def __post_init__(self):
        if self.kind not in (GPS_FIX, IMU_STEP):
            raise ValueError(f"unknown reading kind {self.kind!r}")
        if self.error_estimate_m < 0:
            raise ValueError("error estimate must be >= 0")
        if self.stride_m < 0:
            raise ValueError("stride must be >= 0")

    def to_payload(self) -> dict:
        if self.kind == GPS_FIX:
            return {"kind": GPS_FIX, "x": self.x, "y": self.y,
                    "error_estimate_m": self.error_estimate_m}
        return {"kind": IMU_STEP, "heading": self.heading, "stride_m": self.stride_m}


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float

    @property
    def position(self) -> Position:
        return (self.x, self.y)


class Trajectory:
    """
    Piecewise-linear ground-truth motion through timed waypoints

    Before the first waypoint the device rests at it; after the last, at the last.
    """

    def __init__(self, waypoints: Sequence[Tuple[float, float, float]]):
        if not waypoints:
            raise ValueError("a trajectory needs at least one waypoint")
        self._points = sorted(waypoints, key=lambda p: p[0])

    def position(self, t: float) -> Position:
        points = self._points
        if t <= points[0][0]:
            return (points[0][1], points[0][2])
        for (t0, x0, y0), (t1, x1, y1) in zip(points, points[1:]):
            if t <= t1:
                if t1 == t0:
                    return (x1, y1)
                f = (t - t0) / (t1 - t0)
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))
        return (points[-1][1], points[-1][2])


@dataclass
class DeviceState:
    """
    Mutable state of one edge device

    ``memory_used`` always equals the summed footprints of ledger agents in
    memory-holding states (Deploying, Dormant, Active, Paused, Expired).
    """

    device_id: str
    memory_capacity: int
    position: Position = (0.0, 0.0)
    battery_pct: float = 100.0
    memory_used: int = 0
    installed: Dict[str, InstalledAgent] = field(default_factory=dict)
    indoor: bool = False
    credential: bool = True
    heading: float = 0.0
    battery_config: BatteryConfig = field(default_factory=BatteryConfig)
    pending: Activity = field(default_factory=Activity)

    def __post_init__(self):
        if not 0.0 <= self.battery_pct <= 100.0:
            raise ValueError(f"battery must be within [0, 100], got {self.battery_pct}")
        if self.memory_capacity <= 0:
            raise ValueError("memory capacity must be > 0")

    @property
    def depleted(self) -> bool:
        return self.battery_pct <= 0.0

    @property
    def free_memory(self) -> int:
        return self.memory_capacity - self.memory_used

    def resources(self) -> DeviceResources:
        return DeviceResources(free_memory_bytes=self.free_memory)

    # ---- memory ledger -------------------------------------------------

    def charge_memory(self, manifest: AgentManifest) -> None:
        """
        Reserve an agent's footprint

        Raises:
            InsufficientMemory: If it does not fit; nothing changes
        """
        if self.memory_used + manifest.memory_footprint > self.memory_capacity:
            raise InsufficientMemory(
                f"{self.device_id}: {manifest.agent_id} needs {manifest.memory_footprint} bytes, "
                f"{self.free_memory} free"
            )
        self.memory_used += manifest.memory_footprint

    def release_memory(self, manifest: AgentManifest) -> None:
        self.memory_used -= manifest.memory_footprint
        if self.memory_used < 0:
            raise AssertionError(f"{self.device_id}: memory ledger went negative")

    def ledger_footprint(self) -> int:
        """Sum of footprints the ledger says should be held"""
        return sum(
            agent.manifest.memory_footprint
            for agent in self.installed.values()
            if agent.state in MEMORY_HOLDING_STATES
        )

    def install(self, manifest: AgentManifest, now: float = 0.0) -> "DeviceState":
        """
        Place an agent directly in Dormant state

        Raises:
            AgentAlreadyInstalled: If the agent id is already on the device
            InsufficientMemory: If it does not fit; the device is unchanged
        """
        if manifest.agent_id in self.installed:
            raise AgentAlreadyInstalled(f"{self.device_id}: {manifest.agent_id} already present")
        self.charge_memory(manifest)
        self.installed[manifest.agent_id] = InstalledAgent(
            manifest=manifest, state=LifecycleState.DORMANT, installed_at=now
        )
        return self

    def uninstall(self, agent_id: str) -> "DeviceState":
        """
        Remove an agent and free its memory

        Raises:
            UnknownAgent: If the agent is not on the device
        """
        agent = self.agent(agent_id)
        if agent.state in MEMORY_HOLDING_STATES:
            self.release_memory(agent.manifest)
        agent.state = LifecycleState.UNINSTALLED
        del self.installed[agent_id]
        return self

    def agent(self, agent_id: str) -> InstalledAgent:
        try:
            return self.installed[agent_id]
        except KeyError:
            raise UnknownAgent(f"{self.device_id}: no agent {agent_id!r}") from None

    def agents_for(
        self,
        capability: Capability,
        states: Iterable[LifecycleState],
    ) -> List[InstalledAgent]:
        """Agents of a capability in the given states, highest accuracy first"""
        wanted = set(states)
        found = [
            a for a in self.installed.values()
            if a.manifest.capability is capability and a.state in wanted
        ]
        return sorted(found, key=lambda a: (-a.manifest.accuracy, a.agent_id))


# ============================================
# Battery
# ============================================

def step_battery(device: DeviceState, dt: float, activity: Activity) -> float:
    """
    Advance the battery by ``dt`` seconds of idle drain plus activity

    battery <- max(0, battery - dt*r_idle - inference energy - radio_bytes*e_radio)

    Dormant agents cost nothing, so ``activity.dormant_extra`` must be 0.

    Args:
        device: Device to drain
        dt: Elapsed seconds (> 0)
        activity: Accumulated inference energy (percent) and radio bytes

    Returns:
        New battery percent

    Example:
        >>> step_battery(device, 3600, Activity())  # doctest: +SKIP
        98.0
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if activity.dormant_extra != 0:
        raise ValueError("dormant agents must not draw battery")

    config = device.battery_config
    drain = (
        dt * config.idle_pct_per_h / 3600.0
        + activity.inference_pct
        + activity.radio_bytes * config.radio_pct_per_mb / 1_000_000.0
    )
    device.battery_pct = max(0.0, device.battery_pct - drain)
    return device.battery_pct


# ============================================
# Onboard inference
# ============================================

def run_inference(
    device: DeviceState,
    agent_id: str,
    task: TaskRequest,
    rng: RngStream,
) -> TaskOutcome:
    """
    Classify a task onboard; no network is involved

    One draw from the ``inference`` stream decides correctness with
    probability ``manifest.accuracy``; the energy is queued for the next
    battery step.

    Raises:
        AgentNotActive: If the agent is not Active or the battery is empty
        CapabilityMismatch: If the agent serves another capability
    """
    agent = device.agent(agent_id)
    if agent.state is not LifecycleState.ACTIVE:
        raise AgentNotActive(f"{agent_id} is {agent.state.value}")
    if device.depleted:
        raise AgentNotActive(f"{device.device_id} battery depleted")
    if agent.manifest.capability is not task.capability:
        raise CapabilityMismatch(
            f"{agent_id} serves {agent.manifest.capability.value}, task needs {task.capability.value}"
        )

    correct = rng.random() < agent.manifest.accuracy
    device.pending.inference_pct += agent.manifest.per_inference_energy
    return TaskOutcome(
        task_id=task.task_id,
        category=TaskCategory.FIRST_TRY,
        attempts=1,
        latency_s=agent.manifest.per_inference_latency,
        correct=correct,
        served_by=f"onboard:{agent_id}",
    )


# ============================================
# Sensors and PDR
# ============================================

def gps_fix(
    truth: Position,
    indoor: bool,
    t: float,
    rng: RngStream,
    config: SensorConfig,
) -> SensorReading:
    """Ground truth plus Gaussian noise; indoor fixes use the inflated sigma"""
    sigma = config.gps_sigma_indoor_m if indoor else config.gps_sigma_outdoor_m
    x = truth[0] + rng.normal(0.0, sigma)
    y = truth[1] + rng.normal(0.0, sigma)
    spread = config.estimate_spread
    estimate = sigma * rng.uniform(1.0 - spread, 1.0 + spread)
    return SensorReading(t=t, kind=GPS_FIX, x=x, y=y, error_estimate_m=estimate)


def imu_step(
    heading: float,
    stride: float,
    t: float,
    rng: RngStream,
    config: SensorConfig,
) -> SensorReading:
    """True heading plus noise, true stride scaled by a uniform spread"""
    noisy_heading = heading + rng.normal(0.0, config.imu_heading_sigma_rad)
    spread = config.imu_stride_spread
    noisy_stride = stride * rng.uniform(1.0 - spread, 1.0 + spread)
    return SensorReading(t=t, kind=IMU_STEP, heading=noisy_heading, stride_m=noisy_stride)


def sensor_sample(
    device: DeviceState,
    t: float,
    rng: RngStream,
    config: SensorConfig,
    kind: str = GPS_FIX,
    stride: float = 0.0,
) -> SensorReading:
    """
    Sample a device sensor at its ground-truth state

    GPS fixes use ``device.position`` and ``device.indoor``; IMU steps use
    ``device.heading`` and the given true ``stride``.
    """
    if kind == GPS_FIX:
        return gps_fix(device.position, device.indoor, t, rng, config)
    if kind == IMU_STEP:
        return imu_step(device.heading, stride, t, rng, config)
    raise ValueError(f"unknown sensor kind {kind!r}")


def pdr_update(pose: Pose, step: SensorReading) -> Pose:
    """
    Dead-reckon one step: heading from the step, position += stride*(cos, sin)

    Example:
        >>> pdr_update(Pose(0.0, 0.0, 0.0), SensorReading(t=1, kind="imu-step", stride_m=0.8))
        Pose(x=0.8, y=0.0, heading=0.0)
    """
    if step.kind != IMU_STEP:
        raise ValueError("pdr_update needs an imu-step reading")
    if step.stride_m == 0:
        return pose
    heading = step.heading
    return Pose(
        x=pose.x + step.stride_m * math.cos(heading),
        y=pose.y + step.stride_m * math.sin(heading),
        heading=heading,
    )
