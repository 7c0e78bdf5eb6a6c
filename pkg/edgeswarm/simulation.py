"""
File: edgeswarm/simulation.py
Scenario run orchestration: devices, provisioning, task streams,
battery and sensor ticks, apoptosis sweeps
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from .config import SimConfig
from .device import (
    GPS_FIX,
    IMU_STEP,
    Activity,
    DeviceState,
    InstalledAgent,
    Pose,
    SensorReading,
    TaskOutcome,
    TaskRequest,
    Trajectory,
    pdr_update,
    run_inference,
    sensor_sample,
    step_battery,
)
from .engine import EventEngine, EventLog
from .exceptions import (
    DiscoveryTimeout,
    EdgeSwarmError,
    InsufficientMemory,
    NoConnectivity,
    NoFeasibleBundle,
    TransferFailed,
    Unauthorized,
)
from .lifecycle import LifecycleEvent, LifecycleManager, ReplacementRequest
from .models import (
    ArchMode,
    Capability,
    LifecycleState,
    ModelClass,
    TaskCategory,
)
from .network import NO_COVERAGE, LinkSample, link_state, p2p_link, relay_link
from .registry import DiscoveryQuery, ServiceRegistry, plan_bundle
from .scenarios import SCHEMA_VERSION, DeviceSpec, Scenario, generate_tasks
from .utils import distance

logger = logging.getLogger(__name__)

PROVISION_ERRORS = (
    DiscoveryTimeout, Unauthorized, NoConnectivity, NoFeasibleBundle,
    TransferFailed, InsufficientMemory,
)

ServingStates = (LifecycleState.ACTIVE, LifecycleState.DORMANT)


@dataclass
class DeviceRuntime:
    """Per-device bookkeeping the simulation keeps next to DeviceState"""

    spec: DeviceSpec
    state: DeviceState
    trajectory: Trajectory
    capabilities: List[Capability] = field(default_factory=list)
    endpoints_ready_at: Dict[Capability, float] = field(default_factory=dict)
    last_battery_t: float = 0.0
    depleted_logged: bool = False
    last_truth: Optional[tuple] = None
    last_good_fix: Optional[SensorReading] = None
    imu_since_fix: List[SensorReading] = field(default_factory=list)
    pdr_pose: Optional[Pose] = None

    @property
    def device_id(self) -> str:
        return self.spec.device_id


class Simulation:
    """
    One deterministic run of a scenario under one seed

    Args:
        scenario: Validated scenario
        seed: Master seed
        arch_mode: Override the scenario's architecture
        overrides: Highest-priority config overrides
        config: A resolved config (skips layering when given)

    Example:
        log = Simulation(load_scenario("paramedic_five_rights"), seed=42).run()
    """

    def __init__(
        self,
        scenario: Scenario,
        seed: int,
        arch_mode: Optional[ArchMode] = None,
        overrides: Optional[Mapping] = None,
        config: Optional[SimConfig] = None,
    ):
        if arch_mode is not None:
            scenario = scenario.with_arch_mode(ArchMode(arch_mode))
        self.scenario = scenario
        self.seed = seed
        self.arch_mode = scenario.arch_mode
        self.config = config or scenario.sim_config(overrides)

        self.engine = EventEngine(scenario.scenario_id, seed)
        self.lifecycle = LifecycleManager(self.engine, self.config)
        self.lifecycle.on_replacement = self._on_replacement
        self.registry = ServiceRegistry(self.config.offerings, self.config, self.engine, self.lifecycle)
        self.catalog = {m.agent_id: m for m in self.registry.catalog}
        self.devices: Dict[str, DeviceRuntime] = {}

        for spec in scenario.devices:
            trajectory = spec.trajectory()
            start = trajectory.position(0.0)
            state = DeviceState(
                device_id=spec.device_id,
                memory_capacity=spec.memory_bytes,
                position=start,
                battery_pct=spec.battery_pct,
                indoor=scenario.is_indoor(start),
                credential=spec.credential,
                battery_config=spec.battery or self.config.battery,
            )
            capabilities = sorted(
                {w.capability for w in scenario.workload
                 if w.device_ids is None or spec.device_id in w.device_ids},
                key=lambda c: c.value,
            )
            self.devices[spec.device_id] = DeviceRuntime(
                spec=spec, state=state, trajectory=trajectory,
                capabilities=capabilities, last_truth=start,
            )

    # ---- links ---------------------------------------------------------

    def _severed(self, t: float) -> bool:
        sever_at = self.config.network.sever_cellular_at_s
        return sever_at is not None and t >= sever_at

    def _cellular(self, position, t: float) -> LinkSample:
        if self._severed(t):
            return NO_COVERAGE
        return link_state(
            position, self.scenario.towers, t, self.engine.rng("link-fade"),
            self.config.network, indoor=self.scenario.is_indoor(position),
        )

    def best_link(self, rt: DeviceRuntime, t: float) -> LinkSample:
        """
        The device's link at time t: cellular, else (agent mode) a P2P relay
        through the nearest peer that has cellular coverage
        """
        position = rt.trajectory.position(t)
        cell = self._cellular(position, t)
        if cell.has_coverage or self.arch_mode is ArchMode.REMOTE:
            return cell

        peers = []
        for peer in self.devices.values():
            if peer is rt:
                continue
            peer_position = peer.trajectory.position(t)
            peers.append((distance(position, peer_position), peer.device_id, peer_position))

        for _d, peer_id, peer_position in sorted(peers):
            hop = p2p_link(position, peer_position, self.config.network.p2p, peer_id)
            if hop is None:
                continue
            uplink = self._cellular(peer_position, t)
            if uplink.has_coverage:
                return relay_link(hop, uplink)
        return cell

    def _sync_position(self, rt: DeviceRuntime) -> None:
        position = rt.trajectory.position(self.engine.clock)
        rt.state.position = position
        rt.state.indoor = self.scenario.is_indoor(position)

    # ---- setup ---------------------------------------------------------

    def _tick(self, action: str, subject: str, at: float, handler) -> None:
        self.engine.schedule("tick", subject, {"action": action}, at=at, handler=handler)

    def _preinstall(self, rt: DeviceRuntime) -> None:
        for entry in rt.spec.preinstalled:
            manifest = self.catalog[entry.agent_id]
            agent = InstalledAgent(manifest=manifest, state=LifecycleState.REQUESTED)
            rt.state.installed[manifest.agent_id] = agent
            self.lifecycle.transition(rt.state, agent, LifecycleEvent.BEGIN_DEPLOY, "preinstalled")
            agent.installed_at = 0.0
            self.lifecycle.transition(rt.state, agent, LifecycleEvent.INSTALLED, "preinstalled")
            if entry.activate:
                self.lifecycle.transition(rt.state, agent, LifecycleEvent.ACTIVATE, "preinstalled")

    def _needs_sensors(self, rt: DeviceRuntime) -> bool:
        localization = {ModelClass.GPS_LOC, ModelClass.PDR_LOC}
        if Capability.LOCALIZATION in rt.capabilities:
            return True
        return any(self.catalog[p.agent_id].model_class in localization for p in rt.spec.preinstalled)

    def _setup(self) -> None:
        scenario = self.scenario
        duration = scenario.duration_s
        engine_config = self.config.engine

        self.engine.emit("run-start", scenario.scenario_id, {
            "scenario_id": scenario.scenario_id,
            "seed": self.seed,
            "arch_mode": self.arch_mode.value,
            "schema_version": SCHEMA_VERSION,
            "devices": list(self.devices),
        })

        arrivals = self.engine.rng("task-arrival")
        for rt in self.devices.values():
            self._preinstall(rt)

            provision_at = self.config.registry.provision_at_s
            if rt.capabilities and provision_at <= duration:
                self._tick("provision", rt.device_id, provision_at,
                           lambda _e, rt=rt: self._provision(rt))

            for wi, spec in enumerate(scenario.workload):
                if spec.device_ids is not None and rt.device_id not in spec.device_ids:
                    continue
                tasks = generate_tasks(
                    spec, duration, arrivals, rt.device_id, prefix=f"{rt.device_id}-w{wi}"
                )
                for task in tasks:
                    self._tick("task-arrival", task.task_id, task.time_s,
                               lambda _e, rt=rt, task=task: self._on_task(rt, task))

            if engine_config.battery_tick_s <= duration:
                self._tick("battery", rt.device_id, engine_config.battery_tick_s,
                           lambda _e, rt=rt: self._battery_tick(rt))

            if self._needs_sensors(rt) and engine_config.sensor_tick_s <= duration:
                self._tick("sensor", rt.device_id, engine_config.sensor_tick_s,
                           lambda _e, rt=rt: self._sensor_tick(rt))

            if scenario.link_probe_period_s is not None and scenario.link_probe_period_s <= duration:
                self._tick("link-probe", rt.device_id, 0.0,
                           lambda _e, rt=rt: self._link_probe(rt))

        if engine_config.sweep_period_s < duration:
            self._tick("sweep", "all", engine_config.sweep_period_s, lambda _e: self._sweep())

    # ---- provisioning --------------------------------------------------

    def _retry_provision(self, rt: DeviceRuntime) -> None:
        at = self.engine.clock + self.config.registry.provision_retry_s
        if at <= self.scenario.duration_s:
            self._tick("provision", rt.device_id, at, lambda _e: self._provision(rt))

    def _provision(self, rt: DeviceRuntime) -> None:
        """Make the device's workload capabilities servable"""
        if rt.state.depleted:
            return
        self._sync_position(rt)
        if self.arch_mode is ArchMode.REMOTE:
            self._provision_remote(rt)
        else:
            self._provision_agents(rt)

    def _provision_remote(self, rt: DeviceRuntime) -> None:
        missing = [c for c in rt.capabilities if c not in rt.endpoints_ready_at]
        for capability in missing:
            link = self.best_link(rt, self.engine.clock)
            try:
                result = self.registry.discover(
                    DiscoveryQuery(capability, rt.state.position, ArchMode.REMOTE, rt.state.credential),
                    link, device=rt.state,
                )
            except (DiscoveryTimeout, Unauthorized) as exc:
                logger.info("%s: endpoint discovery failed: %s", rt.device_id, exc)
                self._retry_provision(rt)
                return
            if result.offerings:
                rt.endpoints_ready_at[capability] = self.engine.clock + result.elapsed_s

    def _provision_agents(self, rt: DeviceRuntime) -> None:
        held = (
            LifecycleState.DEPLOYING, LifecycleState.DORMANT,
            LifecycleState.ACTIVE, LifecycleState.PAUSED,
        )
        missing = [c for c in rt.capabilities if not rt.state.agents_for(c, held)]
        for capability in missing:
            try:
                self._deploy_for(rt, capability)
            except PROVISION_ERRORS as exc:
                logger.info("%s: provisioning %s failed: %s", rt.device_id, capability.value, exc)
                self._retry_provision(rt)
                return

    def _deploy_for(self, rt: DeviceRuntime, capability: Capability) -> None:
        registry_config = self.config.registry
        link = self.best_link(rt, self.engine.clock)
        start = self.engine.clock

        if registry_config.deployment_mode == "pull":
            self.engine.emit("user-interaction", rt.device_id, {
                "device_id": rt.device_id,
                "action": f"select-agent:{capability.value}",
            })
            result = self.registry.discover(
                DiscoveryQuery(capability, rt.state.position, ArchMode.AGENT, rt.state.credential),
                link, device=rt.state,
            )
            candidates = [o.manifest for o in result.offerings]
            start += result.elapsed_s
            if result.endpoints:
                rt.endpoints_ready_at.setdefault(capability, start)
        else:
            candidates = self.registry.catalog

        manifest = plan_bundle(
            capability, link, rt.state.resources(), candidates,
            budget_s=registry_config.deploy_budget_s, verify=registry_config.verify_planner,
        )
        self.registry.deploy(manifest, rt.state, link, at=start)

    # ---- tasks ---------------------------------------------------------

    def _unserved(self, task: TaskRequest, served_by: str) -> TaskOutcome:
        return TaskOutcome(
            task_id=task.task_id, category=TaskCategory.TIMEOUT, attempts=0,
            latency_s=0.0, correct=False, served_by=served_by,
        )

    def _remote(self, rt: DeviceRuntime, task: TaskRequest) -> TaskOutcome:
        return self.registry.remote_infer(
            task, lambda t: self.best_link(rt, t), device=rt.state,
        )

    def _knows_endpoint(self, rt: DeviceRuntime, capability: Capability) -> bool:
        ready_at = rt.endpoints_ready_at.get(capability)
        return ready_at is not None and ready_at <= self.engine.clock

    def _serve(self, rt: DeviceRuntime, task: TaskRequest) -> TaskOutcome:
        if rt.state.depleted:
            return self._unserved(task, "depleted")

        if self.arch_mode is ArchMode.REMOTE:
            if not self._knows_endpoint(rt, task.capability):
                return self._unserved(task, "none")
            return self._remote(rt, task)

        agents = rt.state.agents_for(task.capability, ServingStates)
        if agents:
            agent = agents[0]
            if agent.state is LifecycleState.DORMANT:
                self.lifecycle.transition(rt.state, agent, LifecycleEvent.ACTIVATE, "on-demand")
            return run_inference(rt.state, agent.agent_id, task, self.engine.rng("inference"))

        # Legacy fallback while no onboard agent can serve.
        if self._knows_endpoint(rt, task.capability):
            return self._remote(rt, task)
        return self._unserved(task, "none")

    def _on_task(self, rt: DeviceRuntime, task: TaskRequest) -> None:
        self._sync_position(rt)
        outcome = self._serve(rt, task)
        self.engine.schedule(
            "task", task.task_id, outcome.to_payload(rt.device_id, task.capability),
            at=self.engine.clock + outcome.latency_s,
        )

    # ---- battery -------------------------------------------------------

    def _battery_tick(self, rt: DeviceRuntime) -> None:
        now = self.engine.clock
        state = rt.state
        if not state.depleted:
            step_battery(state, now - rt.last_battery_t, state.pending)
        state.pending = Activity()
        rt.last_battery_t = now

        self.engine.emit("battery", rt.device_id, {
            "device_id": rt.device_id,
            "battery_pct": state.battery_pct,
            "memory_used_bytes": state.memory_used,
        })
        if state.depleted and not rt.depleted_logged:
            rt.depleted_logged = True
            logger.info("%s battery depleted at %.0fs", rt.device_id, now)
            self.engine.emit("device-depleted", rt.device_id, {"device_id": rt.device_id})

        at = now + self.config.engine.battery_tick_s
        if at <= self.scenario.duration_s:
            self._tick("battery", rt.device_id, at, lambda _e: self._battery_tick(rt))

    # ---- sensors and localization --------------------------------------

    def _localizer(
        self,
        rt: DeviceRuntime,
        model_class: ModelClass,
        states: Tuple[LifecycleState, ...] = (LifecycleState.ACTIVE,),
    ) -> Optional[InstalledAgent]:
        for agent in rt.state.agents_for(Capability.LOCALIZATION, states):
            if agent.manifest.model_class is model_class:
                return agent
        return None

    def _report_position(
        self, rt: DeviceRuntime, agent: InstalledAgent, reading: SensorReading, reported
    ) -> None:
        state = rt.state
        self.engine.emit("sensor", rt.device_id, {
            "device_id": rt.device_id,
            "agent_id": agent.agent_id,
            "model_class": agent.manifest.model_class.value,
            "reading": reading.to_payload(),
            "reported": [reported[0], reported[1]],
            "error_m": distance(reported, state.position),
            "indoor": state.indoor,
        })

    def _pdr_seed(self, rt: DeviceRuntime) -> Pose:
        """Start dead reckoning at the last good fix and replay IMU steps since"""
        fix = rt.last_good_fix
        if fix is None:
            pose = Pose(rt.state.position[0], rt.state.position[1], rt.state.heading)
        else:
            pose = Pose(fix.x, fix.y, rt.state.heading)
        for step in rt.imu_since_fix:
            pose = pdr_update(pose, step)
        return pose

    def _sensor_tick(self, rt: DeviceRuntime) -> None:
        now = self.engine.clock
        state = rt.state
        tick_s = self.config.engine.sensor_tick_s

        observed = (LifecycleState.ACTIVE, LifecycleState.PAUSED)
        gps_agent = self._localizer(rt, ModelClass.GPS_LOC, observed)
        pdr_agent = self._localizer(rt, ModelClass.PDR_LOC)

        if not state.depleted and (gps_agent is not None or pdr_agent is not None):
            previous = rt.last_truth
            self._sync_position(rt)
            stride = distance(previous, state.position)
            if stride > 0:
                state.heading = math.atan2(
                    state.position[1] - previous[1], state.position[0] - previous[0]
                )

            sensors = self.config.sensors
            fix = sensor_sample(state, now, self.engine.rng("gps-noise"), sensors, GPS_FIX)
            step = sensor_sample(state, now, self.engine.rng("imu-noise"), sensors, IMU_STEP, stride)

            if gps_agent is not None:
                # a Paused agent reports nothing but is still judged
                if gps_agent.state is LifecycleState.ACTIVE:
                    self._report_position(rt, gps_agent, fix, (fix.x, fix.y))
                self.lifecycle.observe(state, gps_agent, fix)

            if pdr_agent is not None:
                if rt.pdr_pose is None:
                    rt.pdr_pose = self._pdr_seed(rt)
                rt.pdr_pose = pdr_update(rt.pdr_pose, step)
                self._report_position(rt, pdr_agent, step, rt.pdr_pose.position)

            if fix.error_estimate_m <= self.config.lifecycle.gps_error_max_m:
                rt.last_good_fix = fix
                rt.imu_since_fix = []
            else:
                rt.imu_since_fix.append(step)

        rt.last_truth = rt.trajectory.position(now)
        at = now + tick_s
        if at <= self.scenario.duration_s:
            self._tick("sensor", rt.device_id, at, lambda _e: self._sensor_tick(rt))

    def _on_replacement(self, request: ReplacementRequest) -> None:
        rt = self.devices[request.device_id]
        self._sync_position(rt)
        link = self.best_link(rt, self.engine.clock)
        try:
            self.lifecycle.request_replacement(request, self.registry, link, rt.state)
        except EdgeSwarmError:
            # Requester stays Paused; the pending flag is clear for the next verdict.
            return
        rt.pdr_pose = None

    # ---- link probes ---------------------------------------------------

    def _link_probe(self, rt: DeviceRuntime) -> None:
        now = self.engine.clock
        link = self.best_link(rt, now)
        payload = {"device_id": rt.device_id}
        payload.update(link.to_payload())
        self.engine.emit("link", rt.device_id, payload)

        at = now + self.scenario.link_probe_period_s
        if at <= self.scenario.duration_s:
            self._tick("link-probe", rt.device_id, at, lambda _e: self._link_probe(rt))

    # ---- apoptosis -----------------------------------------------------

    def _sweep(self, end_of_emergency: bool = False) -> None:
        now = self.engine.clock
        for rt in self.devices.values():
            self.lifecycle.expire_sweep(rt.state, now, end_of_emergency=end_of_emergency)

        if end_of_emergency:
            return
        at = now + self.config.engine.sweep_period_s
        if at < self.scenario.duration_s:
            self._tick("sweep", "all", at, lambda _e: self._sweep())

    # ---- run -----------------------------------------------------------

    def run(self) -> EventLog:
        """
        Run the scenario to its duration, then the end-of-emergency sweep

        Returns:
            The complete EventLog
        """
        duration = self.scenario.duration_s
        logger.info("Running %s (%s, seed %d) for %.0fs",
                    self.scenario.scenario_id, self.arch_mode.value, self.seed, duration)

        self._setup()
        self.engine.run_until(duration)
        self._tick("sweep", "all", duration, lambda _e: self._sweep(end_of_emergency=True))
        log = self.engine.run_until(duration)

        logger.info("Finished %s: %d events", self.scenario.scenario_id, len(log))
        return log


def run_scenario(
    scenario: Scenario,
    seed: int,
    arch_mode: Optional[ArchMode] = None,
    overrides: Optional[Mapping] = None,
) -> EventLog:
    """Convenience wrapper: build a Simulation and run it"""
    return Simulation(scenario, seed, arch_mode=arch_mode, overrides=overrides).run()
