"""
File: edgeswarm/lifecycle.py
Agent lifecycle: dormancy, activation, sensor-driven pause,
autonomous replacement requests and expiry/self-uninstall
"""

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import TYPE_CHECKING, Callable, Deque, Dict, List, Optional, Sequence, Tuple

from .config import SimConfig
from .device import DeviceState, InstalledAgent, SensorReading
from .engine import EventEngine
from .exceptions import (
    DiscoveryTimeout,
    EdgeSwarmError,
    IllegalTransition,
    NoConnectivity,
    ReplacementError,
    TransferFailed,
)
from .models import (
    MEMORY_HOLDING_STATES,
    ArchMode,
    Capability,
    LifecycleState,
    ModelClass,
)

if TYPE_CHECKING:
    from .network import LinkSample
    from .registry import DeploymentRecord, ServiceRegistry

logger = logging.getLogger(__name__)


class LifecycleEvent(str, Enum):
    BEGIN_DEPLOY = "begin-deploy"
    INSTALLED = "installed"
    ACTIVATE = "activate"
    PAUSE = "pause"
    RESUME = "resume"
    EXPIRE = "expire"
    UNINSTALL = "uninstall"
    TRANSFER_FAILED = "transfer-failed"


S = LifecycleState
E = LifecycleEvent

TRANSITIONS = MappingProxyType({
    (S.REQUESTED, E.BEGIN_DEPLOY): S.DEPLOYING,
    (S.DEPLOYING, E.INSTALLED): S.DORMANT,
    (S.DEPLOYING, E.TRANSFER_FAILED): S.UNINSTALLED,
    (S.DORMANT, E.ACTIVATE): S.ACTIVE,
    (S.ACTIVE, E.PAUSE): S.PAUSED,
    (S.PAUSED, E.RESUME): S.ACTIVE,
    (S.ACTIVE, E.EXPIRE): S.EXPIRED,
    (S.PAUSED, E.EXPIRE): S.EXPIRED,
    (S.DORMANT, E.EXPIRE): S.EXPIRED,
    (S.EXPIRED, E.UNINSTALL): S.UNINSTALLED,
})


@dataclass(frozen=True)
class SensorQualityVerdict:
    verdict: str
    consecutive_bad: int
    metric: float

    @property
    def degraded(self) -> bool:
        return self.verdict == "degraded"


@dataclass(frozen=True)
class ReplacementRequest:
    requesting_agent_id: str
    device_id: str
    desired_capability: Capability
    reason: str
    user_interaction: bool = False
    exclude_model_classes: Tuple[ModelClass, ...] = ()

    def to_payload(self, outcome: str) -> dict:
        return {
            "requesting_agent_id": self.requesting_agent_id,
            "device_id": self.device_id,
            "desired_capability": self.desired_capability.value,
            "reason": self.reason,
            "user_interaction": self.user_interaction,
            "outcome": outcome,
        }


def assess_readings(
    readings: Sequence[SensorReading],
    error_max_m: float,
    n_bad: int,
) -> SensorQualityVerdict:
    """
    Judge a window of GPS fixes

    A fix is bad when its error estimate exceeds ``error_max_m``; the
    verdict is degraded iff the trailing ``n_bad`` fixes are all bad.
    """
    if not readings:
        raise ValueError("window must hold at least one reading")

    bad = 0
    for reading in reversed(readings):
        if reading.error_estimate_m > error_max_m:
            bad += 1
        else:
            break

    return SensorQualityVerdict(
        verdict="degraded" if bad >= n_bad else "ok",
        consecutive_bad=bad,
        metric=readings[-1].error_estimate_m,
    )


class LifecycleManager:
    """
    Owns every lifecycle mutation and records it in the event log

    ``on_replacement`` is invoked (as an event at the same virtual instant)
    with each ReplacementRequest a degraded verdict produces.
    """

    def __init__(self, engine: EventEngine, config: SimConfig):
        self.engine = engine
        self.config = config
        self.on_replacement: Optional[Callable[[ReplacementRequest], None]] = None
        self._windows: Dict[Tuple[str, str], Deque[SensorReading]] = {}
        self._pending: Dict[Tuple[str, str], bool] = {}

    def transition(
        self,
        device: DeviceState,
        agent: InstalledAgent,
        event: LifecycleEvent,
        reason: str = "",
    ) -> LifecycleState:
        """
        Apply a lifecycle event to an agent

        Entering Deploying charges the footprint, entering Active starts the
        TTL clock (first activation only), entering Uninstalled frees memory
        and drops the agent from the ledger.

        Raises:
            IllegalTransition: If the edge is not in the transition table
            InsufficientMemory: If Deploying cannot reserve the footprint
        """
        source = agent.state
        target = TRANSITIONS.get((source, event))
        if target is None:
            raise IllegalTransition(
                f"{agent.agent_id}: no edge {source.value} --{event.value}-->"
            )

        if target is S.DEPLOYING:
            device.charge_memory(agent.manifest)

        agent.state = target
        if target is S.ACTIVE and agent.activated_at is None:
            agent.activated_at = self.engine.clock
        if target is S.UNINSTALLED:
            if source in MEMORY_HOLDING_STATES:
                device.release_memory(agent.manifest)
            if device.installed.get(agent.agent_id) is agent:
                del device.installed[agent.agent_id]
            self._windows.pop((device.device_id, agent.agent_id), None)
            self._pending.pop((device.device_id, agent.agent_id), None)

        self.engine.emit("lifecycle", agent.agent_id, {
            "agent_id": agent.agent_id,
            "device_id": device.device_id,
            "from": source.value,
            "to": target.value,
            "reason": reason or event.value,
        })
        logger.debug("%s/%s: %s -> %s (%s)", device.device_id, agent.agent_id,
                     source.value, target.value, reason or event.value)
        return target

    # ---- sensor-driven pause -------------------------------------------

    def monitor_sensor(
        self,
        device: DeviceState,
        agent: InstalledAgent,
        readings: Sequence[SensorReading],
    ) -> SensorQualityVerdict:
        """
        Assess a reading window; a degraded verdict pauses the agent and
        issues a ReplacementRequest at the same instant

        Only GPS-LOC agents are judged; other agents always report ok. A
        Paused GPS-LOC agent is still judged: a degraded verdict re-issues
        the request unless one is in flight, without another transition.
        """
        if agent.state not in (S.ACTIVE, S.PAUSED):
            raise IllegalTransition(f"{agent.agent_id} is {agent.state.value}, not Active or Paused")

        if agent.manifest.model_class is not ModelClass.GPS_LOC:
            return SensorQualityVerdict("ok", 0, readings[-1].error_estimate_m if readings else 0.0)

        verdict = assess_readings(
            readings, self.config.lifecycle.gps_error_max_m, self.config.lifecycle.n_bad
        )
        if verdict.degraded:
            if agent.state is S.ACTIVE:
                self.transition(device, agent, E.PAUSE, "sensor-degraded")
            self.issue_replacement(device, agent, "gps-degraded", (ModelClass.GPS_LOC,))
        return verdict

    def observe(
        self,
        device: DeviceState,
        agent: InstalledAgent,
        reading: SensorReading,
    ) -> SensorQualityVerdict:
        """
        Push one reading into the agent's sliding window and monitor it

        A degraded verdict empties the window, so the next one needs a
        fresh run of bad fixes.
        """
        key = (device.device_id, agent.agent_id)
        window = self._windows.setdefault(key, deque(maxlen=self.config.lifecycle.n_bad))
        window.append(reading)
        verdict = self.monitor_sensor(device, agent, list(window))
        if verdict.degraded:
            window.clear()
        return verdict

    def issue_replacement(
        self,
        device: DeviceState,
        agent: InstalledAgent,
        reason: str,
        exclude: Tuple[ModelClass, ...] = (),
    ) -> Optional[ReplacementRequest]:
        """Queue an autonomous replacement unless one is already in flight"""
        key = (device.device_id, agent.agent_id)
        if self._pending.get(key):
            return None

        request = ReplacementRequest(
            requesting_agent_id=agent.agent_id,
            device_id=device.device_id,
            desired_capability=agent.manifest.capability,
            reason=reason,
            user_interaction=False,
            exclude_model_classes=exclude,
        )
        self._pending[key] = True

        def dispatch(_event):
            if self.on_replacement is not None:
                self.on_replacement(request)

        self.engine.schedule(
            "replacement", agent.agent_id, request.to_payload("requested"), handler=dispatch
        )
        return request

    def clear_pending(self, device_id: str, agent_id: str) -> None:
        self._pending.pop((device_id, agent_id), None)

    def request_replacement(
        self,
        request: ReplacementRequest,
        registry: "ServiceRegistry",
        link: "LinkSample",
        device: DeviceState,
    ) -> "DeploymentRecord":
        """
        Discover, plan and deploy a replacement without user interaction

        On install the replacement activates and the requester expires. On
        any failure the requester stays as it is (Paused); the failure is
        logged when it happens in virtual time (after a discovery timeout or
        a failed transfer) and the pending flag clears then, so the next
        degraded verdict retries.

        Raises:
            ReplacementError: If the request is not autonomous or the requester
                is neither Active nor Paused
            NoConnectivity, NoFeasibleBundle, DiscoveryTimeout, TransferFailed:
                Propagated from the registry
        """
        # Imported here: registry imports this module.
        from .registry import DiscoveryQuery, plan_bundle

        if request.user_interaction:
            raise ReplacementError("autonomous replacement requests must not involve the user")
        requester = device.agent(request.requesting_agent_id)
        if requester.state not in (S.ACTIVE, S.PAUSED):
            raise ReplacementError(
                f"{requester.agent_id} is {requester.state.value}; needs Active or Paused"
            )

        def finish(outcome: str, at: Optional[float] = None) -> None:
            def clear(_event):
                self.clear_pending(device.device_id, requester.agent_id)

            self.engine.schedule(
                "replacement", requester.agent_id, request.to_payload(outcome), at=at, handler=clear
            )

        failed_at = self.engine.clock
        try:
            if not link.has_coverage:
                raise NoConnectivity(f"{device.device_id}: registry unreachable")

            discovery = registry.discover(
                DiscoveryQuery(
                    capability=request.desired_capability,
                    position=device.position,
                    arch_mode=ArchMode.AGENT,
                    credential=device.credential,
                ),
                link,
                device=device,
            )
            failed_at = self.engine.clock + discovery.elapsed_s
            manifest = plan_bundle(
                request.desired_capability,
                link,
                device.resources(),
                [offering.manifest for offering in discovery.offerings],
                budget_s=self.config.registry.deploy_budget_s,
                exclude=request.exclude_model_classes,
                verify=self.config.registry.verify_planner,
            )

            def on_installed(replacement: InstalledAgent) -> None:
                self.transition(device, replacement, E.ACTIVATE, "replacement")
                if requester.state in (S.ACTIVE, S.PAUSED, S.DORMANT):
                    self.transition(device, requester, E.EXPIRE, "replaced")
                finish("installed")

            record = registry.deploy(
                manifest,
                device,
                link,
                at=self.engine.clock + discovery.elapsed_s,
                on_installed=on_installed,
            )
        except EdgeSwarmError as exc:
            if isinstance(exc, DiscoveryTimeout) and exc.finished_at is not None:
                failed_at = exc.finished_at
            elif isinstance(exc, TransferFailed) and exc.record is not None:
                failed_at = exc.record.completes_at
            logger.info("Replacement for %s/%s failed: %s",
                        device.device_id, requester.agent_id, exc)
            finish(f"failed: {type(exc).__name__}", at=failed_at)
            raise

        logger.info("Replacement %s deploying for %s/%s",
                    manifest.agent_id, device.device_id, requester.agent_id)
        return record

    # ---- apoptosis -----------------------------------------------------

    def expire_sweep(
        self,
        device: DeviceState,
        now: float,
        end_of_emergency: bool = False,
    ) -> List[str]:
        """
        Uninstall expired agents; at end of emergency, uninstall everything

        Agents whose TTL ran out (activation + ttl <= now) expire and are
        uninstalled in the same sweep. Dormant agents have no running TTL
        and survive unless the emergency is over. In-flight deployments are
        aborted at end of emergency.

        Returns:
            Uninstalled agent ids in ledger order
        """
        uninstalled = []
        for agent_id in sorted(device.installed):
            agent = device.installed[agent_id]

            if agent.state is S.DEPLOYING:
                if end_of_emergency:
                    self.transition(device, agent, E.TRANSFER_FAILED, "end-of-emergency")
                    uninstalled.append(agent_id)
                continue

            ttl_over = agent.expires_at is not None and agent.expires_at <= now
            if agent.state in (S.ACTIVE, S.PAUSED, S.DORMANT) and (ttl_over or end_of_emergency):
                self.transition(device, agent, E.EXPIRE, "ttl" if ttl_over else "end-of-emergency")

            if agent.state is S.EXPIRED:
                self.transition(device, agent, E.UNINSTALL, "apoptosis")
                uninstalled.append(agent_id)

        if uninstalled or end_of_emergency:
            self.engine.emit("sweep", device.device_id, {
                "device_id": device.device_id,
                "uninstalled": uninstalled,
                "end_of_emergency": end_of_emergency,
            })
        return uninstalled
