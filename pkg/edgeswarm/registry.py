"""
File: edgeswarm/registry.py
5G service-based-architecture registry: discovery, remote inference,
bundle planning and the two-round-trip agent deployment
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

from .config import SimConfig
from .device import DeviceResources, DeviceState, InstalledAgent, TaskOutcome, TaskRequest
from .engine import EventEngine
from .exceptions import (
    AgentAlreadyInstalled,
    DiscoveryTimeout,
    InsufficientMemory,
    NoConnectivity,
    NoFeasibleBundle,
    PlannerInvariantError,
    TransferFailed,
    Unauthorized,
)
from .lifecycle import LifecycleEvent, LifecycleManager
from .messages import MessageBuilder, message_size
from .models import (
    AgentManifest,
    ArchMode,
    Capability,
    LifecycleState,
    ModelClass,
    OfferingMode,
    RetryPolicy,
    ServiceOffering,
    TaskCategory,
)
from .network import Delivery, LinkSample, deliver, transfer_time

logger = logging.getLogger(__name__)

LinkSource = Union[LinkSample, Callable[[float], LinkSample]]


@dataclass(frozen=True)
class DiscoveryQuery:
    capability: Capability
    position: Tuple[float, float]
    arch_mode: ArchMode
    credential: bool = True


@dataclass(frozen=True)
class DiscoveryResult:
    """Offerings returned by a discovery exchange, with its cost"""

    offerings: List[ServiceOffering]
    elapsed_s: float
    attempts: int
    endpoints: List[ServiceOffering] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.offerings)

    def __iter__(self):
        return iter(self.offerings)


@dataclass(frozen=True)
class DeploymentRecord:
    """
    Outcome of one deployment

    ``round_trips`` counts completed logical exchanges (at most 2);
    retransmitted attempts are counted separately.
    """

    agent_id: str
    device_id: str
    round_trips: int
    transfer_seconds: float
    outcome: str
    reason: Optional[str] = None
    retransmissions: int = 0
    started_at: float = 0.0

    def __post_init__(self):
        if self.outcome not in ("installed", "failed"):
            raise ValueError(f"unknown deployment outcome {self.outcome!r}")
        if self.outcome == "installed" and self.round_trips > 2:
            raise ValueError("a successful deployment takes at most two round trips")

    @property
    def completes_at(self) -> float:
        return self.started_at + self.transfer_seconds

    def to_payload(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "device_id": self.device_id,
            "round_trips": self.round_trips,
            "retransmissions": self.retransmissions,
            "transfer_s": self.transfer_seconds,
            "outcome": self.outcome,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class _Exchange:
    ok: bool
    finished_at: float
    attempts: int


# ============================================
# Bundle planning
# ============================================

def is_feasible(
    manifest: AgentManifest,
    link: LinkSample,
    resources: DeviceResources,
    budget_s: float,
) -> bool:
    """A bundle fits in free memory and transfers within the budget"""
    if manifest.memory_footprint > resources.free_memory_bytes:
        return False
    if not link.has_coverage:
        return False
    return transfer_time(manifest.payload_size, link) <= budget_s


def _rank(manifest: AgentManifest) -> tuple:
    return (-manifest.accuracy, manifest.payload_size, manifest.agent_id)


def brute_force_plan(
    capability: Capability,
    link: LinkSample,
    resources: DeviceResources,
    catalog: Iterable[AgentManifest],
    budget_s: float,
    exclude: Sequence[ModelClass] = (),
) -> Optional[AgentManifest]:
    """Best feasible bundle by exhaustive comparison; None if none is feasible"""
    feasible = [
        m for m in catalog
        if m.capability is capability
        and m.model_class not in exclude
        and is_feasible(m, link, resources, budget_s)
    ]
    if not feasible:
        return None
    return min(feasible, key=_rank)


def plan_bundle(
    capability: Capability,
    link: LinkSample,
    resources: DeviceResources,
    catalog: Iterable[AgentManifest],
    budget_s: float = 120.0,
    exclude: Sequence[ModelClass] = (),
    verify: bool = False,
) -> AgentManifest:
    """
    Choose the highest-accuracy bundle deployable under the current link

    Candidates are walked in accuracy order (ties: smaller payload, then
    agent id); the first one that fits in memory and transfers within
    ``budget_s`` wins.

    Args:
        capability: Capability to serve
        link: Current link sample
        resources: Device free memory
        catalog: Candidate manifests
        budget_s: Deployment time budget in seconds
        exclude: Model classes not to consider
        verify: Cross-check the choice against an exhaustive search

    Returns:
        The chosen manifest

    Raises:
        NoConnectivity: If the link has no coverage
        NoFeasibleBundle: If no candidate is feasible
        PlannerInvariantError: If ``verify`` is set and the searches disagree
    """
    if not link.has_coverage:
        raise NoConnectivity("no link to fetch a bundle over")

    catalog = list(catalog)
    candidates = sorted(
        (m for m in catalog if m.capability is capability and m.model_class not in exclude),
        key=_rank,
    )
    chosen = next(
        (m for m in candidates if is_feasible(m, link, resources, budget_s)), None
    )

    if verify:
        expected = brute_force_plan(capability, link, resources, catalog, budget_s, exclude)
        if expected != chosen:
            raise PlannerInvariantError(
                f"planner chose {chosen and chosen.agent_id}, "
                f"exhaustive search chose {expected and expected.agent_id}"
            )

    if chosen is None:
        raise NoFeasibleBundle(
            f"{capability.value}: none of {len(candidates)} bundles fits "
            f"{resources.free_memory_bytes} free bytes within {budget_s}s"
        )
    return chosen


# ============================================
# Registry
# ============================================

class ServiceRegistry:
    """
    The operator's network-function registry

    Every message attempt is recorded in the event log at its send time and
    its bytes are charged to the device's radio budget.

    Args:
        offerings: Registered offerings
        config: Simulation configuration
        engine: Event engine supplying the clock, streams and log
        lifecycle: Lifecycle manager applying deployment transitions

    Example:
        registry = ServiceRegistry(config.offerings, config, engine, lifecycle)
        result = registry.discover(query, link, device)
    """

    def __init__(
        self,
        offerings: Iterable[ServiceOffering],
        config: SimConfig,
        engine: EventEngine,
        lifecycle: LifecycleManager,
    ):
        self.offerings = list(offerings)
        self.config = config
        self.engine = engine
        self.lifecycle = lifecycle
        self.builder = MessageBuilder()
        self.registry_id = config.registry.registry_id

    @property
    def catalog(self) -> List[AgentManifest]:
        return [o.manifest for o in self.offerings if o.mode is OfferingMode.DEPLOYABLE_AGENT]

    def offerings_for(self, capability: Capability, mode: OfferingMode) -> List[ServiceOffering]:
        return [o for o in self.offerings if o.capability is capability and o.mode is mode]

    # ---- messaging -----------------------------------------------------

    def _send(
        self,
        message: dict,
        extra_bytes: int,
        src: str,
        dst: str,
        link: LinkSample,
        at: float,
        device: Optional[DeviceState],
        lossy: bool = True,
    ) -> Delivery:
        size = message_size(message) + extra_bytes
        if lossy:
            delivery = deliver(size, link, at, self.engine.rng("link-loss"))
        elif link.has_coverage:
            delivery = Delivery(True, at, at + transfer_time(size, link), size)
        else:
            delivery = Delivery(False, at, None, size)
        self.engine.schedule("message", src, {
            "message": message["type"],
            "src": src,
            "dst": dst,
            "bytes": size,
            "delivered": delivery.delivered,
            "link": link.serving_tower,
        }, at=at)
        if device is not None:
            device.pending.radio_bytes += size
        return delivery

    def _round_trip(
        self,
        device_id: str,
        request: dict,
        request_extra: int,
        response: dict,
        response_extra: int,
        link_at: Callable[[float], LinkSample],
        start: float,
        policy: RetryPolicy,
        device: Optional[DeviceState],
        server_s: float = 0.0,
    ) -> _Exchange:
        """
        Request/response with a per-attempt timeout and bounded retries

        One loss draw per attempt, taken on the request; the response leg
        costs time and bytes but is never lost on its own.
        """
        t = start
        attempt = 0
        timeout = policy.attempt_timeout_s
        for attempt in range(1, policy.max_attempts + 1):
            link = link_at(t)
            expected = None
            if link.has_coverage:
                expected = (
                    transfer_time(message_size(request) + request_extra, link)
                    + server_s
                    + transfer_time(message_size(response) + response_extra, link)
                )
            timeout = policy.timeout_for(expected)
            up = self._send(request, request_extra, device_id, self.registry_id, link, t, device)
            if up.delivered:
                ready = up.delivered_at + server_s
                down = self._send(
                    response, response_extra, self.registry_id, device_id, link, ready, device,
                    lossy=False,
                )
                if down.delivered and down.delivered_at - t <= timeout:
                    return _Exchange(True, down.delivered_at, attempt)
            if not policy.should_retry(attempt):
                break
            t += timeout + policy.backoff_s
        return _Exchange(False, t + timeout, attempt)

    def _reliable_send(
        self,
        message: dict,
        extra_bytes: int,
        src: str,
        dst: str,
        link: LinkSample,
        start: float,
        policy: RetryPolicy,
        device: Optional[DeviceState],
    ) -> _Exchange:
        """One message retransmitted until delivered; a lost attempt costs
        max(timeout, transfer time)"""
        t = start
        attempt = 0
        for attempt in range(1, policy.max_attempts + 1):
            delivery = self._send(message, extra_bytes, src, dst, link, t, device)
            if delivery.delivered:
                return _Exchange(True, delivery.delivered_at, attempt)
            cost = policy.attempt_timeout_s
            if link.has_coverage:
                expected = transfer_time(message_size(message) + extra_bytes, link)
                cost = max(policy.timeout_for(expected), expected)
            t += cost + policy.backoff_s
        return _Exchange(False, t, attempt)

    # ---- discovery -----------------------------------------------------

    def discover(
        self,
        query: DiscoveryQuery,
        link: LinkSample,
        device: Optional[DeviceState] = None,
        at: Optional[float] = None,
    ) -> DiscoveryResult:
        """
        Look up offerings for a capability

        Remote mode returns endpoints; agent mode returns the deployable
        agents whose bundles fit the device and the current link.

        Raises:
            Unauthorized: If the query carries no valid credential
            DiscoveryTimeout: If no response arrives within the retry policy
        """
        device_id = device.device_id if device is not None else "unknown"
        start = self.engine.clock if at is None else at

        if not query.credential:
            raise Unauthorized(f"{device_id}: discovery rejected, no credential")

        legacy: List[ServiceOffering] = []
        if query.arch_mode is ArchMode.REMOTE:
            found = self.offerings_for(query.capability, OfferingMode.REMOTE_SERVICE)
        else:
            found = self.offerings_for(query.capability, OfferingMode.DEPLOYABLE_AGENT)
            if device is not None:
                resources = device.resources()
                budget = self.config.registry.deploy_budget_s
                found = [o for o in found if is_feasible(o.manifest, link, resources, budget)]
            # legacy endpoints ride along for the fallback path
            legacy = self.offerings_for(query.capability, OfferingMode.REMOTE_SERVICE)

        request = self.builder.discover_request(
            query.capability.value, query.position, query.arch_mode.value, query.credential
        )
        response = self.builder.discover_response(found + legacy)
        exchange = self._round_trip(
            device_id, request, 0, response, 0,
            lambda _t: link, start, self.config.registry.discovery_retry, device,
        )

        self.engine.schedule("discovery", device_id, {
            "device_id": device_id,
            "capability": query.capability.value,
            "arch_mode": query.arch_mode.value,
            "offerings": [o.offering_id for o in found] if exchange.ok else [],
            "outcome": "ok" if exchange.ok else "timeout",
            "attempts": exchange.attempts,
        }, at=exchange.finished_at)

        if not exchange.ok:
            raise DiscoveryTimeout(
                f"{device_id}: no discovery response after {exchange.attempts} attempts",
                finished_at=exchange.finished_at,
            )
        return DiscoveryResult(
            offerings=found, elapsed_s=exchange.finished_at - start, attempts=exchange.attempts,
            endpoints=found if query.arch_mode is ArchMode.REMOTE else legacy,
        )

    # ---- remote inference ----------------------------------------------

    def remote_infer(
        self,
        task: TaskRequest,
        link: LinkSource,
        device: Optional[DeviceState] = None,
        policy: Optional[RetryPolicy] = None,
        at: Optional[float] = None,
    ) -> TaskOutcome:
        """
        Serve a task by uploading its image to a backend endpoint

        Each attempt uploads the image, waits for backend compute and
        downloads the response; an attempt succeeds only if the response
        lands within the attempt timeout. Latency includes the timeouts of
        failed attempts.

        Args:
            task: The task
            link: A link sample, or a callable giving the sample at a time
            device: Device whose radio budget pays for the bytes
            policy: Retry policy (default: registry remote policy)
            at: Virtual start time (default: clock)

        Returns:
            TaskOutcome categorized first-try, retried, unacceptable or timeout
        """
        policy = policy or self.config.registry.remote_retry
        link_at = link if callable(link) else (lambda _t: link)
        start = self.engine.clock if at is None else at

        endpoints = self.offerings_for(task.capability, OfferingMode.REMOTE_SERVICE)
        if not endpoints:
            return TaskOutcome(
                task_id=task.task_id, category=TaskCategory.TIMEOUT, attempts=0,
                latency_s=0.0, correct=False, served_by="none",
            )
        offering = endpoints[0]

        request = self.builder.infer_request(task.task_id, task.capability.value, task.payload_bytes)
        response = self.builder.infer_response(task.task_id, offering.offering_id)
        exchange = self._round_trip(
            task.device_id, request, task.payload_bytes,
            response, offering.endpoint.response_bytes,
            link_at, start, policy, device,
            server_s=self.config.compute_seconds(task.capability),
        )

        latency = exchange.finished_at - start
        if not exchange.ok:
            return TaskOutcome(
                task_id=task.task_id, category=TaskCategory.TIMEOUT,
                attempts=exchange.attempts, latency_s=latency, correct=False,
                served_by=f"remote:{offering.offering_id}",
            )

        if latency > task.acceptable_latency_s:
            category = TaskCategory.UNACCEPTABLE
        elif exchange.attempts == 1:
            category = TaskCategory.FIRST_TRY
        else:
            category = TaskCategory.RETRIED
        correct = self.engine.rng("inference").random() < offering.endpoint.accuracy
        return TaskOutcome(
            task_id=task.task_id, category=category, attempts=exchange.attempts,
            latency_s=latency, correct=correct, served_by=f"remote:{offering.offering_id}",
        )

    # ---- deployment ----------------------------------------------------

    def deploy(
        self,
        manifest: AgentManifest,
        device: DeviceState,
        link: LinkSample,
        at: Optional[float] = None,
        on_installed: Optional[Callable[[InstalledAgent], None]] = None,
    ) -> DeploymentRecord:
        """
        Deploy an agent in two logical round trips

        Round trip one is DeployRequest then Manifest; round trip two is the
        Bundle (carrying the payload) then DeployAck. Each message is
        retransmitted under the deploy retry policy. Memory is reserved when
        the agent enters Deploying; the agent reaches Dormant when the
        transfer completes in virtual time, and ``on_installed`` is called then.

        Raises:
            AgentAlreadyInstalled: If the agent is already on the device
            InsufficientMemory: If the footprint does not fit; device unchanged
            TransferFailed: If a message exhausts its retries; the agent is
                uninstalled and ``exc.record`` holds the failed record
        """
        start = self.engine.clock if at is None else at
        agent_id = manifest.agent_id
        device_id = device.device_id

        if agent_id in device.installed:
            raise AgentAlreadyInstalled(f"{device_id}: {agent_id} already present")
        if manifest.memory_footprint > device.free_memory:
            raise InsufficientMemory(
                f"{device_id}: {agent_id} needs {manifest.memory_footprint} bytes, "
                f"{device.free_memory} free"
            )

        agent = InstalledAgent(manifest=manifest, state=LifecycleState.REQUESTED)
        device.installed[agent_id] = agent
        self.lifecycle.transition(device, agent, LifecycleEvent.BEGIN_DEPLOY, "deploy")

        policy = self.config.registry.deploy_retry
        legs = (
            (self.builder.deploy_request(agent_id, device_id), 0, device_id, self.registry_id),
            (self.builder.manifest_message(manifest), 0, self.registry_id, device_id),
            (self.builder.bundle_message(manifest), manifest.payload_size,
             self.registry_id, device_id),
            (self.builder.deploy_ack("installed"), 0, device_id, self.registry_id),
        )

        t = start
        retransmissions = 0
        completed_messages = 0
        failure = None
        for message, extra, src, dst in legs:
            sent = self._reliable_send(message, extra, src, dst, link, t, policy, device)
            retransmissions += sent.attempts - 1
            t = sent.finished_at
            if not sent.ok:
                failure = f"{message['type']} lost after {sent.attempts} attempts"
                break
            completed_messages += 1

        record = DeploymentRecord(
            agent_id=agent_id,
            device_id=device_id,
            round_trips=completed_messages // 2,
            transfer_seconds=t - start,
            outcome="failed" if failure else "installed",
            reason=failure,
            retransmissions=retransmissions,
            started_at=start,
        )

        if failure:
            self.lifecycle.transition(device, agent, LifecycleEvent.TRANSFER_FAILED, "transfer-failed")
            self.engine.schedule("deploy", agent_id, record.to_payload(), at=t)
            logger.warning("Deployment of %s to %s failed: %s", agent_id, device_id, failure)
            raise TransferFailed(f"{device_id}: {agent_id}: {failure}", record=record)

        def complete(_event):
            if agent.state is not LifecycleState.DEPLOYING:
                return
            agent.installed_at = self.engine.clock
            self.lifecycle.transition(device, agent, LifecycleEvent.INSTALLED, "installed")
            if on_installed is not None:
                on_installed(agent)

        self.engine.schedule("deploy", agent_id, record.to_payload(), at=t, handler=complete)
        logger.info("Deploying %s to %s: %.2fs, %d retransmissions",
                    agent_id, device_id, record.transfer_seconds, retransmissions)
        return record
