"""
File: edgeswarm/engine.py
Deterministic discrete-event core: virtual clock, event queue,
named random streams and the append-only event log
"""

import hashlib
import heapq
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np

from .exceptions import MalformedLog, SchedulingInPast, UnknownStream
from .utils import to_seconds, to_us

logger = logging.getLogger(__name__)

# Required payload keys per event kind; the serialized log is a public contract.
EVENT_KINDS: Dict[str, tuple] = {
    "run-start": ("scenario_id", "seed", "arch_mode", "schema_version", "devices"),
    "lifecycle": ("agent_id", "device_id", "from", "to", "reason"),
    "message": ("message", "src", "dst", "bytes", "delivered"),
    "discovery": ("device_id", "capability", "arch_mode", "offerings", "outcome"),
    "deploy": (
        "agent_id", "device_id", "round_trips", "retransmissions",
        "transfer_s", "outcome", "reason",
    ),
    "task": (
        "task_id", "device_id", "capability", "served_by",
        "category", "attempts", "latency_s", "correct",
    ),
    "sensor": (
        "device_id", "agent_id", "model_class", "reading",
        "reported", "error_m", "indoor",
    ),
    "replacement": (
        "requesting_agent_id", "device_id", "desired_capability",
        "reason", "user_interaction", "outcome",
    ),
    "battery": ("device_id", "battery_pct", "memory_used_bytes"),
    "sweep": ("device_id", "uninstalled", "end_of_emergency"),
    "link": ("device_id", "serving_tower", "rat", "snr_db", "bandwidth_bps", "loss_prob"),
    "device-depleted": ("device_id",),
    "user-interaction": ("device_id", "action"),
    "tick": (),
}

STREAM_NAMES = ("link-fade", "link-loss", "task-arrival", "inference", "gps-noise", "imu-noise")

Handler = Callable[["SimEvent"], None]


def check_payload(kind: str, payload: Dict[str, Any]) -> None:
    """Raise ValueError unless payload carries every key its kind requires"""
    required = EVENT_KINDS.get(kind)
    if required is None:
        raise ValueError(f"unknown event kind: {kind!r}")
    missing = [key for key in required if key not in payload]
    if missing:
        raise ValueError(f"{kind} payload missing {', '.join(missing)}")


@dataclass(frozen=True)
class SimEvent:
    """One entry of the event log; ordered by (time_us, seq)"""

    time_us: int
    seq: int
    kind: str
    subject: str
    payload: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.time_us < 0:
            raise ValueError(f"event time must be >= 0, got {self.time_us}")
        check_payload(self.kind, self.payload)

    @property
    def time_s(self) -> float:
        return to_seconds(self.time_us)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "time_us": self.time_us,
            "seq": self.seq,
            "kind": self.kind,
            "subject": self.subject,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SimEvent":
        return cls(
            time_us=int(data["time_us"]),
            seq=int(data["seq"]),
            kind=data["kind"],
            subject=data["subject"],
            payload=data["payload"],
        )


class RngStream:
    """
    A named, independently seeded uniform stream

    The generator is seeded from ``(master_seed, sha256(name))`` so adding a
    stream never perturbs the sequences of the others.
    """

    def __init__(self, name: str, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.name = name
        self.seed = seed
        self.draw_count = 0
        name_key = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")
        self._generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([seed, name_key]))
        )

    def random(self) -> float:
        """Uniform sample in [0, 1)"""
        self.draw_count += 1
        return float(self._generator.random())

    def normal(self, mean: float = 0.0, sigma: float = 1.0) -> float:
        self.draw_count += 1
        return float(self._generator.normal(mean, sigma))

    def uniform(self, low: float, high: float) -> float:
        self.draw_count += 1
        return float(self._generator.uniform(low, high))

    def exponential(self, scale: float) -> float:
        self.draw_count += 1
        return float(self._generator.exponential(scale))


class RngStreams:
    """Registry of the named streams of one simulation run"""

    def __init__(self, master_seed: int, names: Iterable[str] = STREAM_NAMES):
        self.master_seed = master_seed
        self._streams: Dict[str, RngStream] = {}
        for name in names:
            self.register(name)

    def register(self, name: str) -> RngStream:
        if name not in self._streams:
            self._streams[name] = RngStream(name, self.master_seed)
        return self._streams[name]

    def get(self, name: str) -> RngStream:
        try:
            return self._streams[name]
        except KeyError:
            raise UnknownStream(f"stream {name!r} is not registered") from None

    def next(self, name: str) -> float:
        """Draw the next uniform [0, 1) sample from a registered stream"""
        return self.get(name).random()


@dataclass
class EventLog:
    """Append-only, totally ordered record of a run"""

    scenario_id: str = ""
    master_seed: int = 0
    entries: List[SimEvent] = field(default_factory=list)

    def append(self, event: SimEvent) -> None:
        if self.entries:
            last = self.entries[-1]
            if (event.time_us, event.seq) <= (last.time_us, last.seq):
                raise ValueError("event log entries must be strictly increasing in (time, seq)")
        self.entries.append(event)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def of_kind(self, kind: str) -> List[SimEvent]:
        return [event for event in self.entries if event.kind == kind]

    def dumps(self) -> str:
        """Serialize as newline-delimited JSON with sorted keys"""
        return "".join(
            json.dumps(event.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
            for event in self.entries
        )

    @classmethod
    def loads(cls, text: str) -> "EventLog":
        """
        Parse a newline-delimited JSON log

        Raises:
            MalformedLog: On invalid JSON, missing fields or out-of-order entries
        """
        log = cls()
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                event = SimEvent.from_dict(json.loads(line))
                log.append(event)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedLog(f"line {line_no}: {exc}") from exc

            if event.kind == "run-start" and not log.scenario_id:
                log.scenario_id = event.payload["scenario_id"]
                log.master_seed = int(event.payload["seed"])
        return log


class EventEngine:
    """
    Single-threaded event loop over integer-microsecond virtual time

    Example:
        engine = EventEngine("demo", master_seed=42)
        engine.schedule("tick", "clock", at=1.0)
        log = engine.run_until(10.0)
    """

    def __init__(self, scenario_id: str = "", master_seed: int = 0):
        self.clock_us = 0
        self._seq = 0
        self._queue: List[tuple] = []
        self.log = EventLog(scenario_id=scenario_id, master_seed=master_seed)
        self.streams = RngStreams(master_seed)

    @property
    def clock(self) -> float:
        """Current virtual time in seconds"""
        return to_seconds(self.clock_us)

    def rng(self, name: str) -> RngStream:
        return self.streams.get(name)

    def schedule(
        self,
        kind: str,
        subject: str,
        payload: Optional[Dict[str, Any]] = None,
        at: Optional[float] = None,
        handler: Optional[Handler] = None,
    ) -> int:
        """
        Enqueue an event

        Args:
            kind: Event kind tag (see EVENT_KINDS)
            subject: Entity the event is about
            payload: Kind-specific record
            at: Virtual seconds; defaults to the current clock
            handler: Called with the event when it is dequeued

        Returns:
            The event's seq, a stable id

        Raises:
            SchedulingInPast: If ``at`` is before the current clock
        """
        at_us = self.clock_us if at is None else to_us(at)
        if at_us < self.clock_us:
            raise SchedulingInPast(
                f"cannot schedule {kind} at {to_seconds(at_us)}s, clock is {self.clock}s"
            )

        payload = dict(payload or {})
        check_payload(kind, payload)

        seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (at_us, seq, kind, subject, payload, handler))
        return seq

    def emit(self, kind: str, subject: str, payload: Dict[str, Any]) -> int:
        """Record an event at the current clock (processed after the running handler)"""
        return self.schedule(kind, subject, payload)

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t_end: float) -> EventLog:
        """
        Process every event with time <= t_end in (time, seq) order

        The clock is left at ``t_end``.

        Raises:
            SchedulingInPast: If ``t_end`` is before the current clock
        """
        end_us = to_us(t_end)
        if end_us < self.clock_us:
            raise SchedulingInPast(f"run_until({t_end}) is before clock {self.clock}")

        processed = 0
        while self._queue and self._queue[0][0] <= end_us:
            time_us, seq, kind, subject, payload, handler = heapq.heappop(self._queue)
            self.clock_us = time_us
            event = SimEvent(time_us=time_us, seq=seq, kind=kind, subject=subject, payload=payload)
            self.log.append(event)
            processed += 1
            if handler is not None:
                handler(event)

        self.clock_us = end_us
        logger.debug("run_until(%s): %d events processed", t_end, processed)
        return self.log
