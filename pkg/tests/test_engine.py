"""
Tests for the event engine, random streams and the event log
"""

import json

import pytest

from edgeswarm.engine import EventEngine, EventLog, RngStream, RngStreams, SimEvent
from edgeswarm.exceptions import MalformedLog, SchedulingInPast, UnknownStream


def _tick(engine, at, action="probe", handler=None):
    return engine.schedule("tick", "clock", {"action": action}, at=at, handler=handler)


def test_events_processed_in_time_then_seq_order():
    """Events come out by time, then by scheduling order"""
    engine = EventEngine("order", master_seed=1)
    _tick(engine, 5.0, "c")
    _tick(engine, 1.0, "a")
    _tick(engine, 1.0, "b")

    log = engine.run_until(10.0)

    assert [e.payload["action"] for e in log] == ["a", "b", "c"]
    assert [e.seq for e in log] == [1, 2, 0]
    assert [e.time_us for e in log] == [1_000_000, 1_000_000, 5_000_000]


def test_run_until_leaves_clock_at_end():
    """An empty queue still advances the clock to t_end"""
    engine = EventEngine()
    engine.run_until(10.0)
    assert engine.clock == 10.0


def test_events_after_end_stay_queued():
    """Events past t_end wait for the next run_until"""
    engine = EventEngine()
    _tick(engine, 3.0)
    _tick(engine, 30.0)

    log = engine.run_until(10.0)

    assert len(log) == 1
    assert engine.pending() == 1
    engine.run_until(30.0)
    assert len(engine.log) == 2


def test_scheduling_in_past_rejected():
    """Neither events nor run_until may go back in time"""
    engine = EventEngine()
    engine.run_until(5.0)

    with pytest.raises(SchedulingInPast):
        _tick(engine, 4.999)
    with pytest.raises(SchedulingInPast):
        engine.run_until(4.0)


def test_handler_follow_up_at_same_instant_runs_after():
    """A handler's emit lands at the same time with a larger seq"""
    engine = EventEngine()
    seen = []

    def handler(event):
        seen.append(event.payload["action"])
        if event.payload["action"] == "first":
            engine.emit("tick", "clock", {"action": "follow-up"})

    _tick(engine, 2.0, "first", handler)
    _tick(engine, 2.0, "second", handler)
    log = engine.run_until(2.0)

    assert seen == ["first", "second"]
    assert [e.payload["action"] for e in log] == ["first", "second", "follow-up"]
    assert log.entries[-1].time_s == 2.0


def test_payload_contract_enforced():
    """Unknown kinds and missing payload keys are rejected at scheduling"""
    engine = EventEngine()
    with pytest.raises(ValueError):
        engine.schedule("bogus", "x", {})
    with pytest.raises(ValueError):
        engine.schedule("battery", "dev-1", {"device_id": "dev-1"})


def test_negative_seed_rejected():
    """Seeds are non-negative integers"""
    with pytest.raises(ValueError):
        RngStream("link-fade", -1)


def test_same_seed_same_sequence():
    """A stream is a pure function of (seed, name)"""
    a = RngStreams(42)
    b = RngStreams(42)
    c = RngStreams(43)

    draws_a = [a.next("link-loss") for _ in range(5)]
    draws_b = [b.next("link-loss") for _ in range(5)]
    draws_c = [c.next("link-loss") for _ in range(5)]

    assert draws_a == draws_b
    assert draws_a != draws_c
    assert all(0.0 <= d < 1.0 for d in draws_a)


def test_streams_do_not_perturb_each_other():
    """Registering and drawing another stream leaves a stream's sequence alone"""
    plain = RngStreams(9)
    busy = RngStreams(9)
    busy.register("extra")
    for _ in range(100):
        busy.next("extra")
        busy.next("gps-noise")

    assert [plain.next("inference") for _ in range(10)] == [busy.next("inference") for _ in range(10)]
    assert busy.get("gps-noise").draw_count == 100


def test_unknown_stream():
    """Unregistered stream names raise UnknownStream"""
    with pytest.raises(UnknownStream):
        RngStreams(1).next("weather")


def test_log_serialization_is_stable():
    """dumps(loads(dumps(log))) is byte-identical and keeps run metadata"""
    engine = EventEngine("stable", master_seed=5)
    engine.schedule("run-start", "stable", {
        "scenario_id": "stable", "seed": 5, "arch_mode": "agent",
        "schema_version": 1, "devices": ["dev-1"],
    })
    engine.schedule("battery", "dev-1", {
        "device_id": "dev-1", "battery_pct": 99.5, "memory_used_bytes": 0,
    }, at=60.0)
    text = engine.run_until(60.0).dumps()

    parsed = EventLog.loads(text)

    assert parsed.dumps() == text
    assert parsed.scenario_id == "stable"
    assert parsed.master_seed == 5
    assert text.endswith("\n") and text.count("\n") == 2


def test_loads_rejects_malformed_lines():
    """Invalid JSON, missing fields and disorder raise MalformedLog"""
    good = SimEvent(2, 0, "tick", "x", {"action": "a"}).to_dict()
    earlier = SimEvent(1, 1, "tick", "x", {"action": "b"}).to_dict()
    with pytest.raises(MalformedLog):
        EventLog.loads("{not json\n")
    with pytest.raises(MalformedLog):
        EventLog.loads(json.dumps({"time_us": 1}) + "\n")
    with pytest.raises(MalformedLog):
        EventLog.loads(json.dumps(good) + "\n" + json.dumps(earlier) + "\n")


def test_append_requires_strict_order():
    """The log never accepts an entry at or before the last (time, seq)"""
    log = EventLog()
    log.append(SimEvent(5, 3, "tick", "x"))
    with pytest.raises(ValueError):
        log.append(SimEvent(5, 3, "tick", "x"))
    log.append(SimEvent(5, 4, "tick", "x"))
    assert len(log) == 2
