"""
File: edgeswarm/metrics.py
Metrics computed from event logs and architecture comparison reports
"""

import csv
import io
import json
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .engine import EventLog
from .exceptions import MalformedLog, MismatchedRuns
from .models import TaskCategory
from .utils import format_table

logger = logging.getLogger(__name__)

TRACE_CSV_HEADER = ("t_s", "device_id", "battery_pct", "memory_used_bytes")


class _Report(BaseModel):
    model_config = ConfigDict(frozen=True)


class TaskStats(_Report):
    count: int = 0
    completed: int = 0
    first_try: float = 0.0
    retried: float = 0.0
    timeout: float = 0.0
    unacceptable: float = 0.0
    success_rate: float = 0.0
    correct_rate: float = 0.0
    latency_p50: float = 0.0
    latency_p95: float = 0.0
    latency_p99: float = 0.0

    @property
    def degraded(self) -> float:
        """Fraction retried, timed out or unacceptably slow"""
        return self.retried + self.timeout + self.unacceptable


class BatterySummary(_Report):
    time_to_50_s: Optional[float] = None
    final_pct: float = 100.0


class DeploymentStats(_Report):
    count: int = 0
    installed: int = 0
    failed: int = 0
    max_round_trips: int = 0
    mean_transfer_s: float = 0.0
    retransmissions: int = 0


class LifecycleCounts(_Report):
    installs: int = 0
    swaps: int = 0
    apoptoses: int = 0


class MetricsReport(_Report):
    """Everything a run's event log says about one architecture"""

    scenario_id: str = ""
    seed: int = 0
    arch_mode: str = ""
    tasks: TaskStats = TaskStats()
    battery: Dict[str, BatterySummary] = Field(default_factory=dict)
    deployments: DeploymentStats = DeploymentStats()
    lifecycle: LifecycleCounts = LifecycleCounts()
    user_interactions: int = 0

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


class ComparisonReport(_Report):
    """Paired reports of one scenario and seed; deltas are b - a"""

    a: MetricsReport
    b: MetricsReport
    deltas: Dict[str, float]

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        flat_a, flat_b = flatten_metrics(self.a), flatten_metrics(self.b)
        rows = [[name, flat_a.get(name), flat_b.get(name), delta] for name, delta in self.deltas.items()]
        title = (
            f"{self.a.scenario_id} seed {self.a.seed}: "
            f"{self.a.arch_mode or '-'} (a) vs {self.b.arch_mode or '-'} (b)\n"
        )
        return title + format_table(["metric", "a", "b", "delta"], rows)


# ============================================
# Collection
# ============================================

def _task_stats(log: EventLog) -> TaskStats:
    tasks = log.of_kind("task")
    if not tasks:
        return TaskStats()

    count = len(tasks)
    categories = [str(event.payload["category"]) for event in tasks]
    unknown = set(categories) - {c.value for c in TaskCategory}
    if unknown:
        raise MalformedLog(f"unknown task categories: {', '.join(sorted(unknown))}")
    fractions = {c: categories.count(c.value) / count for c in TaskCategory}

    completed = [e for e in tasks if e.payload["category"] != TaskCategory.TIMEOUT.value]
    latencies = np.array([float(e.payload["latency_s"]) for e in completed])
    if latencies.size:
        p50, p95, p99 = (float(v) for v in np.percentile(latencies, [50, 95, 99]))
        correct_rate = sum(1 for e in completed if e.payload["correct"]) / len(completed)
    else:
        p50 = p95 = p99 = correct_rate = 0.0

    return TaskStats(
        count=count,
        completed=len(completed),
        first_try=fractions[TaskCategory.FIRST_TRY],
        retried=fractions[TaskCategory.RETRIED],
        timeout=fractions[TaskCategory.TIMEOUT],
        unacceptable=fractions[TaskCategory.UNACCEPTABLE],
        success_rate=fractions[TaskCategory.FIRST_TRY] + fractions[TaskCategory.RETRIED],
        correct_rate=correct_rate,
        latency_p50=p50,
        latency_p95=p95,
        latency_p99=p99,
    )


def battery_trace(log: EventLog) -> List[Tuple[float, str, float, int]]:
    """(t_s, device_id, battery_pct, memory_used_bytes) per battery event"""
    return [
        (
            event.time_s,
            event.payload["device_id"],
            float(event.payload["battery_pct"]),
            int(event.payload["memory_used_bytes"]),
        )
        for event in log.of_kind("battery")
    ]


def _battery_summaries(log: EventLog, devices: List[str]) -> Dict[str, BatterySummary]:
    crossing: Dict[str, Optional[float]] = {d: None for d in devices}
    final: Dict[str, float] = {d: 100.0 for d in devices}
    for t, device_id, pct, _memory in battery_trace(log):
        final[device_id] = pct
        if pct <= 50.0 and crossing.get(device_id) is None:
            crossing[device_id] = t
    return {
        device_id: BatterySummary(time_to_50_s=crossing.get(device_id), final_pct=final[device_id])
        for device_id in sorted(final)
    }


def _deployment_stats(log: EventLog) -> DeploymentStats:
    deploys = log.of_kind("deploy")
    installed = [e.payload for e in deploys if e.payload["outcome"] == "installed"]
    return DeploymentStats(
        count=len(deploys),
        installed=len(installed),
        failed=len(deploys) - len(installed),
        max_round_trips=max((int(p["round_trips"]) for p in installed), default=0),
        mean_transfer_s=(
            sum(float(p["transfer_s"]) for p in installed) / len(installed) if installed else 0.0
        ),
        retransmissions=sum(int(e.payload["retransmissions"]) for e in deploys),
    )


def _lifecycle_counts(log: EventLog) -> LifecycleCounts:
    transitions = [e.payload for e in log.of_kind("lifecycle")]
    return LifecycleCounts(
        installs=sum(1 for p in transitions if p["to"] == "Dormant"),
        swaps=sum(1 for e in log.of_kind("replacement") if e.payload["outcome"] == "installed"),
        apoptoses=sum(
            1 for p in transitions
            if p["to"] == "Uninstalled" and p["reason"] in ("apoptosis", "end-of-emergency")
        ),
    )


def collect(log: EventLog) -> MetricsReport:
    """
    Compute a run's metrics from its event log

    A pure function of the log; an empty log gives a zero-count report.

    Raises:
        MalformedLog: If a non-empty log has no run-start record or a task
            record carries an unknown category
    """
    if not log.entries:
        return MetricsReport()

    starts = log.of_kind("run-start")
    if not starts:
        raise MalformedLog("log has no run-start record")
    start = starts[0].payload

    return MetricsReport(
        scenario_id=start["scenario_id"],
        seed=int(start["seed"]),
        arch_mode=start["arch_mode"],
        tasks=_task_stats(log),
        battery=_battery_summaries(log, list(start["devices"])),
        deployments=_deployment_stats(log),
        lifecycle=_lifecycle_counts(log),
        user_interactions=len(log.of_kind("user-interaction")),
    )


# ============================================
# Comparison
# ============================================

def flatten_metrics(report: MetricsReport) -> Dict[str, float]:
    """Numeric metrics keyed by dotted path (None values skipped)"""
    flat: Dict[str, float] = {}

    def walk(prefix: str, value) -> None:
        if isinstance(value, dict):
            for key in sorted(value):
                walk(f"{prefix}.{key}" if prefix else key, value[key])
        elif isinstance(value, bool) or value is None:
            return
        elif isinstance(value, (int, float)):
            flat[prefix] = value

    data = report.model_dump(mode="json")
    for key in ("scenario_id", "seed", "arch_mode"):
        data.pop(key)
    walk("", data)
    return flat


def compare(a: MetricsReport, b: MetricsReport) -> ComparisonReport:
    """
    Pair two reports of the same scenario and seed

    Raises:
        MismatchedRuns: If scenario ids or seeds differ
    """
    if a.scenario_id != b.scenario_id:
        raise MismatchedRuns(f"scenario ids differ: {a.scenario_id!r} vs {b.scenario_id!r}")
    if a.seed != b.seed:
        raise MismatchedRuns(f"seeds differ: {a.seed} vs {b.seed}")

    flat_a, flat_b = flatten_metrics(a), flatten_metrics(b)
    deltas = {
        name: flat_b[name] - flat_a[name]
        for name in sorted(set(flat_a) & set(flat_b))
    }
    return ComparisonReport(a=a, b=b, deltas=deltas)


def trace_csv(log: EventLog) -> str:
    """Battery/memory trace as CSV"""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_CSV_HEADER)
    for t, device_id, pct, memory in battery_trace(log):
        writer.writerow([repr(t), device_id, repr(pct), memory])
    return out.getvalue()


def report_text(report: MetricsReport) -> str:
    """Aligned-column rendering of a report"""
    rows = [[name, value] for name, value in flatten_metrics(report).items()]
    title = f"{report.scenario_id or '-'} seed {report.seed} ({report.arch_mode or '-'})\n"
    return title + format_table(["metric", "value"], rows)
