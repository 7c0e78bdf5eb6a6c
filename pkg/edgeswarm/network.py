"""
File: edgeswarm/network.py
Heterogeneous cellular topology, per-position link quality,
transfer latency, message loss and P2P fallback links

The fade model (log-distance path loss plus Gaussian fade) stands in for
measured signal time-series, which are not available.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, TextIO, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .config import NetworkConfig, P2PConfig
from .engine import RngStream
from .exceptions import MalformedHeader, NoCoverage, RowError, TopologyError
from .models import Rat
from .utils import distance

logger = logging.getLogger(__name__)

TOWER_CSV_HEADER = (
    "tower_id", "lat", "lon", "rat", "max_bandwidth_bps", "range_m", "base_latency_s",
)
EARTH_RADIUS_M = 6_371_008.8

Position = Tuple[float, float]


class CellTower(BaseModel):
    """A cellular tower in local planar meters (lat/lon kept when ingested)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tower_id: str = Field(min_length=1)
    rat: Rat
    max_bandwidth_bps: float = Field(gt=0)
    range_m: float = Field(gt=0)
    base_latency_s: float = Field(ge=0)
    x_m: float
    y_m: float
    lat: Optional[float] = None
    lon: Optional[float] = None

    @property
    def position(self) -> Position:
        return (self.x_m, self.y_m)


@dataclass(frozen=True)
class LinkSample:
    """
    Instantaneous link state

    ``serving_tower`` is a tower id for cellular links, ``p2p:<peer>`` for
    peer links and ``None`` when there is no coverage.
    """

    serving_tower: Optional[str]
    rat: Optional[Rat]
    snr_db: float
    bandwidth_bps: float
    loss_prob: float
    base_latency_s: float

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError(f"loss_prob out of range: {self.loss_prob}")
        if self.serving_tower is None and (self.bandwidth_bps != 0 or self.loss_prob != 1):
            raise ValueError("a no-coverage sample must have bandwidth 0 and loss 1")

    @property
    def has_coverage(self) -> bool:
        return self.serving_tower is not None

    @property
    def is_p2p(self) -> bool:
        return self.serving_tower is not None and self.serving_tower.startswith("p2p:")

    def to_payload(self) -> dict:
        return {
            "serving_tower": self.serving_tower,
            "rat": self.rat.value if self.rat else None,
            "snr_db": self.snr_db if math.isfinite(self.snr_db) else None,
            "bandwidth_bps": self.bandwidth_bps,
            "loss_prob": self.loss_prob,
        }


NO_COVERAGE = LinkSample(
    serving_tower=None, rat=None, snr_db=-math.inf, bandwidth_bps=0.0,
    loss_prob=1.0, base_latency_s=0.0,
)


@dataclass(frozen=True)
class Delivery:
    """Outcome of one message attempt"""

    delivered: bool
    sent_at: float
    delivered_at: Optional[float]
    bytes: int


@dataclass(frozen=True)
class TopologyResult:
    towers: List[CellTower]
    row_errors: List[RowError]


# ============================================
# Topology ingestion
# ============================================

def _project(lat: float, lon: float, lat0: float, lon0: float) -> Position:
    """Equirectangular projection about (lat0, lon0), meters"""
    x = EARTH_RADIUS_M * math.radians(lon - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * math.radians(lat - lat0)
    return (x, y)


def _parse_row(line: int, row: Sequence[str]) -> dict:
    if len(row) != len(TOWER_CSV_HEADER):
        raise RowError(line, f"expected {len(TOWER_CSV_HEADER)} fields, got {len(row)}")

    tower_id, lat, lon, rat, bandwidth, range_m, latency = (v.strip() for v in row)
    try:
        fields = {
            "tower_id": tower_id,
            "lat": float(lat),
            "lon": float(lon),
            "rat": Rat.parse(rat),
            "max_bandwidth_bps": float(bandwidth),
            "range_m": float(range_m),
            "base_latency_s": float(latency),
        }
    except ValueError as exc:
        raise RowError(line, str(exc)) from exc

    if not tower_id:
        raise RowError(line, "empty tower_id")
    if not -90.0 <= fields["lat"] <= 90.0 or not -180.0 <= fields["lon"] <= 180.0:
        raise RowError(line, "lat/lon out of range")
    if fields["max_bandwidth_bps"] <= 0:
        raise RowError(line, "max_bandwidth_bps must be > 0")
    if fields["range_m"] <= 0:
        raise RowError(line, "range_m must be > 0")
    if fields["base_latency_s"] < 0:
        raise RowError(line, "base_latency_s must be >= 0")
    return fields


def ingest_topology(stream: TextIO) -> TopologyResult:
    """
    Read towers from a ``towers.csv`` stream

    Lat/lon are projected to local meters about the centroid of the valid rows.

    Args:
        stream: Text stream with the documented header

    Returns:
        TopologyResult with the towers and the collected row errors

    Raises:
        MalformedHeader: If the header does not match
        TopologyError: If there are rows and none of them is valid

    Example:
        with open("towers.csv") as f:
            result = ingest_topology(f)
    """
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TOWER_CSV_HEADER:
        raise MalformedHeader(
            f"expected header {','.join(TOWER_CSV_HEADER)}, got {','.join(header or [])}"
        )

    parsed, errors, seen = [], [], set()
    for row in reader:
        line = reader.line_num
        if not any(cell.strip() for cell in row):
            continue
        try:
            fields = _parse_row(line, row)
            if fields["tower_id"] in seen:
                raise RowError(line, f"duplicate tower_id {fields['tower_id']!r}")
        except RowError as err:
            logger.warning("Skipping tower row: %s", err)
            errors.append(err)
            continue
        seen.add(fields["tower_id"])
        parsed.append(fields)

    if errors and not parsed:
        raise TopologyError(errors)
    if not parsed:
        return TopologyResult(towers=[], row_errors=[])

    lat0 = sum(f["lat"] for f in parsed) / len(parsed)
    lon0 = sum(f["lon"] for f in parsed) / len(parsed)
    towers = []
    for fields in parsed:
        x, y = _project(fields["lat"], fields["lon"], lat0, lon0)
        towers.append(CellTower(x_m=x, y_m=y, **fields))

    logger.info("Ingested %d towers (%d rows rejected)", len(towers), len(errors))
    return TopologyResult(towers=towers, row_errors=errors)


def emit_topology(towers: Iterable[CellTower]) -> str:
    """
    Write towers in the ``towers.csv`` schema (lat/lon with 6 decimals)

    Raises:
        ValueError: If a tower has no lat/lon
    """
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TOWER_CSV_HEADER)
    for tower in towers:
        if tower.lat is None or tower.lon is None:
            raise ValueError(f"tower {tower.tower_id} has no lat/lon to emit")
        writer.writerow([
            tower.tower_id,
            f"{tower.lat:.6f}",
            f"{tower.lon:.6f}",
            tower.rat.value,
            repr(tower.max_bandwidth_bps),
            repr(tower.range_m),
            repr(tower.base_latency_s),
        ])
    return out.getvalue()


# ============================================
# Link model
# ============================================

def modeled_snr(
    tower: CellTower,
    position: Position,
    config: NetworkConfig,
    indoor: bool = False,
) -> float:
    """
    Path-loss SNR without fade: snr0 - 10*gamma*log10(d/d0), minus indoor penalty

    Distances below the reference distance are clamped to it.
    """
    profile = config.profiles[tower.rat]
    d0 = config.reference_distance_m
    d = max(distance(position, tower.position), d0)
    snr = profile.snr0_db - 10.0 * profile.path_loss_exponent * math.log10(d / d0)
    if indoor:
        snr -= config.indoor_penalty_db
    return snr


def link_state(
    position: Position,
    towers: Sequence[CellTower],
    t: float,
    rng: RngStream,
    config: NetworkConfig,
    indoor: bool = False,
) -> LinkSample:
    """
    Sample the cellular link at a position

    The serving tower is the in-range tower with the highest modeled SNR,
    ties broken by higher RAT generation then lexicographic tower id. One
    fade draw from the ``link-fade`` stream is added to its SNR, and the
    RAT's SNR bins give bandwidth and loss.

    Args:
        position: Device position in meters
        towers: Frozen topology
        t: Virtual seconds (the model is stationary; kept for replay records)
        rng: The ``link-fade`` stream
        config: Network configuration
        indoor: Apply the indoor penalty

    Returns:
        LinkSample (NO_COVERAGE when no tower is in range)
    """
    best = None
    best_key = None
    for tower in towers:
        if distance(position, tower.position) > tower.range_m:
            continue
        snr = modeled_snr(tower, position, config, indoor)
        key = (-snr, -tower.rat.generation, tower.tower_id)
        if best_key is None or key < best_key:
            best, best_key = tower, key

    if best is None:
        return NO_COVERAGE

    snr = -best_key[0] + rng.normal(0.0, config.fade_sigma_db)
    quality = config.profiles[best.rat].quality(snr)
    return LinkSample(
        serving_tower=best.tower_id,
        rat=best.rat,
        snr_db=snr,
        bandwidth_bps=best.max_bandwidth_bps * quality.bandwidth_fraction,
        loss_prob=quality.loss_prob,
        base_latency_s=best.base_latency_s,
    )


def transfer_time(payload: int, link: LinkSample) -> float:
    """
    Seconds to move ``payload`` bytes: base latency + payload*8/bandwidth

    Raises:
        NoCoverage: If the link has no coverage

    Example:
        >>> transfer_time(0, link)  # doctest: +SKIP
        0.05
    """
    if not link.has_coverage:
        raise NoCoverage("no serving tower or peer")
    return link.base_latency_s + payload * 8.0 / link.bandwidth_bps


def deliver(payload: int, link: LinkSample, now: float, rng: RngStream) -> Delivery:
    """
    Attempt one message over a link

    Exactly one draw is taken from the ``link-loss`` stream; the message is
    lost with probability ``link.loss_prob``.
    """
    lost = rng.random() < link.loss_prob
    if lost or not link.has_coverage:
        return Delivery(delivered=False, sent_at=now, delivered_at=None, bytes=payload)
    return Delivery(
        delivered=True, sent_at=now, delivered_at=now + transfer_time(payload, link), bytes=payload
    )


# ============================================
# P2P fallback
# ============================================

def p2p_link(
    position_a: Position,
    position_b: Position,
    config: P2PConfig,
    peer_id: str = "peer",
) -> Optional[LinkSample]:
    """A peer link when the devices are within P2P range, else None"""
    if not config.enabled or distance(position_a, position_b) > config.range_m:
        return None
    return LinkSample(
        serving_tower=f"p2p:{peer_id}",
        rat=None,
        snr_db=math.inf,
        bandwidth_bps=config.bandwidth_bps,
        loss_prob=config.loss_prob,
        base_latency_s=config.base_latency_s,
    )


def relay_link(p2p: LinkSample, uplink: LinkSample) -> LinkSample:
    """
    Compose a peer hop with the peer's cellular uplink

    Bandwidth is the bottleneck of both hops, loss compounds and base
    latencies add.
    """
    if not p2p.has_coverage or not uplink.has_coverage:
        return NO_COVERAGE
    return LinkSample(
        serving_tower=f"{p2p.serving_tower}>{uplink.serving_tower}",
        rat=uplink.rat,
        snr_db=uplink.snr_db,
        bandwidth_bps=min(p2p.bandwidth_bps, uplink.bandwidth_bps),
        loss_prob=1.0 - (1.0 - p2p.loss_prob) * (1.0 - uplink.loss_prob),
        base_latency_s=p2p.base_latency_s + uplink.base_latency_s,
    )
