"""Cross-layer next-hop selection.

Each node keeps a table of its neighbors' advertised state (position,
queue backlog, battery, plus a locally observed delivery history) and
picks the next hop maximizing the product utility

    link quality * differential backlog * forward progress * battery

exactly as a distributed, per-node greedy step. The battery factor is
dropped when a deployment runs everything on DC supplies.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field

from .core import GeoCoordinate, TransmissionStrategy, haversine_distance
from .frames import BeaconFrame

RELIABILITY_HISTORY_LEN = 20
STALENESS_BEACON_PERIODS = 3

BATTERY_MODE = "battery"
DC_MODE = "dc"

_TIE_REL_TOL = 1e-12


class RoutingError(ValueError):
    pass


@dataclass
class NeighborRecord:
    node_id: int
    position: GeoCoordinate
    backlog: int = 0
    battery_percent: float = 100.0
    reliability_history: deque = field(
        default_factory=lambda: deque(maxlen=RELIABILITY_HISTORY_LEN)
    )
    last_heard_us: int = 0


def reliability_mean(record: NeighborRecord) -> float:
    """Mean of the delivery-ratio history; optimistic 1.0 when empty."""
    hist = record.reliability_history
    if not hist:
        return 1.0
    return sum(hist) / len(hist)


def is_info_potentially_stale(
    record: NeighborRecord, now_us: int, staleness_us: int
) -> bool:
    return (now_us - record.last_heard_us) > staleness_us


def forward_progress(
    src: GeoCoordinate, candidate: GeoCoordinate, dst: GeoCoordinate
) -> float:
    """Fractional reduction of remaining distance if candidate relays."""
    d_is = haversine_distance(src, dst)
    if d_is == 0.0:
        raise RoutingError("source is already at the destination")
    d_js = haversine_distance(candidate, dst)
    return (d_is - d_js) / d_is


def diff_backlog_term(q_source: int, q_next: int, stale: bool) -> float:
    """Differential-backlog factor of the utility.

    Faithful trace of the on-device computation, including the zero
    source-backlog branch and the 1/backlog floor for saturated
    neighbors.
    """
    source_backlog = float(q_source)
    if source_backlog == 0:
        source_backlog = 1.0
    next_hop_backlog = float(q_next)
    if stale:
        next_hop_backlog = 0.0
    minimum_value = 0.0
    if next_hop_backlog > 0:
        minimum_value = 1.0 / next_hop_backlog
    backlog_term = (source_backlog - next_hop_backlog) / source_backlog
    if next_hop_backlog < source_backlog:
        return backlog_term
    return max(backlog_term, minimum_value)


def energy_efficiency(rate_mbps: float, e_b: float, power_w: float) -> float:
    """Successfully delivered bits per Joule of transmit energy."""
    return rate_mbps * 1e6 * (1.0 - e_b) / power_w


@dataclass
class SourceSnapshot:
    """What a node knows about itself when it routes."""

    position: GeoCoordinate
    backlog: int


def utility(
    source: SourceSnapshot,
    neighbor: NeighborRecord,
    dst: GeoCoordinate,
    mode: str = BATTERY_MODE,
    now_us: int = 0,
    staleness_us: int = 3_000_000,
    link_term: float | None = None,
    next_hop_backlog: int | None = None,
) -> float:
    """Utility of relaying through ``neighbor`` toward ``dst``.

    ``link_term`` overrides the reliability mean when a caller evaluates
    explicit transmission strategies (energy-efficiency mode);
    ``next_hop_backlog`` overrides the advertised backlog (used to zero
    the destination's own backlog).
    """
    reliability = reliability_mean(neighbor) if link_term is None else link_term
    progress = forward_progress(source.position, neighbor.position, dst)
    stale = is_info_potentially_stale(neighbor, now_us, staleness_us)
    q_next = neighbor.backlog if next_hop_backlog is None else next_hop_backlog
    diff_backlog = diff_backlog_term(source.backlog, q_next, stale)
    if mode == DC_MODE:
        return reliability * progress * diff_backlog
    residual_battery = neighbor.battery_percent / 100.0
    return reliability * progress * diff_backlog * residual_battery


class NeighborTable:
    """Per-node map of neighbor id -> NeighborRecord."""

    def __init__(self, owner_id: int):
        self.owner_id = owner_id
        self.records: dict[int, NeighborRecord] = {}
        # optional whitelist: when set, only these ids may enter the table
        self.allowed: set[int] | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.records

    def get(self, node_id: int) -> NeighborRecord | None:
        return self.records.get(node_id)

    def update_from_beacon(self, beacon: BeaconFrame, now_us: int) -> None:
        if beacon.src == self.owner_id:
            return
        if self.allowed is not None and beacon.src not in self.allowed:
            return
        rec = self.records.get(beacon.src)
        pos = GeoCoordinate(beacon.latitude, beacon.longitude)
        if rec is None:
            rec = NeighborRecord(node_id=beacon.src, position=pos)
            self.records[beacon.src] = rec
        rec.position = pos
        rec.backlog = beacon.backlog
        rec.battery_percent = beacon.battery_percent
        rec.last_heard_us = now_us

    def record_delivery_sample(self, node_id: int, sample: float) -> None:
        rec = self.records.get(node_id)
        if rec is not None:
            rec.reliability_history.append(sample)

    def clear(self) -> None:
        self.records.clear()


def select_next_hop(
    table: NeighborTable,
    source: SourceSnapshot,
    dst_id: int,
    dst_position: GeoCoordinate,
    rng: random.Random,
    mode: str = BATTERY_MODE,
    now_us: int = 0,
    staleness_us: int = 3_000_000,
    strategy: TransmissionStrategy | None = None,
    strategy_options: list[TransmissionStrategy] | None = None,
    link_model=None,
    distance_to=None,
) -> tuple[int, TransmissionStrategy] | None:
    """Argmax of the utility over feasible neighbors; None when no
    candidate offers forward progress.

    With ``strategy_options`` (and a link model plus a ``distance_to``
    callable) the search also ranks transmission strategies by link
    energy efficiency; otherwise the fixed ``strategy`` is returned with
    the winner. Ties break uniformly at random via ``rng``.
    """
    best: list[tuple[int, TransmissionStrategy]] = []
    best_u = 0.0
    for node_id in table.records:
        rec = table.records[node_id]
        progress = forward_progress(source.position, rec.position, dst_position)
        if progress <= 0.0:
            continue
        q_override = 0 if node_id == dst_id else None
        if strategy_options:
            options = []
            for strat in strategy_options:
                e_b = link_model.bit_error_rate(
                    distance_to(node_id, strat.power_w), strat.rate_mbps
                )
                eta = energy_efficiency(strat.rate_mbps, e_b, strat.power_w)
                options.append(
                    (
                        utility(
                            source, rec, dst_position, mode, now_us, staleness_us,
                            link_term=eta * reliability_mean(rec),
                            next_hop_backlog=q_override,
                        ),
                        strat,
                    )
                )
            u, strat = max(options, key=lambda t: t[0])
        else:
            u = utility(
                source, rec, dst_position, mode, now_us, staleness_us,
                next_hop_backlog=q_override,
            )
            strat = strategy
        if best and abs(u - best_u) <= _TIE_REL_TOL * max(abs(u), abs(best_u)):
            best.append((node_id, strat))
        elif not best or u > best_u:
            best, best_u = [(node_id, strat)], u
    if not best:
        return None
    if len(best) == 1:
        return best[0]
    return best[rng.randrange(len(best))]
