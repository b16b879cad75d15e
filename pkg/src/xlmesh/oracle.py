"""Centralized brute-force solver used as ground truth for routing.

Enumerates every assignment of one (next hop, strategy) per source over
a small network snapshot, discards assignments violating the capacity,
error-rate, energy and backlog constraints, and returns the assignment
maximizing the summed link utility. Deliberately re-implements the
utility arithmetic instead of calling the routing module, so the two
routes to the answer stay independent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .core import GeoCoordinate, TransmissionStrategy, haversine_distance


@dataclass
class LinkInfo:
    reliability: float                  # goodput measure for the link
    capacity_bps: float = 11e6
    bit_error_rate: dict = field(default_factory=dict)   # rate -> e_b


@dataclass
class SnapshotNode:
    node_id: int
    position: GeoCoordinate
    backlog: int
    residual_j: float
    initial_j: float
    battery_percent: float


@dataclass
class NetworkSnapshot:
    nodes: dict[int, SnapshotNode]
    links: dict[tuple[int, int], LinkInfo]
    destination: int
    strategies: list[TransmissionStrategy]
    required_ber: float = 1e-3
    utility_mode: str = "battery"

    def neighbors(self, node_id: int) -> list[int]:
        return sorted(j for (i, j) in self.links if i == node_id)


@dataclass
class P1Result:
    feasible: bool
    assignment: dict[int, tuple[int, TransmissionStrategy]] | None
    objective: float
    ties: list[dict[int, tuple[int, TransmissionStrategy]]]
    per_source_optimal: dict[int, set[int]]


class InfeasibleError(ValueError):
    pass


def _utility(snap: NetworkSnapshot, src: int, hop: int) -> float:
    s = snap.nodes[src]
    j = snap.nodes[hop]
    dst = snap.nodes[snap.destination]
    d_is = haversine_distance(s.position, dst.position)
    d_js = haversine_distance(j.position, dst.position)
    progress = (d_is - d_js) / d_is
    reliability = snap.links[(src, hop)].reliability
    q_i = float(s.backlog) if s.backlog > 0 else 1.0
    q_j = 0.0 if hop == snap.destination else float(j.backlog)
    term = (q_i - q_j) / q_i
    if q_j < q_i:
        diff = term
    else:
        diff = max(term, 1.0 / q_j)
    u = reliability * progress * diff
    if snap.utility_mode == "battery":
        u *= j.battery_percent / 100.0
    return u


def _feasible(snap: NetworkSnapshot, src: int, hop: int, strat: TransmissionStrategy) -> bool:
    link = snap.links.get((src, hop))
    if link is None:
        return False
    if strat.rate_mbps * 1e6 > link.capacity_bps:
        return False
    e_b = link.bit_error_rate.get(strat.rate_mbps, 0.0)
    if e_b > snap.required_ber:
        return False
    if snap.nodes[src].residual_j <= 0.0:
        return False
    if snap.nodes[src].backlog < 0:
        return False
    return True


def solve_p1_bruteforce(snap: NetworkSnapshot, destination: int | None = None) -> P1Result:
    """Exhaustive search over per-source (next hop, strategy) choices.

    Sources are all non-destination nodes. Raises nothing; an empty
    feasible set for any source yields ``feasible=False``.
    """
    if destination is not None and destination != snap.destination:
        raise ValueError("snapshot destination mismatch")
    if len(snap.nodes) > 6:
        raise ValueError("brute force limited to 6 nodes")
    if len(snap.strategies) > 4:
        raise ValueError("brute force limited to 4 strategies")

    sources = sorted(n for n in snap.nodes if n != snap.destination)
    options: list[list[tuple[int, TransmissionStrategy, float]]] = []
    for src in sources:
        opts = []
        for hop in snap.neighbors(src):
            for strat in snap.strategies:
                if _feasible(snap, src, hop, strat):
                    opts.append((hop, strat, _utility(snap, src, hop)))
        if not opts:
            return P1Result(False, None, -math.inf, [], {})
        options.append(opts)

    best_obj = -math.inf
    ties: list[dict[int, tuple[int, TransmissionStrategy]]] = []
    for combo in itertools.product(*options):
        obj = sum(u for (_hop, _strat, u) in combo)
        if obj > best_obj + 1e-12:
            best_obj = obj
            ties = [
                {src: (hop, strat) for src, (hop, strat, _u) in zip(sources, combo)}
            ]
        elif abs(obj - best_obj) <= 1e-12:
            ties.append(
                {src: (hop, strat) for src, (hop, strat, _u) in zip(sources, combo)}
            )

    per_source: dict[int, set[int]] = {src: set() for src in sources}
    for assignment in ties:
        for src, (hop, _strat) in assignment.items():
            per_source[src].add(hop)

    return P1Result(True, ties[0], best_obj, ties, per_source)


def snapshot_objective(
    snap: NetworkSnapshot, assignment: dict[int, tuple[int, TransmissionStrategy] | None]
) -> float:
    """Objective value of an arbitrary (e.g. distributed) assignment."""
    total = 0.0
    for src, choice in assignment.items():
        if choice is None:
            continue
        hop, _strat = choice
        total += _utility(snap, src, hop)
    return total
