"""Measurement collection and export.

Reliability is delivered/sent; throughput counts payload bits only,
measured over the scenario's steady-state window; normalized throughput
divides by the PHY rate.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

CSV_COLUMNS = [
    "scenario", "seed", "rate_mbps", "arq", "payload_b", "sessions",
    "source_rate_pps", "sent", "received", "reliability",
    "throughput_bps", "normalized_throughput",
]


@dataclass
class SessionMetrics:
    src: int
    dst: int
    payload_bytes: int
    sent: int
    received: int
    reliability: float | None
    throughput_bps: float
    normalized_throughput: float


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    rate_mbps: float
    arq: bool
    duration_s: float
    sessions: list[SessionMetrics]
    sent: int
    received: int
    reliability: float | None
    throughput_bps: float
    normalized_throughput: float
    lost: dict[str, int]
    injected: int
    network_lifetime_s: float | None
    deliveries: list[tuple] = field(default_factory=list, repr=False)
    energy_samples: list[tuple] = field(default_factory=list, repr=False)
    event_log_lines: list[str] = field(default_factory=list, repr=False)
    event_log_hash: str = ""
    queued_at_end: int = 0


def build_report(engine) -> MetricsReport:
    scenario = engine.scenario
    rate = scenario.radio.rate_mbps
    sessions: list[SessionMetrics] = []
    total_sent = 0
    total_received = 0
    total_thr = 0.0
    for stats in engine.session_stats:
        spec = stats.spec
        w0, w1 = engine._measure_window_us(spec)
        window_s = max(1e-9, (w1 - w0) / 1e6)
        thr = stats.delivered_window_bits / window_s
        rel = (stats.delivered / stats.sent) if stats.sent else None
        sessions.append(
            SessionMetrics(
                src=spec.src, dst=spec.dst, payload_bytes=spec.payload_bytes,
                sent=stats.sent, received=stats.delivered, reliability=rel,
                throughput_bps=thr,
                normalized_throughput=thr / (rate * 1e6),
            )
        )
        total_sent += stats.sent
        total_received += stats.delivered
        total_thr += thr

    queued = 0
    for nid in engine.node_order:
        queued += engine.nodes[nid].backlog()

    return MetricsReport(
        scenario=scenario.name,
        seed=engine.seed,
        rate_mbps=rate,
        arq=scenario.mac.arq_enabled,
        duration_s=scenario.duration_s,
        sessions=sessions,
        sent=total_sent,
        received=total_received,
        reliability=(total_received / total_sent) if total_sent else None,
        throughput_bps=total_thr,
        normalized_throughput=total_thr / (rate * 1e6),
        lost=dict(engine.lost),
        injected=engine.injected_total,
        network_lifetime_s=(
            engine.network_lifetime_us / 1e6
            if engine.network_lifetime_us is not None
            else None
        ),
        deliveries=list(engine.deliveries),
        energy_samples=list(engine.energy_samples),
        event_log_lines=engine.event_log_lines(),
        event_log_hash=engine.event_log_hash(),
        queued_at_end=queued,
    )


def collect_relay_series(
    deliveries,
    relays: list[int],
    duration_s: float,
    bin_s: float = 10.0,
    window_s: float = 60.0,
) -> dict:
    """Per-relay delivered-packet rate: fixed bins smoothed by a moving
    window, plus the total. Accepts a MetricsReport or its raw delivery
    rows (t_us, session, relay, uid)."""
    if hasattr(deliveries, "deliveries"):
        deliveries = deliveries.deliveries
    n_bins = int(duration_s // bin_s)
    raw = {r: [0] * n_bins for r in relays}
    raw["total"] = [0] * n_bins
    for t_us, _session, relay, _uid in deliveries:
        b = int((t_us / 1e6) // bin_s)
        if b >= n_bins:
            continue
        raw["total"][b] += 1
        if relay in raw:
            raw[relay][b] += 1
    window_bins = max(1, int(window_s // bin_s))
    series = {}
    for key, counts in raw.items():
        smoothed = []
        for i in range(n_bins):
            lo = max(0, i - window_bins + 1)
            span = (i - lo + 1) * bin_s
            smoothed.append(sum(counts[lo : i + 1]) / span)
        series[key] = smoothed
    series["bin_s"] = bin_s
    series["bin_ends_s"] = [(i + 1) * bin_s for i in range(n_bins)]
    return series


def phase_relay_shares(
    deliveries: list[tuple],
    relays: list[int],
    phase_bounds_s: list[tuple[float, float]],
    settle_s: float = 30.0,
) -> list[dict]:
    """Fraction of delivered traffic carried by each relay per phase.

    The first `settle_s` of every phase is excluded so each share
    reflects the steady response to that phase's perturbation."""
    shares = []
    for start_s, end_s in phase_bounds_s:
        t0 = (start_s + settle_s) * 1e6
        t1 = end_s * 1e6
        counts = {r: 0 for r in relays}
        total = 0
        for t_us, _session, relay, _uid in deliveries:
            if t0 <= t_us < t1:
                total += 1
                if relay in counts:
                    counts[relay] += 1
        shares.append(
            {
                "total": total,
                **{r: (counts[r] / total if total else 0.0) for r in relays},
            }
        )
    return shares


def write_metrics_csv(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in CSV_COLUMNS})


def report_csv_row(
    report: MetricsReport,
    sessions_count: int,
    source_rate_pps: float,
    payload_b: int,
) -> dict:
    rel = report.reliability
    return {
        "scenario": report.scenario,
        "seed": report.seed,
        "rate_mbps": report.rate_mbps,
        "arq": "on" if report.arq else "off",
        "payload_b": payload_b,
        "sessions": sessions_count,
        "source_rate_pps": source_rate_pps,
        "sent": report.sent,
        "received": report.received,
        "reliability": "" if rel is None else f"{rel:.6f}",
        "throughput_bps": f"{report.throughput_bps:.1f}",
        "normalized_throughput": f"{report.normalized_throughput:.6f}",
    }


def write_event_log_jsonl(path: str | Path, report: MetricsReport) -> None:
    with open(path, "w") as fh:
        for line in report.event_log_lines:
            fh.write(line)
            fh.write("\n")


def write_relay_series_csv(path: str | Path, series: dict, relays: list[int]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s"] + [f"relay_{r}" for r in relays] + ["total"])
        for i, t in enumerate(series["bin_ends_s"]):
            writer.writerow(
                [t] + [f"{series[r][i]:.3f}" for r in relays] + [f"{series['total'][i]:.3f}"]
            )


def dump_report_json(report: MetricsReport) -> str:
    d = {
        "scenario": report.scenario,
        "seed": report.seed,
        "rate_mbps": report.rate_mbps,
        "arq": report.arq,
        "sent": report.sent,
        "received": report.received,
        "reliability": report.reliability,
        "throughput_bps": report.throughput_bps,
        "normalized_throughput": report.normalized_throughput,
        "lost": report.lost,
        "network_lifetime_s": report.network_lifetime_s,
        "event_log_hash": report.event_log_hash,
    }
    return json.dumps(d, indent=2, sort_keys=True)
