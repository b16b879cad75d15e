"""Acceptance suite.

One test per acceptance criterion, each printing a PASS/FAIL line.
Scenario-level criteria run headless through the CLI with fixed seeds;
run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import csv
import json
import random
import statistics

import pytest

from xlmesh.cli import main

SEED = "42"


def run_cli(tmp_path, label, args):
    out = tmp_path / label
    rc = main(args + ["--out", str(out)])
    assert rc == 0, f"CLI failed for {label}"
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return out, rows


# -- 1. PHY calibration ------------------------------------------------------

PAPER_TABLE = {
    (495.2, "2.0"): 0.999, (771.2, "2.0"): 0.9977, (1019.0, "2.0"): 0.9808,
    (495.2, "5.5"): 0.9962, (771.2, "5.5"): 0.9603, (1019.0, "5.5"): 0.9716,
    (495.2, "11.0"): 0.8528, (771.2, "11.0"): 0.3156, (1019.0, "11.0"): 0.139,
}


def test_criterion_1_phy_calibration(tmp_path, acceptance_report):
    worst = 0.0
    for rate in ("2.0", "5.5", "11.0"):
        _, rows = run_cli(tmp_path, f"range_{rate}", [
            "--scenario", "range", "--rate", rate, "--seed", SEED,
            "--sweep", "distance=495.2,771.2,1019",
        ])
        for row, distance in zip(rows, (495.2, 771.2, 1019.0)):
            assert int(row["sent"]) == 10_000
            measured = float(row["reliability"])
            target = PAPER_TABLE[(distance, rate)]
            worst = max(worst, abs(measured - target))
            assert abs(measured - target) <= 0.02, (distance, rate, measured)
    _, rows = run_cli(tmp_path, "range_100b", [
        "--scenario", "range", "--rate", "11", "--payload", "100",
        "--seed", SEED, "--sweep", "distance=1019",
    ])
    small = float(rows[0]["reliability"])
    ok = worst <= 0.02 and 0.25 <= small <= 0.35
    acceptance_report(
        "1 PHY calibration",
        ok,
        f"worst |sim-paper| = {worst*100:.2f} pp over 9 rows; "
        f"100 B case = {small:.3f} in [0.25, 0.35]",
    )


# -- 2. peer-to-peer -----------------------------------------------------------


def test_criterion_2_p2p(tmp_path, acceptance_report):
    _, rows = run_cli(tmp_path, "p2p_rates", [
        "--scenario", "p2p", "--arq", "off", "--seed", SEED,
        "--sweep", "rate=1,2,5.5",
    ])
    low_rates_ok = all(float(r["reliability"]) >= 0.99 for r in rows)

    _, rows11 = run_cli(tmp_path, "p2p_11_noarq", [
        "--scenario", "p2p", "--rate", "11", "--arq", "off", "--seed", SEED,
    ])
    rel11 = float(rows11[0]["reliability"])
    norm11 = float(rows11[0]["normalized_throughput"])

    _, rows11a = run_cli(tmp_path, "p2p_11_arq", [
        "--scenario", "p2p", "--rate", "11", "--arq", "on", "--seed", SEED,
    ])
    rel11a = float(rows11a[0]["reliability"])
    norm11a = float(rows11a[0]["normalized_throughput"])

    _, rows3k = run_cli(tmp_path, "p2p_11_3000", [
        "--scenario", "p2p", "--rate", "11", "--arq", "off",
        "--payload", "3000", "--seed", SEED,
    ])
    norm3k = float(rows3k[0]["normalized_throughput"])
    gain = norm3k / norm11 - 1.0

    ok = (
        low_rates_ok
        and abs(rel11 - 0.92) <= 0.03
        and rel11a == 1.0
        and norm11a < norm11
        and gain >= 0.25
    )
    acceptance_report(
        "2 P2P",
        ok,
        f"rel(1/2/5.5) >= 0.99: {low_rates_ok}; rel(11)={rel11:.3f} (0.92±0.03); "
        f"ARQ rel={rel11a:.3f} with norm {norm11a:.3f} < {norm11:.3f}; "
        f"payload 1000->3000 B gain {gain*100:+.1f}% (>= +25%)",
    )


# -- 3. line network --------------------------------------------------------------


def test_criterion_3_line_network(tmp_path, acceptance_report):
    norm = {}
    rel = {}
    for arq in ("off", "on"):
        _, rows = run_cli(tmp_path, f"line6_{arq}", [
            "--scenario", "line6", "--rate", "2", "--arq", arq, "--seed", SEED,
            "--sweep", "hops=1,2,3,4,5",
        ])
        for hops, row in zip((1, 2, 3, 4, 5), rows):
            norm[(hops, arq)] = float(row["normalized_throughput"])
            rel[(hops, arq)] = float(row["reliability"])

    one_hop = norm[(1, "off")]
    one_hop_ok = 0.70 <= one_hop <= 0.90
    sharing_dev = {
        k: abs(norm[(k, "off")] - one_hop / k) / (one_hop / k) for k in (2, 3, 4, 5)
    }
    sharing_ok = all(d <= 0.12 for d in sharing_dev.values())
    no_arq_5hop_ok = rel[(5, "off")] >= 0.93
    arq_rel_ok = all(rel[(k, "on")] == 1.0 for k in (1, 2, 3, 4, 5))
    penalty = {
        k: 1.0 - norm[(k, "on")] / norm[(k, "off")] for k in (1, 2, 3, 4, 5)
    }
    penalty_ok = all(p <= 0.10 for p in penalty.values())

    ok = one_hop_ok and sharing_ok and no_arq_5hop_ok and arq_rel_ok and penalty_ok
    acceptance_report(
        "3 Line network",
        ok,
        f"1-hop norm {one_hop:.3f} in [0.70, 0.90]; 1/k dev "
        f"{max(sharing_dev.values())*100:.1f}% (<=12%); 5-hop no-ARQ rel "
        f"{rel[(5, 'off')]:.4f} (>=0.93); ARQ rel all 1.000, worst penalty "
        f"{max(penalty.values())*100:.1f}% (<=10%)",
    )


# -- 4. dyn5 dynamic routing -------------------------------------------------------


def test_criterion_4_dyn5(tmp_path, acceptance_report):
    out, _rows = run_cli(tmp_path, "dyn5", [
        "--scenario", "dyn5", "--seed", SEED,
    ])
    deliveries = []
    for line in (out / "events_run.jsonl").read_text().splitlines():
        ev = json.loads(line)
        if ev[0] == "deliver":
            deliveries.append((ev[1], ev[5], ev[4], ev[2]))

    from xlmesh.metrics import collect_relay_series, phase_relay_shares

    relays = {"R1": 2, "R2": 3, "R3": 4}
    bounds = [(i * 300.0, (i + 1) * 300.0) for i in range(5)]
    shares = phase_relay_shares(deliveries, list(relays.values()), bounds)
    p = shares

    even = all(abs(p[0][r] - 1 / 3) <= 0.07 for r in relays.values())
    congested = p[1][relays["R1"]] < 0.10
    battery = p[2][relays["R2"]] < p[2][relays["R3"]]
    moved = p[3][relays["R3"]] < 0.05 and p[3][relays["R2"]] > 0.60
    recovered = p[4][relays["R1"]] > p[4][relays["R2"]]

    series = collect_relay_series(deliveries, list(relays.values()), 1500.0)
    warm = series["total"][6:]
    mean = statistics.mean(warm)
    max_dev = max(abs(x - mean) / mean for x in warm)
    stable = max_dev <= 0.15

    ok = even and congested and battery and moved and recovered and stable
    acceptance_report(
        "4 dyn5 dynamic routing",
        ok,
        "phase1 thirds "
        + "/".join(f"{p[0][r]*100:.0f}%" for r in relays.values())
        + f" (33±7); phase2 R1 {p[1][relays['R1']]*100:.1f}% (<10); "
        f"phase3 R2<R3 {battery}; phase4 R3 {p[3][relays['R3']]*100:.1f}% R2 "
        f"{p[3][relays['R2']]*100:.0f}%; phase5 R1>R2 {recovered}; "
        f"total stays within ±{max_dev*100:.1f}% (<=15%)",
    )


# -- 5. net10 capacity ----------------------------------------------------------------

# finite-window CSMA saturation measurements fluctuate ~1-2%; the
# monotonicity check allows that much, small against the ±0.1 band the
# criterion grants the saturation level itself
MONOTONE_SLACK = 0.02


def test_criterion_5_net10(tmp_path, acceptance_report):
    _, rows = run_cli(tmp_path, "net10", [
        "--scenario", "net10", "--seed", "7", "--duration", "120",
        "--sweep", "sessions=1,2,4", "--sweep", "source_rate=10,20,40,80",
    ])
    grid = {}
    for row in rows:
        grid[(int(row["sessions"]), float(row["source_rate_pps"]))] = float(
            row["normalized_throughput"]
        )
    assert len(grid) == 12
    monotone = True
    for s in (1, 2, 4):
        series = [grid[(s, r)] for r in (10.0, 20.0, 40.0, 80.0)]
        for a, b in zip(series, series[1:]):
            if b < a - MONOTONE_SLACK:
                monotone = False
    sat = grid[(4, 80.0)]
    sat_ok = abs(sat - 0.6) <= 0.1
    ok = monotone and sat_ok
    acceptance_report(
        "5 net10 capacity",
        ok,
        f"normalized throughput non-decreasing per session count "
        f"(slack {MONOTONE_SLACK}); 4x80 saturation {sat:.3f} (0.6±0.1)",
    )


# -- 6. oracle equivalence ----------------------------------------------------------------


def test_criterion_6_oracle_equivalence(acceptance_report):
    from xlmesh.oracle import snapshot_objective, solve_p1_bruteforce
    from tests.test_oracle import distributed_choices, random_snapshot

    rng = random.Random(int(SEED))
    dominance = True
    membership = True
    for _ in range(200):
        snap = random_snapshot(rng, rng.choice([3, 4, 5]))
        result = solve_p1_bruteforce(snap)
        assert result.feasible
        choices = distributed_choices(snap, rng)
        if result.objective < snapshot_objective(snap, choices) - 1e-9:
            dominance = False
        for src, choice in choices.items():
            if choice is not None and choice[0] not in result.per_source_optimal[src]:
                membership = False
    ok = dominance and membership
    acceptance_report(
        "6 Oracle equivalence",
        ok,
        "200 random <=5-node snapshots: per-source choices inside the "
        "optimal set and centralized objective always dominates",
    )


# -- 7. listing traces --------------------------------------------------------------------


def test_criterion_7_listing_traces(acceptance_report):
    from xlmesh.core import GeoCoordinate
    from xlmesh.routing import (
        BATTERY_MODE,
        DC_MODE,
        NeighborRecord,
        SourceSnapshot,
        diff_backlog_term,
        utility,
    )

    traces_ok = (
        diff_backlog_term(10, 0, False) == 1.0
        and diff_backlog_term(10, 10, False) == max(0.0, 1.0 / 10.0)
        and diff_backlog_term(0, 4, False) == max((1.0 - 4.0) / 1.0, 1.0 / 4.0)
        and diff_backlog_term(10, 999, True) == 1.0
    )

    src = SourceSnapshot(GeoCoordinate(0.0, 0.0), 2)
    dst = GeoCoordinate(1.0, 0.0)
    rec = NeighborRecord(node_id=2, position=dst, backlog=1,
                         battery_percent=60.0, last_heard_us=0)
    rec.reliability_history.append(0.9)
    u_batt = utility(src, rec, dst, BATTERY_MODE, 0, 3_000_000)
    u_dc = utility(src, rec, dst, DC_MODE, 0, 3_000_000)
    # candidate == destination: progress is exactly 1.0, so the product
    # reduces to the literal multiplication chain
    battery_ok = u_batt == 0.9 * 1.0 * 0.5 * (60.0 / 100.0)
    dc_ok = u_dc == 0.9 * 1.0 * 0.5

    ok = traces_ok and battery_ok and dc_ok
    acceptance_report(
        "7 Listing traces",
        ok,
        "diff-backlog branches and both utility variants reproduce the "
        "hand-traced values bit-for-bit",
    )


# -- 8. control-plane conformance --------------------------------------------------------------


def test_criterion_8_control_plane(acceptance_report):
    import tests.test_control as tc

    # the detailed checks live in test_control; re-run the core ones here
    tc.test_join_handshake_four_message_transcript()
    tc.test_join_transcript_matches_golden()
    tc.test_flood_processed_once_per_node_with_bounded_transmissions()
    tc.test_broadcast_rate_update_applies_everywhere_with_one_ack_each()
    tc.test_set_param_transcript_matches_golden()
    acceptance_report(
        "8 Control plane",
        True,
        "4-message join transcript, exactly-once flood with <=N "
        "transmissions, one ack per applied set-parameter, golden JSON "
        "transcripts stable",
    )


# -- 9. determinism ------------------------------------------------------------------------------


DETERMINISM_RUNS = [
    ("range", ["--scenario", "range", "--duration", "30",
               "--sweep", "packets=2000"]),
    ("p2p", ["--scenario", "p2p", "--duration", "15"]),
    ("line6", ["--scenario", "line6", "--duration", "45"]),
    ("dyn5", ["--scenario", "dyn5", "--duration", "40", "--sweep", "phase=8"]),
    ("net10", ["--scenario", "net10", "--duration", "30"]),
]


def test_criterion_9_determinism(tmp_path, acceptance_report):
    hashes = {}
    for name, args in DETERMINISM_RUNS:
        pair = []
        for attempt in ("a", "b"):
            out, _rows = run_cli(tmp_path, f"det_{name}_{attempt}",
                                 args + ["--seed", SEED])
            summary = json.loads((out / "summary.json").read_text())
            pair.append(summary["runs"][0]["event_log_hash"])
        hashes[name] = pair
    ok = all(a == b for a, b in hashes.values())
    acceptance_report(
        "9 Determinism",
        ok,
        "event-log hash identical across two runs of every built-in "
        "scenario at seed " + SEED,
    )


# -- 10. secondary console -----------------------------------------------------------------------


@pytest.mark.skip(
    reason="[SECONDARY] operator console criterion: exercised by the "
    "frontend suite (frontend/, `npm test`) against the bridge frame schema"
)
def test_criterion_10_console():
    pass
