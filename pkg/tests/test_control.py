"""Gateway control plane: join, floods, status, parameters, resets."""

import json
from pathlib import Path

from xlmesh.engine import Engine, Medium
from xlmesh.frames import BROADCAST, ControlFrame
from xlmesh.scenarios import Perturbation, TrafficSession
from tests.conftest import make_scenario

GOLDEN = Path(__file__).parent / "golden"


def capture_control(engine):
    rows = []
    orig = engine.log_control

    def patched(node_id, frame):
        rows.append({"node": node_id, "frame": frame.to_json_dict()})
        orig(node_id, frame)

    engine.log_control = patched
    return rows


def line4(duration_s=12.0, perturbations=(), pre_joined=True, seed=4):
    return make_scenario(
        {1: (0.0, 0.0), 2: (280.0, 0.0), 3: (560.0, 0.0), 4: (840.0, 0.0)},
        duration_s=duration_s, gateway=1, seed=seed, pre_joined=pre_joined,
        neighbor_override={1: [2], 2: [1, 3], 3: [2, 4], 4: [3]},
        perturbations=list(perturbations),
    )


def count_control_transmissions(scenario, ckind):
    sent = []
    orig = Medium.transmit

    def recorder(self, sender, frames, rate, addressed=None, on_complete=None,
                 power_w=None, is_burst=False):
        for f in frames:
            if f.kind == "control" and f.ckind == ckind:
                sent.append(sender.id)
        return orig(self, sender, frames, rate, addressed, on_complete,
                    power_w, is_burst)

    Medium.transmit = recorder
    try:
        engine = Engine(scenario)
        engine.run()
    finally:
        Medium.transmit = orig
    return engine, sent


# -- join handshake ---------------------------------------------------------


def test_join_handshake_four_message_transcript():
    sc = make_scenario({1: (0.0, 0.0), 2: (400.0, 0.0)}, duration_s=8.0,
                       pre_joined=False, gateway=1, seed=4)
    engine = Engine(sc)
    rows = capture_control(engine)
    engine.run()
    kinds = [r["frame"]["kind"] for r in rows]
    assert kinds == [
        "new_node_announce",
        "new_node_response",
        "hello_gateway",
        "gateway_new_node_ack",
    ]
    assert engine.nodes[2].control.joined
    assert engine.nodes[1].control.known_nodes == {1, 2}
    new_nodes = [e for e in engine.event_log if e[0] == "console" and e[2] == "new_node"]
    assert len(new_nodes) == 1


def test_join_transcript_matches_golden():
    sc = make_scenario({1: (0.0, 0.0), 2: (400.0, 0.0)}, duration_s=8.0,
                       pre_joined=False, gateway=1, seed=4)
    engine = Engine(sc)
    rows = capture_control(engine)
    engine.run()
    golden = json.loads((GOLDEN / "join_transcript.json").read_text())
    assert rows == golden


def test_concurrent_joins_complete():
    sc = make_scenario(
        {1: (0.0, 0.0), 2: (400.0, 0.0), 3: (0.0, 400.0)},
        duration_s=15.0, pre_joined=False, gateway=1, seed=6,
    )
    engine = Engine(sc)
    engine.run()
    assert engine.nodes[2].control.joined
    assert engine.nodes[3].control.joined
    assert engine.nodes[1].control.known_nodes == {1, 2, 3}


def test_isolated_node_keeps_announcing():
    sc = make_scenario(
        {1: (0.0, 0.0), 2: (5000.0, 0.0)},   # far out of radio range
        duration_s=10.0, pre_joined=False, gateway=1, seed=6,
    )
    engine, sent = count_control_transmissions(sc, "new_node_announce")
    assert not engine.nodes[2].control.joined
    # announce retries roughly every 2 s
    assert len([s for s in sent if s == 2]) >= 3
    assert engine.nodes[1].control.known_nodes == {1}


# -- broadcast flood ------------------------------------------------------------


def test_flood_processed_once_per_node_with_bounded_transmissions():
    sc = line4(perturbations=[
        Perturbation(2.0, "operator_command", 1,
                     {"kind": "reset_network", "target": "all", "payload": {}}),
    ])
    engine, sent = count_control_transmissions(sc, "reset_network")
    resets = [e for e in engine.event_log if e[0] == "reset"]
    assert sorted(e[2] for e in resets) == [1, 2, 3, 4]
    assert len(sent) <= len(engine.nodes)


def test_duplicate_broadcast_dropped():
    sc = line4()
    engine = Engine(sc)
    engine._setup()
    node = engine.nodes[3]
    frame = ControlFrame(ckind="reset_network", origin=1, target=BROADCAST,
                         sequence=9)
    node.control.handle_broadcast(frame)
    resets = len([e for e in engine.event_log if e[0] == "reset"])
    node.control.handle_broadcast(frame)
    assert len([e for e in engine.event_log if e[0] == "reset"]) == resets == 1


# -- status requests --------------------------------------------------------------


def test_network_status_collects_all_other_nodes():
    sc = make_scenario(
        {i: ((i - 1) * 300.0, 0.0) for i in range(1, 6)},
        duration_s=15.0, gateway=1, seed=8,
        perturbations=[Perturbation(2.0, "operator_command", 1,
                                    {"kind": "req_network_status", "target": "all"})],
    )
    engine = Engine(sc)
    engine.run()
    statuses = [e for e in engine.event_log
                if e[0] == "console" and e[2] == "node_status"]
    assert sorted(e[3] for e in statuses) == [2, 3, 4, 5]


def test_node_status_only_target_responds():
    sc = make_scenario(
        {i: ((i - 1) * 300.0, 0.0) for i in range(1, 6)},
        duration_s=15.0, gateway=1, seed=8,
        perturbations=[Perturbation(2.0, "operator_command", 1,
                                    {"kind": "req_node_status", "target": 3})],
    )
    engine = Engine(sc)
    engine.run()
    statuses = [e for e in engine.event_log
                if e[0] == "console" and e[2] == "node_status"]
    assert [e[3] for e in statuses] == [3]


def test_status_payload_fields():
    sc = line4()
    engine = Engine(sc)
    engine._setup()
    payload = engine.nodes[3].control.status_payload()
    for key in ("addr", "latitude", "longitude", "battery_percent",
                "dc_powered", "backlog", "rate_mbps", "power_w"):
        assert key in payload


# -- set parameter ------------------------------------------------------------------


def test_broadcast_rate_update_applies_everywhere_with_one_ack_each():
    sc = line4(perturbations=[
        Perturbation(2.0, "operator_command", 1,
                     {"kind": "set_network_param", "target": "all",
                      "payload": {"command": "update_data_rate", "value": 5.5}}),
    ])
    engine = Engine(sc)
    engine.run()
    assert all(n.radio.rate_mbps == 5.5 for n in engine.nodes.values())
    acks = [e for e in engine.event_log if e[0] == "console" and e[2] == "command_ack"]
    assert sorted(e[3] for e in acks) == [2, 3, 4]


def test_set_param_transcript_matches_golden():
    sc = line4(perturbations=[
        Perturbation(2.0, "operator_command", 1,
                     {"kind": "set_network_param", "target": "all",
                      "payload": {"command": "update_data_rate", "value": 5.5}}),
    ])
    engine = Engine(sc)
    rows = capture_control(engine)
    engine.run()
    golden = json.loads((GOLDEN / "set_param_transcript.json").read_text())
    assert rows == golden


def test_unicast_power_update_hits_only_target():
    sc = line4(perturbations=[
        Perturbation(2.0, "operator_command", 1,
                     {"kind": "set_node_param", "target": 3,
                      "payload": {"command": "update_tx_power", "value": 3.0}}),
    ])
    engine = Engine(sc)
    engine.run()
    assert engine.nodes[3].radio.power_w < 3.5
    assert all(engine.nodes[n].radio.power_w == 3.5 for n in (1, 2, 4))
    acks = [e for e in engine.event_log if e[0] == "console" and e[2] == "command_ack"]
    assert [e[3] for e in acks] == [3]


def test_invalid_rate_rejected_without_ack():
    sc = line4()
    engine = Engine(sc)
    engine._setup()
    node = engine.nodes[2]
    before = node.radio.rate_mbps
    frame = ControlFrame(ckind="set_node_param", origin=1, target=2, sequence=0,
                         payload={"command": "update_data_rate", "value": 3})
    node.control.handle(frame)
    assert node.radio.rate_mbps == before
    assert node.control.invalid_command_count == 1
    assert not node.pending_control_unicast


def test_frequency_update():
    sc = line4()
    engine = Engine(sc)
    engine._setup()
    node = engine.nodes[2]
    frame = ControlFrame(ckind="set_node_param", origin=1, target=2, sequence=0,
                         payload={"command": "update_frequency", "value": 915e6})
    node.control.handle(frame)
    assert node.frequency_hz == 915e6


# -- reset -----------------------------------------------------------------------------


def test_reset_node_clears_queues_preserves_dedup():
    sc = line4(
        perturbations=[Perturbation(
            4.0, "operator_command", 1,
            {"kind": "reset_node", "target": 3, "payload": {}},
        )],
    )
    sc.sessions.append(TrafficSession(src=3, dst=1, pps=200.0, start_s=1.0,
                                      stop_s=3.9))
    engine = Engine(sc)
    engine._setup()
    node3 = engine.nodes[3]
    seen_before = set()

    def probe():
        seen_before.update(node3.control.seen)

    engine.schedule(3_900_000, probe)
    engine.run()
    # the reset arrived while node 3 still had backlog; afterwards empty
    resets = [e for e in engine.event_log if e[0] == "reset" and e[2] == 3]
    assert resets
    reset_t = resets[0][1]
    assert node3.backlog() == 0
    assert seen_before.issubset(node3.control.seen)
    # the table was wiped: every entry present now postdates the restart
    assert all(rec.last_heard_us > reset_t
               for rec in node3.neighbor_table.records.values())


def test_reset_network_every_node_once_and_gateway_keeps_role():
    sc = line4(perturbations=[
        Perturbation(2.0, "operator_command", 1,
                     {"kind": "reset_network", "target": "all", "payload": {}}),
    ])
    engine = Engine(sc)
    engine.run()
    resets = [e for e in engine.event_log if e[0] == "reset"]
    assert sorted(e[2] for e in resets) == [1, 2, 3, 4]
    gw = engine.nodes[1]
    assert gw.is_gateway and gw.control.joined
    # non-gateways re-ran the join handshake after the restart
    assert all(engine.nodes[n].control.joined for n in (2, 3, 4))


def test_non_gateway_rejoins_after_reset():
    sc = line4(perturbations=[
        Perturbation(2.0, "operator_command", 1,
                     {"kind": "reset_node", "target": 2, "payload": {}}),
    ], duration_s=20.0)
    engine = Engine(sc)
    engine.run()
    hellos = [e for e in engine.event_log
              if e[0] == "control" and e[3] == "hello_gateway" and e[4] == 2]
    assert hellos, "node 2 never re-ran the join handshake"
    assert engine.nodes[2].control.joined


def test_announce_gateway_teaches_unjoined_nodes():
    sc = make_scenario(
        {1: (0.0, 0.0), 2: (400.0, 0.0), 3: (0.0, 400.0)},
        duration_s=15.0, gateway=1, seed=12, pre_joined=False,
        perturbations=[Perturbation(1.0, "operator_command", 1,
                                    {"kind": "announce_gateway", "target": "all"})],
    )
    engine = Engine(sc)
    engine.run()
    for nid in (2, 3):
        plane = engine.nodes[nid].control
        assert plane.gateway_addr == "10.0.0.1"
        assert plane.joined
    # every node answered the announcement with a status
    statuses = [e for e in engine.event_log
                if e[0] == "console" and e[2] == "node_status"]
    assert {e[3] for e in statuses} == {2, 3}
