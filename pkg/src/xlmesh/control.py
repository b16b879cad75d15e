"""Gateway control plane.

Node join handshake, status queries, broadcast/unicast parameter
commands, resets and acknowledgments. Broadcast commands flood with
per-(origin, kind, sequence) dedup so every node processes a command at
most once and the whole network retransmits it at most N times.
"""

from __future__ import annotations

import math

from .core import SUPPORTED_RATES_MBPS, MIN_TX_POWER_W, MAX_TX_POWER_W, TransmissionStrategy
from .frames import BROADCAST, ControlFrame

NEW_NODE_ANNOUNCE = "new_node_announce"
NEW_NODE_RESPONSE = "new_node_response"
HELLO_GATEWAY = "hello_gateway"
GATEWAY_NEW_NODE_ACK = "gateway_new_node_ack"
REQ_NETWORK_STATUS = "req_network_status"
REQ_NODE_STATUS = "req_node_status"
RESPONSE_TO_GATEWAY = "response_to_gateway"
RESET_NODE = "reset_node"
RESET_NETWORK = "reset_network"
SET_NETWORK_PARAM = "set_network_param"
SET_NODE_PARAM = "set_node_param"
ACK_GATEWAY = "ack_gateway"
ANNOUNCE_GATEWAY = "announce_gateway"

# kinds that flood the whole network (rebroadcast once per node)
FLOOD_KINDS = frozenset(
    {RESET_NETWORK, SET_NETWORK_PARAM, REQ_NETWORK_STATUS, ANNOUNCE_GATEWAY}
)
# broadcast to direct neighbors only, never rebroadcast
ONE_HOP_KINDS = frozenset({NEW_NODE_ANNOUNCE})

UPDATE_DATA_RATE = "update_data_rate"
UPDATE_TX_POWER = "update_tx_power"
UPDATE_FREQUENCY = "update_frequency"

ANNOUNCE_PERIOD_S = 2.0
STATUS_TIMEOUT_S = 5.0


def attenuation_to_power_w(attenuation_db: float) -> float:
    power = MAX_TX_POWER_W / (10.0 ** (attenuation_db / 10.0))
    return min(MAX_TX_POWER_W, max(MIN_TX_POWER_W, power))


class ControlPlane:
    """Per-node control-plane state; sequence counters survive resets."""

    def __init__(self, node, engine):
        self.node = node
        self.engine = engine
        self.seen: set[tuple[int, str, int]] = set()
        self.seq: dict[str, int] = {}
        self.gateway_id: int | None = node.id if node.is_gateway else None
        self.gateway_addr: str | None = node.addr if node.is_gateway else None
        self.joined = node.is_gateway
        self.known_nodes: set[int] = {node.id} if node.is_gateway else set()
        self.invalid_command_count = 0
        self._join_gen = 0

    # -- frame construction -------------------------------------------------

    def next_seq(self, kind: str) -> int:
        n = self.seq.get(kind, 0)
        self.seq[kind] = n + 1
        return n

    def make_frame(self, kind: str, target: int, payload: dict | None = None) -> ControlFrame:
        return ControlFrame(
            ckind=kind,
            origin=self.node.id,
            target=target,
            sequence=self.next_seq(kind),
            payload=payload or {},
        )

    def originate_broadcast(self, kind: str, payload: dict | None = None) -> ControlFrame:
        """Create, locally process, and transmit one broadcast command."""
        payload = dict(payload or {})
        if kind == ANNOUNCE_GATEWAY and self.node.is_gateway:
            payload.setdefault("gateway_addr", self.node.addr)
            payload.setdefault("gateway_id", self.node.id)
        frame = self.make_frame(kind, BROADCAST, payload)
        self.seen.add(frame.dedup_key())
        self._process(frame)
        self.node.send_control_broadcast(frame)
        return frame

    def originate_unicast(self, kind: str, target: int, payload: dict | None = None) -> ControlFrame:
        frame = self.make_frame(kind, target, payload)
        self.node.send_control_unicast(frame)
        return frame

    # -- inbound dispatch -----------------------------------------------------

    def handle(self, frame: ControlFrame) -> None:
        if frame.target == BROADCAST:
            self.handle_broadcast(frame)
        elif frame.target == self.node.id:
            # link-layer retransmissions may deliver a unicast frame twice
            key = frame.dedup_key()
            if key in self.seen:
                return
            self.seen.add(key)
            self._process(frame)

    def handle_broadcast(self, frame: ControlFrame) -> None:
        key = frame.dedup_key()
        if key in self.seen:
            return
        self.seen.add(key)
        self._process(frame)
        if frame.ckind in FLOOD_KINDS:
            self.node.send_control_rebroadcast(frame)

    # -- command semantics ------------------------------------------------------

    def _process(self, frame: ControlFrame) -> None:
        kind = frame.ckind
        node = self.node
        self.engine.log_control(node.id, frame)
        if kind == NEW_NODE_ANNOUNCE:
            if self.gateway_addr is not None and frame.origin != node.id:
                reply = self.make_frame(
                    NEW_NODE_RESPONSE,
                    frame.origin,
                    {"gateway_id": self.gateway_id, "gateway_addr": self.gateway_addr},
                )
                node.send_control_one_hop(reply, frame.origin)
        elif kind == NEW_NODE_RESPONSE:
            if self.gateway_id is None:
                self.gateway_id = frame.payload["gateway_id"]
                self.gateway_addr = frame.payload["gateway_addr"]
                self._start_hello_loop()
        elif kind == HELLO_GATEWAY:
            if node.is_gateway:
                fresh = frame.origin not in self.known_nodes
                self.known_nodes.add(frame.origin)
                if fresh:
                    self.engine.console_event(
                        "new_node",
                        frame.origin,
                        {"addr": frame.payload.get("addr", "")},
                    )
                self.originate_unicast(GATEWAY_NEW_NODE_ACK, frame.origin)
        elif kind == GATEWAY_NEW_NODE_ACK:
            self.joined = True
        elif kind in (REQ_NETWORK_STATUS, REQ_NODE_STATUS):
            if frame.origin != node.id:
                self.originate_unicast(
                    RESPONSE_TO_GATEWAY, frame.origin, self.status_payload()
                )
        elif kind == ANNOUNCE_GATEWAY:
            if frame.origin != node.id:
                newly_learned = self.gateway_id is None
                self.gateway_id = frame.origin
                self.gateway_addr = frame.payload.get("gateway_addr", self.gateway_addr)
                if newly_learned and not self.joined:
                    self._start_hello_loop()
                self.originate_unicast(
                    RESPONSE_TO_GATEWAY, frame.origin, self.status_payload()
                )
        elif kind == RESPONSE_TO_GATEWAY:
            if node.is_gateway:
                self.known_nodes.add(frame.origin)
                self.engine.console_event("node_status", frame.origin, frame.payload)
        elif kind in (SET_NETWORK_PARAM, SET_NODE_PARAM):
            self._apply_set_parameter(frame)
        elif kind == ACK_GATEWAY:
            if node.is_gateway:
                self.engine.console_event("command_ack", frame.origin, frame.payload)
        elif kind in (RESET_NODE, RESET_NETWORK):
            node.reset()

    def status_payload(self) -> dict:
        node = self.node
        return {
            "addr": node.addr,
            "latitude": node.position.latitude,
            "longitude": node.position.longitude,
            "battery_percent": node.battery_percent(),
            "dc_powered": node.energy.dc_powered,
            "backlog": node.advertised_backlog(),
            "rate_mbps": node.radio.rate_mbps,
            "power_w": node.radio.power_w,
            "is_gateway": node.is_gateway,
        }

    def _apply_set_parameter(self, frame: ControlFrame) -> None:
        command = frame.payload.get("command")
        value = frame.payload.get("value")
        node = self.node
        if command == UPDATE_DATA_RATE:
            if value not in SUPPORTED_RATES_MBPS:
                self.invalid_command_count += 1
                return
            node.radio = TransmissionStrategy(float(value), node.radio.power_w)
        elif command == UPDATE_TX_POWER:
            if not isinstance(value, (int, float)) or value < 0 or not math.isfinite(value):
                self.invalid_command_count += 1
                return
            node.radio = TransmissionStrategy(
                node.radio.rate_mbps, attenuation_to_power_w(float(value))
            )
        elif command == UPDATE_FREQUENCY:
            if not isinstance(value, (int, float)) or value <= 0:
                self.invalid_command_count += 1
                return
            node.frequency_hz = float(value)
        else:
            self.invalid_command_count += 1
            return
        # acknowledged strictly after the change took effect
        if not node.is_gateway and self.gateway_id is not None:
            self.originate_unicast(
                ACK_GATEWAY,
                self.gateway_id,
                {"command": command, "value": value, "ref_sequence": frame.sequence,
                 "ref_origin": frame.origin},
            )

    # -- join handshake -----------------------------------------------------------

    def start_join(self) -> None:
        """Announce until a neighbor names the gateway, then hello until acked."""
        if self.node.is_gateway or self.joined:
            return
        self._join_gen += 1
        self._announce_tick(self._join_gen)

    def _announce_tick(self, gen: int) -> None:
        if gen != self._join_gen or self.joined or not self.node.alive:
            return
        if self.gateway_addr is None:
            frame = self.make_frame(NEW_NODE_ANNOUNCE, BROADCAST, {"addr": self.node.addr})
            self.seen.add(frame.dedup_key())
            self.node.send_control_broadcast(frame)
            self.engine.schedule(
                round(ANNOUNCE_PERIOD_S * 1e6), lambda: self._announce_tick(gen)
            )

    def _start_hello_loop(self) -> None:
        self._join_gen += 1
        self._hello_tick(self._join_gen)

    def _hello_tick(self, gen: int) -> None:
        if gen != self._join_gen or self.joined or not self.node.alive:
            return
        self.originate_unicast(
            HELLO_GATEWAY, self.gateway_id, {"addr": self.node.addr}
        )
        self.engine.schedule(round(ANNOUNCE_PERIOD_S * 1e6), lambda: self._hello_tick(gen))

    def after_reset(self) -> None:
        """Re-run the join handshake; dedup state intentionally survives."""
        if self.node.is_gateway:
            self.joined = True
            return
        self.joined = False
        self.gateway_id = None
        self.gateway_addr = None
        self.start_join()
