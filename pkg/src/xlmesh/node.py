"""Per-node protocol stack state.

Holds the two data queues (General for unrouted packets, Transmit for
routed segments), the neighbor table, beaconing, and energy
bookkeeping. All mutation happens inside engine events.
"""

from __future__ import annotations

from collections import deque

from .core import EnergyState, GeoCoordinate, TransmissionStrategy, residual_fraction
from .frames import BROADCAST, BeaconFrame, ControlFrame, DataFrame
from .mac import MacConfig, MacMachine, Segment
from .routing import (
    BATTERY_MODE,
    NeighborTable,
    SourceSnapshot,
    select_next_hop,
)

BEACON_PERIOD_S = 1.0
BEACON_JITTER = 0.1
RX_POWER_W = 0.5
IDLE_POWER_W = 0.1
NO_ROUTE_RETRY_S = 0.5


class Node:
    def __init__(
        self,
        node_id: int,
        addr: str,
        position: GeoCoordinate,
        energy: EnergyState,
        radio: TransmissionStrategy,
        engine,
        mac_config: MacConfig,
        is_gateway: bool = False,
        utility_mode: str = BATTERY_MODE,
        passive: bool = False,
    ):
        self.id = node_id
        self.addr = addr
        self.position = position
        self.energy = energy
        self.radio = radio
        self.engine = engine
        self.cfg = mac_config
        self.is_gateway = is_gateway
        self.utility_mode = utility_mode
        self.passive = passive
        self.frequency_hz = 430e6

        self.general_queue: deque[DataFrame] = deque()
        self.transmit_queue: deque[Segment] = deque()
        self.control_queue: deque[tuple] = deque()   # (frame, addressed or None)
        self.pending_control_unicast: deque[ControlFrame] = deque()
        self.neighbor_table = NeighborTable(node_id)

        self.mac = MacMachine(self, engine, mac_config, engine.rng("backoff"))
        from .control import ControlPlane

        self.control = ControlPlane(self, engine)

        self.alive = True
        self.staleness_us = engine.staleness_us
        self.backlog_offset = 0
        self.beacon_seq = 0
        self.oldest_drop_count = 0
        self.seen_uids: set[int] = set()
        self._last_energy_us = 0
        self._routing_scheduled = False

    # -- backlog ----------------------------------------------------------

    def backlog(self) -> int:
        q = len(self.general_queue)
        for seg in self.transmit_queue:
            if not seg.is_control:
                q += len(seg.pending)
        return q

    def advertised_backlog(self) -> int:
        return self.backlog() + self.backlog_offset

    def battery_percent(self) -> int:
        return int(round(residual_fraction(self.energy) * 100.0))

    # -- outbound data -----------------------------------------------------

    def enqueue_outbound(self, frames: list[DataFrame]) -> None:
        if not self.alive:
            for f in frames:
                self.engine.count_lost(f, "dead_node")
            return
        for f in frames:
            if len(self.general_queue) >= self.cfg.queue_capacity:
                victim = self.general_queue.popleft()
                self.oldest_drop_count += 1
                self.engine.count_lost(victim, "queue_overflow")
            self.general_queue.append(f)
        self.request_routing()

    def request_routing(self) -> None:
        if self._routing_scheduled or not self.alive:
            return
        self._routing_scheduled = True
        self.engine.schedule(0, self._routing_event)

    def _routing_event(self) -> None:
        self._routing_scheduled = False
        self.routing_step()

    def routing_step(self) -> None:
        """Route pending control frames, then batch data into segments."""
        if not self.alive:
            return
        progressed = False
        while self.pending_control_unicast:
            frame = self.pending_control_unicast[0]
            choice = self._route(frame.target)
            if choice is None:
                break
            next_hop, strategy = choice
            self.pending_control_unicast.popleft()
            seg = Segment(
                frames=[frame],
                next_hop=next_hop,
                dst=frame.target,
                strategy=strategy,
                is_control=True,
                created_us=self.engine.now_us,
            )
            self.transmit_queue.appendleft(seg)
            progressed = True

        while (
            self.general_queue
            and len(self.transmit_queue) < self.cfg.transmit_stage_limit
        ):
            dst = self.general_queue[0].dst
            batch = []
            for f in self.general_queue:
                if f.dst == dst:
                    batch.append(f)
                    if len(batch) == self.cfg.segment_size:
                        break
            age_us = self.engine.now_us - self.general_queue[0].injected_us
            if (
                len(batch) < self.cfg.segment_size
                and age_us < round(self.cfg.fill_timeout_s * 1e6)
            ):
                self.engine.schedule(
                    round(self.cfg.fill_timeout_s * 1e6) - age_us,
                    self.request_routing,
                )
                break
            choice = self._route(dst)
            if choice is None:
                self.engine.schedule(round(NO_ROUTE_RETRY_S * 1e6), self.request_routing)
                break
            next_hop, strategy = choice
            batch_ids = {id(f) for f in batch}
            remaining = deque(f for f in self.general_queue if id(f) not in batch_ids)
            self.general_queue = remaining
            seg = Segment(
                frames=batch,
                next_hop=next_hop,
                dst=dst,
                strategy=strategy,
                created_us=self.engine.now_us,
            )
            self.transmit_queue.append(seg)
            self.engine.log_event(
                ("route", self.engine.now_us, self.id, next_hop, dst, len(batch))
            )
            progressed = True
        if progressed:
            self.mac.kick()

    def _route(self, dst: int):
        if dst == self.id:
            return None
        dst_pos = self.engine.node_position(dst)
        snapshot = SourceSnapshot(self.position, self.advertised_backlog())
        return select_next_hop(
            self.neighbor_table,
            snapshot,
            dst,
            dst_pos,
            self.engine.rng("tiebreak"),
            mode=self.utility_mode,
            now_us=self.engine.now_us,
            staleness_us=self.staleness_us,
            strategy=self.radio,
        )

    # -- MAC callbacks ------------------------------------------------------

    def peek_segment(self) -> Segment | None:
        return self.transmit_queue[0] if self.transmit_queue else None

    def _pop_segment(self, seg: Segment) -> None:
        if self.transmit_queue and self.transmit_queue[0] is seg:
            self.transmit_queue.popleft()

    def segment_complete(self, seg: Segment, acked_uids) -> None:
        self._pop_segment(seg)
        if not self.cfg.arq_enabled and not seg.is_control:
            # without ARQ whatever the medium dropped is terminally lost;
            # the medium already counted those frames
            pass
        self.request_routing()

    def segment_abandoned(self, seg: Segment) -> None:
        """Next hop unresponsive: hand packets back for rerouting."""
        self._pop_segment(seg)
        self.engine.log_event(
            ("reroute", self.engine.now_us, self.id, seg.next_hop, len(seg.pending))
        )
        if seg.is_control:
            self.pending_control_unicast.extendleft(reversed(seg.pending))
        else:
            for f in reversed(seg.pending):
                self.general_queue.appendleft(f)
        self.request_routing()

    def reliability_sample(self, neighbor_id: int, sample: float) -> None:
        self.neighbor_table.record_delivery_sample(neighbor_id, sample)

    # -- inbound ------------------------------------------------------------

    def on_data_frames(self, sender_id: int, frames: list[DataFrame]) -> None:
        relay: list[DataFrame] = []
        for f in frames:
            if f.uid in self.seen_uids:
                continue
            self.seen_uids.add(f.uid)
            if f.dst == self.id:
                self.engine.count_delivered(f, self.id)
            else:
                relay.append(f)
        if relay:
            self.enqueue_outbound(relay)

    def on_control_frame(self, frame: ControlFrame) -> None:
        if frame.target not in (BROADCAST, self.id):
            # unicast control in transit: reroute toward its target
            if not self.alive or self.passive or frame.uid in self.seen_uids:
                return
            self.seen_uids.add(frame.uid)
            self.pending_control_unicast.append(frame)
            self.request_routing()
            return
        self.control.handle(frame)

    def on_beacon(self, beacon: BeaconFrame) -> None:
        self.neighbor_table.update_from_beacon(beacon, self.engine.now_us)
        if self.general_queue or self.pending_control_unicast:
            self.request_routing()

    # -- control transmission helpers -----------------------------------------

    def send_control_broadcast(self, frame: ControlFrame) -> None:
        if not self.alive or self.passive:
            return
        self.control_queue.append((frame, None))
        self.mac.kick()

    def send_control_rebroadcast(self, frame: ControlFrame) -> None:
        if not self.alive or self.passive:
            return
        jitter = self.engine.rng("jitter").uniform(0.0, 0.010)
        self.engine.schedule(
            round(jitter * 1e6), lambda: self._queue_rebroadcast(frame)
        )

    def _queue_rebroadcast(self, frame: ControlFrame) -> None:
        if self.alive and not self.passive:
            self.control_queue.append((frame, None))
            self.mac.kick()

    def send_control_one_hop(self, frame: ControlFrame, neighbor_id: int) -> None:
        if not self.alive or self.passive:
            return
        self.control_queue.append((frame, neighbor_id))
        self.mac.kick()

    def send_control_unicast(self, frame: ControlFrame) -> None:
        """Route a control frame like data, as its own single-frame segment."""
        if not self.alive or self.passive:
            return
        if frame.target == self.id:
            self.control.handle(frame)
            return
        frame.uid = self.engine.next_uid()
        self.pending_control_unicast.append(frame)
        self.request_routing()

    # -- beaconing -------------------------------------------------------------

    def emit_beacon(self) -> BeaconFrame | None:
        if not self.alive or self.passive:
            return None
        beacon = BeaconFrame(
            src=self.id,
            seq=self.beacon_seq,
            latitude=self.position.latitude,
            longitude=self.position.longitude,
            battery_percent=self.battery_percent(),
            backlog=self.advertised_backlog(),
            timestamp_us=self.engine.now_us,
        )
        self.beacon_seq += 1
        self.control_queue.append((beacon, None))
        self.mac.kick()
        return beacon

    # -- energy ------------------------------------------------------------------

    def touch_energy(self) -> None:
        now = self.engine.now_us
        dt = (now - self._last_energy_us) / 1e6
        self._last_energy_us = now
        if dt > 0:
            self.spend_energy(IDLE_POWER_W * dt)

    def spend_energy(self, joules: float) -> None:
        if not self.alive or self.energy.dc_powered:
            return
        self.energy.residual_j = max(0.0, self.energy.residual_j - joules)
        if self.energy.residual_j <= 0.0:
            self.die()

    def die(self) -> None:
        if not self.alive:
            return
        self.alive = False
        self.energy.residual_j = 0.0
        self.mac.reset()
        self.engine.on_node_death(self)

    # -- reset ----------------------------------------------------------------------

    def reset(self) -> None:
        """Stack restart: queues flushed, MAC and neighbor state cleared.

        Control sequence counters and dedup state survive so in-flight
        duplicates of old broadcasts stay ignored.
        """
        for seg in self.transmit_queue:
            for f in seg.pending:
                if not seg.is_control:
                    self.engine.count_lost(f, "reset")
        for f in self.general_queue:
            self.engine.count_lost(f, "reset")
        self.general_queue.clear()
        self.transmit_queue.clear()
        self.control_queue.clear()
        self.pending_control_unicast.clear()
        self.neighbor_table.clear()
        self.backlog_offset = 0
        self.mac.reset()
        self.engine.log_event(("reset", self.engine.now_us, self.id))
        self.control.after_reset()
