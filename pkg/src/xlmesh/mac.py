"""Segment-based CSMA/CA medium access.

Data packets travel in segments of up to 32 frames that share a single
RTS/CTS exchange and one aggregated per-packet ACK bitmap; beacons and
broadcast control frames skip the handshake entirely. A next hop that
stays unresponsive through the CTS retry budget gets its segment handed
back for rerouting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import TransmissionStrategy, ValidationError
from .frames import CtsFrame, RtsFrame, SegmentAckFrame

IDLE = "idle"
WAIT_IDLE = "wait_idle"
DEFER = "defer"
AWAIT_CTS = "await_cts"
BURSTING = "bursting"
AWAIT_ACK = "await_ack"


@dataclass
class MacConfig:
    arq_enabled: bool = True
    handshake_enabled: bool = True
    cts_timeout_s: float = 0.005
    max_cts_retries: int = 7
    cw_min_slots: int = 16
    cw_max_slots: int = 1024
    slot_s: float = 20e-6
    sifs_s: float = 10e-6
    difs_s: float = 50e-6
    # per-frame radio-pipeline latency (processor <-> PHY hand-off); the
    # reason normalized throughput sits below 1.0 even on clean links
    frame_proc_s: float = 425e-6
    segment_size: int = 32
    fill_timeout_s: float = 0.1
    queue_capacity: int = 2048
    control_rate_mbps: float = 1.0
    transmit_stage_limit: int = 4

    def __post_init__(self) -> None:
        if self.cw_min_slots > self.cw_max_slots:
            raise ValidationError("contention window min must be <= max")
        for name in ("cts_timeout_s", "slot_s", "sifs_s", "difs_s", "fill_timeout_s"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")
        if not 1 <= self.segment_size <= 32:
            raise ValidationError("segment size must be in 1..32")


@dataclass
class Segment:
    """Batch of frames sharing one next hop and one RTS/CTS exchange."""

    frames: list
    next_hop: int
    dst: int
    strategy: TransmissionStrategy
    attempts: int = 0
    is_control: bool = False
    created_us: int = 0
    pending: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 1 <= len(self.frames) <= 32:
            raise ValidationError("segment must hold 1..32 frames")
        if not self.pending:
            self.pending = list(self.frames)


def _us(seconds: float) -> int:
    return round(seconds * 1e6)


class MacMachine:
    """Per-node channel access state machine.

    Owned by the engine; every method runs inside an engine event, so no
    locking. `node` supplies queues and callbacks, `engine` supplies the
    clock, timers and the medium.
    """

    def __init__(self, node, engine, config: MacConfig, rng):
        self.node = node
        self.engine = engine
        self.cfg = config
        self.rng = rng
        self.state = IDLE
        self.current: Segment | None = None
        self.current_is_control_frame = False
        self.cw = config.cw_min_slots
        self.remaining_slots = 0
        self.defer_started_us = 0
        self.round_sent: list = []
        # generation counters invalidate stale timers
        self._defer_gen = 0
        self._phase_gen = 0
        # receiver-side engagement (promised CTS, expecting a burst)
        self.engaged_with: int | None = None
        self.engaged_until_us = 0

    # -- helpers ---------------------------------------------------------

    def _schedule(self, delay_us: int, fn) -> None:
        self.engine.schedule(delay_us, fn)

    def _channel_idle(self) -> bool:
        return self.engine.medium.is_idle(self.node.id)

    def reset(self) -> None:
        self.state = IDLE
        self.current = None
        self.current_is_control_frame = False
        self.cw = self.cfg.cw_min_slots
        self.remaining_slots = 0
        self._defer_gen += 1
        self._phase_gen += 1
        self.engaged_with = None
        self.engaged_until_us = 0

    # -- job selection ----------------------------------------------------

    def kick(self) -> None:
        """Start serving the next job if the radio is free."""
        if self.state != IDLE or not self.node.alive:
            return
        if self.node.control_queue:
            self.current = None
            self.current_is_control_frame = True
            self.cw = self.cfg.cw_min_slots
            self._begin_round()
            return
        seg = self.node.peek_segment()
        if seg is None:
            return
        self.current = seg
        self.current_is_control_frame = False
        self.cw = self.cfg.cw_min_slots
        seg.attempts = 0
        self._begin_round()

    def _begin_round(self) -> None:
        self.remaining_slots = self.rng.randrange(self.cw)
        self._try_defer()

    def _try_defer(self) -> None:
        if self._channel_idle():
            self.state = DEFER
            self.defer_started_us = self.engine.now_us
            self._defer_gen += 1
            gen = self._defer_gen
            delay = _us(self.cfg.difs_s) + self.remaining_slots * _us(self.cfg.slot_s)
            self._schedule(delay, lambda: self._defer_done(gen))
        else:
            self.state = WAIT_IDLE

    def on_channel_busy(self) -> None:
        if self.state == DEFER:
            elapsed = self.engine.now_us - self.defer_started_us - _us(self.cfg.difs_s)
            if elapsed > 0:
                consumed = elapsed // _us(self.cfg.slot_s)
                self.remaining_slots = max(0, self.remaining_slots - int(consumed))
            self._defer_gen += 1
            self.state = WAIT_IDLE

    def on_channel_idle(self) -> None:
        if self.state == WAIT_IDLE:
            self._try_defer()

    def _defer_done(self, gen: int) -> None:
        if gen != self._defer_gen or self.state != DEFER:
            return
        if not self._channel_idle():
            self.state = WAIT_IDLE
            return
        if self.current_is_control_frame:
            self._send_control_frame()
        elif self.cfg.handshake_enabled:
            self._send_rts()
        else:
            self._send_burst()

    # -- control/beacon path (no handshake, no ack) ------------------------

    def _send_control_frame(self) -> None:
        if not self.node.control_queue:
            self.state = IDLE
            self.current_is_control_frame = False
            self.kick()
            return
        frame, addressed = self.node.control_queue.popleft()
        self._phase_gen += 1
        gen = self._phase_gen
        self.state = BURSTING
        self.engine.medium.transmit(
            self.node,
            [frame],
            self.cfg.control_rate_mbps,
            addressed,
            on_complete=lambda: self._control_done(gen),
        )

    def _control_done(self, gen: int) -> None:
        if gen != self._phase_gen:
            return
        self.state = IDLE
        self.current_is_control_frame = False
        self.kick()

    # -- data segment path -------------------------------------------------

    def _send_rts(self) -> None:
        seg = self.current
        self._phase_gen += 1
        gen = self._phase_gen
        self.state = AWAIT_CTS
        rts = RtsFrame(self.node.id, seg.next_hop, self._burst_duration_us(seg))
        end = self.engine.medium.transmit(
            self.node, [rts], self.cfg.control_rate_mbps, seg.next_hop
        )
        timeout = end - self.engine.now_us + _us(self.cfg.cts_timeout_s)
        self._schedule(timeout, lambda: self._handshake_timeout(gen))

    def _burst_duration_us(self, seg: Segment) -> int:
        total = 0
        for frame in seg.pending:
            total += self.engine.medium.frame_slot_us(frame, seg.strategy.rate_mbps)
        total += (len(seg.pending) - 1) * _us(self.cfg.sifs_s)
        return total

    def on_cts(self, cts: CtsFrame) -> None:
        seg = self.current
        if self.state != AWAIT_CTS or seg is None or cts.src != seg.next_hop:
            return
        self._phase_gen += 1
        self._schedule(_us(self.cfg.sifs_s), self._send_burst)
        self.state = BURSTING

    def _send_burst(self) -> None:
        seg = self.current
        if seg is None:
            self.state = IDLE
            self.kick()
            return
        if not seg.pending:
            self.node.segment_complete(seg, acked_uids=set())
            self.current = None
            self.state = IDLE
            self.kick()
            return
        self._phase_gen += 1
        gen = self._phase_gen
        self.state = BURSTING
        self.round_sent = list(seg.pending)
        for frame in self.round_sent:
            if frame.kind == "data":
                frame.last_hop = self.node.id
        self.engine.medium.transmit(
            self.node,
            self.round_sent,
            seg.strategy.rate_mbps,
            seg.next_hop,
            on_complete=lambda: self._burst_done(gen),
            power_w=seg.strategy.power_w,
            is_burst=True,
        )

    def _burst_done(self, gen: int) -> None:
        if gen != self._phase_gen:
            return
        seg = self.current
        if self.cfg.arq_enabled and self.cfg.handshake_enabled:
            self.state = AWAIT_ACK
            self._schedule(
                _us(self.cfg.cts_timeout_s), lambda: self._handshake_timeout(gen)
            )
            return
        # fire and forget: the burst is the attempt
        if self.cfg.handshake_enabled:
            self.node.reliability_sample(seg.next_hop, 1.0)
        self.node.segment_complete(seg, acked_uids=None)
        self.current = None
        self.state = IDLE
        self.kick()

    def on_segment_ack(self, ack: SegmentAckFrame) -> None:
        seg = self.current
        if self.state != AWAIT_ACK or seg is None or ack.src != seg.next_hop:
            return
        self._phase_gen += 1
        acked = set(ack.acked_uids)
        sent = self.round_sent
        sample = (sum(1 for f in sent if f.uid in acked) / len(sent)) if sent else 0.0
        self.node.reliability_sample(seg.next_hop, sample)
        seg.pending = [f for f in seg.pending if f.uid not in acked]
        if seg.pending:
            # retransmission round: fresh exchange for the missing frames
            self.cw = self.cfg.cw_min_slots
            self._begin_round()
            return
        self.node.segment_complete(seg, acked_uids=acked)
        self.current = None
        self.cw = self.cfg.cw_min_slots
        self.state = IDLE
        self.kick()

    def _handshake_timeout(self, gen: int) -> None:
        if gen != self._phase_gen or self.state not in (AWAIT_CTS, AWAIT_ACK):
            return
        seg = self.current
        seg.attempts += 1
        if seg.attempts > self.cfg.max_cts_retries:
            self.node.reliability_sample(seg.next_hop, 0.0)
            self.node.segment_abandoned(seg)
            self.current = None
            self.cw = self.cfg.cw_min_slots
            self.state = IDLE
            self.kick()
            return
        self.cw = min(self.cw * 2, self.cfg.cw_max_slots)
        self._begin_round()

    # -- receiver side ------------------------------------------------------

    def on_rts(self, rts: RtsFrame) -> None:
        if not self.node.alive or self.node.passive:
            return
        now = self.engine.now_us
        if now < self.engaged_until_us and self.engaged_with != rts.src:
            return
        if self.state in (AWAIT_CTS, BURSTING, AWAIT_ACK):
            return
        if not self._channel_idle():
            return
        cts_slot = self.engine.medium.frame_slot_us(
            CtsFrame(self.node.id, rts.src, rts.burst_us), self.cfg.control_rate_mbps
        )
        self.engaged_with = rts.src
        self.engaged_until_us = (
            now
            + _us(self.cfg.sifs_s) * 2
            + cts_slot
            + rts.burst_us
            + _us(self.cfg.cts_timeout_s)
        )
        cts = CtsFrame(self.node.id, rts.src, rts.burst_us)
        self._schedule(
            _us(self.cfg.sifs_s),
            lambda: self.engine.medium.transmit(
                self.node, [cts], self.cfg.control_rate_mbps, rts.src
            ),
        )

    def on_burst_received(self, sender_id: int, decoded_frames: list) -> None:
        """End of a data burst addressed to this node; ACK when ARQ is on."""
        if not self.node.alive or self.node.passive:
            return
        if self.engaged_with == sender_id:
            self.engaged_with = None
            self.engaged_until_us = self.engine.now_us
        if not self.cfg.arq_enabled or not self.cfg.handshake_enabled:
            return
        acked = tuple(f.uid for f in decoded_frames)
        ack = SegmentAckFrame(self.node.id, sender_id, acked)
        self._schedule(
            _us(self.cfg.sifs_s),
            lambda: self.engine.medium.transmit(
                self.node, [ack], self.cfg.control_rate_mbps, sender_id
            ),
        )
