"""Deterministic discrete-event simulation core.

Single event heap ordered by (time, insertion order); integer
microsecond clock; one seeded RNG stream per stochastic purpose so a new
draw in one subsystem never perturbs another. The Medium models
propagation: per-power decode/carrier-sense radius, per-frame loss
draws, and overlap collisions at common receivers (both frames lost, no
capture).
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
import threading
import time as _time

from .core import GeoCoordinate, haversine_distance
from .frames import frame_bytes
from .node import BEACON_JITTER, BEACON_PERIOD_S, RX_POWER_W, Node
from .phy import MAC_HEADER_BYTES, airtime, calibrate, default_link_model
from .routing import NeighborRecord

ENERGY_SAMPLE_PERIOD_S = 10.0
SATURATE_TICK_S = 0.02
SATURATE_DEPTH = 256
_PRUNE_HORIZON_US = 3_000_000


class ScenarioError(ValueError):
    pass


class _Transmission:
    __slots__ = (
        "sender_id", "frames", "rate", "power_w", "addressed",
        "t0", "t1", "windows", "bumped", "on_complete", "air_s", "is_burst",
    )

    def __init__(self, sender_id, frames, rate, power_w, addressed, t0):
        self.sender_id = sender_id
        self.frames = frames
        self.rate = rate
        self.power_w = power_w
        self.addressed = addressed
        self.t0 = t0
        self.t1 = t0
        self.windows: list[tuple[int, int]] = []
        self.bumped: list[int] = []
        self.on_complete = None
        self.air_s = 0.0
        self.is_burst = False


class Medium:
    def __init__(self, engine, link_model):
        self.engine = engine
        self.model = link_model
        self.busy: dict[int, int] = {}
        self.records: list[_Transmission] = []

    # -- frame geometry ----------------------------------------------------

    def wire_bytes(self, frame) -> int:
        if frame.kind == "data":
            return frame.payload_bytes + MAC_HEADER_BYTES
        return frame_bytes(frame)

    def loss_bytes(self, frame) -> int:
        if frame.kind == "data":
            return frame.payload_bytes
        return frame_bytes(frame)

    def frame_air_s(self, frame, rate_mbps: float) -> float:
        return airtime(rate_mbps, self.wire_bytes(frame))

    def frame_slot_us(self, frame, rate_mbps: float) -> int:
        proc = self.engine.mac_cfg.frame_proc_s
        return round((self.frame_air_s(frame, rate_mbps) + proc) * 1e6)

    # -- carrier sense -------------------------------------------------------

    def is_idle(self, node_id: int) -> bool:
        return self.busy.get(node_id, 0) == 0

    def _senses(self, sender, power_w: float, other) -> bool:
        d = haversine_distance(sender.position, other.position)
        return self.model.in_range(d, power_w)

    # -- transmission ----------------------------------------------------------

    def transmit(self, sender, frames, rate_mbps, addressed=None,
                 on_complete=None, power_w=None, is_burst=False):
        if not sender.alive:
            return self.engine.now_us
        power = sender.radio.power_w if power_w is None else power_w
        now = self.engine.now_us
        rec = _Transmission(sender.id, list(frames), rate_mbps, power, addressed, now)
        rec.on_complete = on_complete
        rec.is_burst = is_burst
        sifs_us = round(self.engine.mac_cfg.sifs_s * 1e6)
        t = now
        for frame in frames:
            slot = self.frame_slot_us(frame, rate_mbps)
            rec.windows.append((t, t + slot))
            rec.air_s += self.frame_air_s(frame, rate_mbps)
            t += slot + sifs_us
        rec.t1 = rec.windows[-1][1]

        sender.touch_energy()
        sender.spend_energy(power * rec.air_s)

        rec.bumped = [sender.id]
        for nid in self.engine.node_order:
            other = self.engine.nodes[nid]
            if nid == sender.id or not other.alive:
                continue
            if self._senses(sender, power, other):
                rec.bumped.append(nid)
        for nid in rec.bumped:
            count = self.busy.get(nid, 0)
            self.busy[nid] = count + 1
            if count == 0:
                self.engine.nodes[nid].mac.on_channel_busy()

        self.records.append(rec)
        self._prune()
        self.engine.schedule(rec.t1 - now, lambda: self._end(rec))
        return rec.t1

    def _prune(self) -> None:
        horizon = self.engine.now_us - _PRUNE_HORIZON_US
        if self.records and self.records[0].t1 < horizon:
            self.records = [r for r in self.records if r.t1 >= horizon]

    def _end(self, rec: _Transmission) -> None:
        went_idle = []
        for nid in rec.bumped:
            self.busy[nid] = self.busy.get(nid, 1) - 1
            if self.busy[nid] == 0:
                went_idle.append(nid)

        if rec.addressed is not None:
            targets = [rec.addressed] if rec.addressed in self.engine.nodes else []
        else:
            targets = [n for n in self.engine.node_order if n != rec.sender_id]
        for nid in targets:
            node = self.engine.nodes[nid]
            if node.alive and nid != rec.sender_id:
                self._receive(rec, node)

        for nid in went_idle:
            node = self.engine.nodes.get(nid)
            if node is not None and node.alive:
                node.mac.on_channel_idle()

        if rec.on_complete is not None:
            rec.on_complete()

    def _interfered(self, node_id: int, f0: int, f1: int, rec: _Transmission) -> bool:
        for other in self.records:
            if other is rec:
                continue
            if other.t1 <= f0 or other.t0 >= f1:
                continue
            if other.sender_id == node_id:
                return True
            tx_node = self.engine.nodes.get(other.sender_id)
            if tx_node is None:
                continue
            d = haversine_distance(
                tx_node.position, self.engine.nodes[node_id].position
            )
            if self.model.in_range(d, other.power_w):
                return True
        return False

    def _receive(self, rec: _Transmission, node: Node) -> None:
        sender = self.engine.nodes.get(rec.sender_id)
        if sender is None:
            return
        d = haversine_distance(sender.position, node.position)
        eff = self.model.effective_distance(d, rec.power_w)
        if eff > self.model.max_range_m:
            return
        node.touch_energy()
        node.spend_energy(RX_POWER_W * rec.air_s)
        rng = self.engine.rng("phy")
        decoded = []
        arq = self.engine.mac_cfg.arq_enabled
        for frame, (f0, f1) in zip(rec.frames, rec.windows):
            if self._interfered(node.id, f0, f1, rec):
                ok = False
            else:
                p = self.model.packet_success_prob(eff, rec.rate, self.loss_bytes(frame))
                ok = rng.random() < p
            if ok:
                decoded.append(frame)
            elif frame.kind == "data" and rec.addressed == node.id and not arq:
                self.engine.count_lost(frame, "rf_loss")
        self._dispatch(rec, node, decoded)

    def _dispatch(self, rec, node: Node, decoded: list) -> None:
        data = [f for f in decoded if f.kind == "data"]
        if data:
            node.on_data_frames(rec.sender_id, data)
        if rec.is_burst and rec.addressed == node.id:
            node.mac.on_burst_received(rec.sender_id, decoded)
        for frame in decoded:
            k = frame.kind
            if k == "beacon":
                node.on_beacon(frame)
            elif k == "rts" and frame.dst == node.id:
                node.mac.on_rts(frame)
            elif k == "cts" and frame.dst == node.id:
                node.mac.on_cts(frame)
            elif k == "seg_ack" and frame.dst == node.id:
                node.mac.on_segment_ack(frame)
            elif k == "control":
                node.on_control_frame(frame)


class _SessionStats:
    __slots__ = ("sent", "delivered", "delivered_window_bits", "spec")

    def __init__(self, spec):
        self.spec = spec
        self.sent = 0
        self.delivered = 0
        self.delivered_window_bits = 0


class Engine:
    def __init__(self, scenario, seed: int | None = None):
        from .scenarios import validate_scenario

        validate_scenario(scenario)
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.now_us = 0
        self.duration_us = round(scenario.duration_s * 1e6)
        self._heap: list = []
        self._heap_seq = 0
        self._rngs: dict[str, random.Random] = {}
        self.mac_cfg = scenario.mac
        self.staleness_us = round(scenario.staleness_s * 1e6)
        if scenario.calibration_table is not None:
            self.link_model = calibrate(list(scenario.calibration_table))
        else:
            self.link_model = default_link_model()
        self.medium = Medium(self, self.link_model)

        self.nodes: dict[int, Node] = {}
        for spec in scenario.nodes:
            node = Node(
                node_id=spec.id,
                addr=spec.addr,
                position=spec.position,
                energy=spec.make_energy(),
                radio=scenario.radio,
                engine=self,
                mac_config=scenario.mac,
                is_gateway=spec.gateway,
                utility_mode=spec.utility_mode or scenario.utility_mode,
                passive=spec.id in scenario.passive_receivers,
            )
            if spec.staleness_s is not None:
                node.staleness_us = round(spec.staleness_s * 1e6)
            self.nodes[spec.id] = node
        self.node_order = sorted(self.nodes)
        self.gateway_id = next(s.id for s in scenario.nodes if s.gateway)

        self._uid = 0
        self.session_stats = [_SessionStats(s) for s in scenario.sessions]
        self.deliveries: list[tuple[int, int, int | None, int]] = []
        self.lost: dict[str, int] = {}
        self.lost_total = 0
        self.injected_total = 0
        self.event_log: list[tuple] = []
        self.energy_samples: list[tuple[int, int, float]] = []
        self.network_lifetime_us: int | None = None
        self.console_sinks: list = []
        self._command_queue: list = []
        self._command_lock = threading.Lock()
        self._started = False
        self.events_processed = 0
        self.command_log: list[dict] = []
        self._replay_commands: list[tuple[int, dict]] = []

    # -- infrastructure ------------------------------------------------------

    def rng(self, name: str) -> random.Random:
        r = self._rngs.get(name)
        if r is None:
            digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
            r = random.Random(int.from_bytes(digest[:8], "big"))
            self._rngs[name] = r
        return r

    def schedule(self, delay_us: int, fn) -> None:
        at = self.now_us + max(0, int(delay_us))
        if at > self.duration_us:
            return
        self._heap_seq += 1
        heapq.heappush(self._heap, (at, self._heap_seq, fn))

    def next_uid(self) -> int:
        self._uid += 1
        return self._uid

    def node_position(self, node_id: int) -> GeoCoordinate:
        return self.nodes[node_id].position

    def log_event(self, event: tuple) -> None:
        self.event_log.append(event)

    def log_control(self, node_id: int, frame) -> None:
        self.event_log.append(
            ("control", self.now_us, node_id, frame.ckind, frame.origin, frame.sequence)
        )

    def console_event(self, kind: str, node_id: int, data: dict) -> None:
        self.event_log.append(("console", self.now_us, kind, node_id))
        for sink in self.console_sinks:
            sink(kind, node_id, data)

    # -- accounting -------------------------------------------------------------

    def count_delivered(self, frame, at_node: int) -> None:
        relay = frame.last_hop if frame.last_hop not in (frame.src, -1) else None
        self.deliveries.append((self.now_us, frame.session, relay, frame.uid))
        if 0 <= frame.session < len(self.session_stats):
            stats = self.session_stats[frame.session]
            stats.delivered += 1
            w0, w1 = self._measure_window_us(stats.spec)
            stamp = (
                frame.injected_us
                if self.scenario.measure_by == "injection"
                else self.now_us
            )
            if w0 <= stamp <= w1:
                stats.delivered_window_bits += 8 * frame.payload_bytes
        self.event_log.append(
            ("deliver", self.now_us, frame.uid, at_node, relay, frame.session)
        )

    def count_lost(self, frame, reason: str) -> None:
        if frame.kind != "data":
            return
        self.lost_total += 1
        self.lost[reason] = self.lost.get(reason, 0) + 1

    def _measure_window_us(self, session_spec) -> tuple[int, int]:
        w0 = round(self.scenario.measure_start_s * 1e6)
        stop = session_spec.stop_s
        if self.scenario.measure_stop_s is not None:
            stop = self.scenario.measure_stop_s
        return w0, round(stop * 1e6)

    def on_node_death(self, node: Node) -> None:
        if self.network_lifetime_us is None:
            self.network_lifetime_us = self.now_us
        self.event_log.append(("death", self.now_us, node.id))

    # -- setup --------------------------------------------------------------------

    def _setup(self) -> None:
        self._started = True
        scenario = self.scenario
        gw = self.nodes[self.gateway_id]

        if scenario.neighbor_override:
            for nid, allowed in scenario.neighbor_override.items():
                table = self.nodes[nid].neighbor_table
                table.allowed = set(allowed)
                for other_id in allowed:
                    other = self.nodes[other_id]
                    table.records[other_id] = NeighborRecord(
                        node_id=other_id,
                        position=other.position,
                        backlog=0,
                        battery_percent=other.battery_percent(),
                        last_heard_us=0,
                    )

        if scenario.pre_joined:
            for node in self.nodes.values():
                node.control.joined = True
                node.control.gateway_id = gw.id
                node.control.gateway_addr = gw.addr
                if node.is_gateway:
                    node.control.known_nodes = set(self.node_order)
        else:
            jitter = self.rng("jitter")
            for nid in self.node_order:
                node = self.nodes[nid]
                if not node.is_gateway and not node.passive:
                    self.schedule(
                        round(jitter.uniform(0.05, 0.5) * 1e6), node.control.start_join
                    )

        jitter = self.rng("jitter")
        for nid in self.node_order:
            node = self.nodes[nid]
            if node.passive:
                continue
            self.schedule(round(jitter.uniform(0.0, BEACON_PERIOD_S) * 1e6),
                          lambda n=node: self._beacon_tick(n))

        for idx, session in enumerate(scenario.sessions):
            if session.saturate:
                self.schedule(round(session.start_s * 1e6) + idx * 997,
                              lambda i=idx: self._saturate_tick(i))
            else:
                self.schedule(round(session.start_s * 1e6) + idx * 997,
                              lambda i=idx: self._traffic_tick(i))

        for pert in scenario.perturbations:
            self.schedule(round(pert.at_s * 1e6), lambda p=pert: self._apply_perturbation(p))

        self.schedule(round(ENERGY_SAMPLE_PERIOD_S * 1e6), self._energy_sample_tick)

    def _beacon_tick(self, node: Node) -> None:
        if not node.alive:
            return
        node.touch_energy()
        node.emit_beacon()
        jitter = self.rng("jitter")
        period = BEACON_PERIOD_S * (1.0 + BEACON_JITTER * (2.0 * jitter.random() - 1.0))
        self.schedule(round(period * 1e6), lambda: self._beacon_tick(node))

    def _inject(self, session_idx: int, count: int = 1) -> None:
        spec = self.scenario.sessions[session_idx]
        node = self.nodes[spec.src]
        stats = self.session_stats[session_idx]
        if spec.max_packets is not None:
            count = min(count, spec.max_packets - stats.sent)
            if count <= 0:
                return
        frames = []
        for _ in range(count):
            frames.append(
                _make_data_frame(
                    self.next_uid(), spec.src, spec.dst, spec.payload_bytes,
                    self.now_us, session_idx,
                )
            )
        stats.sent += len(frames)
        self.injected_total += len(frames)
        node.enqueue_outbound(frames)

    def _traffic_tick(self, session_idx: int) -> None:
        spec = self.scenario.sessions[session_idx]
        if self.now_us > round(spec.stop_s * 1e6):
            return
        self._inject(session_idx, 1)
        self.schedule(round(1e6 / spec.pps), lambda: self._traffic_tick(session_idx))

    def _saturate_tick(self, session_idx: int) -> None:
        spec = self.scenario.sessions[session_idx]
        stats = self.session_stats[session_idx]
        if self.now_us > round(spec.stop_s * 1e6):
            return
        if spec.max_packets is not None and stats.sent >= spec.max_packets:
            return
        node = self.nodes[spec.src]
        deficit = SATURATE_DEPTH - node.backlog()
        if deficit > 0:
            self._inject(session_idx, deficit)
        self.schedule(round(SATURATE_TICK_S * 1e6), lambda: self._saturate_tick(session_idx))

    def _energy_sample_tick(self) -> None:
        for nid in self.node_order:
            node = self.nodes[nid]
            node.touch_energy()
            self.energy_samples.append((self.now_us, nid, node.energy.residual_j))
        self.schedule(round(ENERGY_SAMPLE_PERIOD_S * 1e6), self._energy_sample_tick)

    def inject_perturbation(self, pert) -> None:
        """Schedule a perturbation onto a running engine."""
        if pert.node not in self.nodes:
            raise ScenarioError(f"perturbation targets unknown node {pert.node}")
        at = round(pert.at_s * 1e6)
        self.schedule(max(0, at - self.now_us), lambda: self._apply_perturbation(pert))

    def _apply_perturbation(self, pert) -> None:
        node = self.nodes[pert.node]
        self.event_log.append(("perturb", self.now_us, pert.kind, pert.node))
        if pert.kind == "set_backlog":
            node.backlog_offset = int(pert.params["packets"])
        elif pert.kind == "set_battery":
            node.touch_energy()
            pct = float(pert.params["percent"])
            node.energy.residual_j = node.energy.initial_j * pct / 100.0
            node.energy.dc_powered = bool(pert.params.get("dc", False))
            if node.energy.residual_j <= 0:
                node.die()
        elif pert.kind == "move_node":
            node.position = GeoCoordinate(
                float(pert.params["latitude"]), float(pert.params["longitude"])
            )
        elif pert.kind == "kill_node":
            node.touch_energy()
            node.energy.dc_powered = False
            node.energy.residual_j = 0.0
            node.die()
        elif pert.kind == "operator_command":
            self.inject_operator_command(pert.params)
        else:
            raise ScenarioError(f"unknown perturbation kind {pert.kind!r}")

    # -- operator commands (bridge) --------------------------------------------------

    def post_command(self, params: dict) -> None:
        """Thread-safe entry: queue an operator command for injection."""
        with self._command_lock:
            self._command_queue.append(params)

    def _drain_commands(self) -> None:
        with self._command_lock:
            pending, self._command_queue = self._command_queue, []
        for params in pending:
            self.inject_operator_command(params)

    def queue_replay_command(self, at_events: int, params: dict) -> None:
        """Schedule a command to be injected once `at_events` events have
        been processed; replays a recorded live session exactly."""
        self._replay_commands.append((at_events, params))
        self._replay_commands.sort(key=lambda t: t[0])

    def _drain_replay(self) -> None:
        while self._replay_commands and self._replay_commands[0][0] <= self.events_processed:
            _at, params = self._replay_commands.pop(0)
            self.inject_operator_command(params)

    def inject_operator_command(self, params: dict) -> None:
        self.command_log.append(
            {"events": self.events_processed, "t_us": self.now_us, "params": params}
        )
        gw = self.nodes[self.gateway_id]
        kind = params["kind"]
        target = params.get("target", "all")
        payload = dict(params.get("payload", {}))
        if kind in ("req_network_status", "announce_gateway") or (
            kind == "req_node_status" and target == gw.id
        ):
            # the gateway answers the console for itself directly; other
            # nodes' statuses arrive over the air as node_status events
            self.console_event("gateway_status", gw.id, gw.control.status_payload())
        if target == "all":
            gw.control.originate_broadcast(kind, payload)
        else:
            target = int(target)
            if target == gw.id:
                frame = gw.control.make_frame(kind, target, payload)
                gw.control.handle(frame)
            else:
                gw.control.originate_unicast(kind, target, payload)

    # -- main loops ------------------------------------------------------------------

    def run(self):
        from .metrics import build_report

        if not self._started:
            self._setup()
        heap = self._heap
        while heap:
            if self._replay_commands:
                self._drain_replay()
            at, _seq, fn = heapq.heappop(heap)
            if at > self.duration_us:
                break
            self.now_us = at
            fn()
            self.events_processed += 1
            if self._command_queue:
                self._drain_commands()
        self.now_us = self.duration_us
        for nid in self.node_order:
            self.nodes[nid].touch_energy()
        return build_report(self)

    def run_live(self, pace_ratio: float = 1.0, stop_event: threading.Event | None = None):
        """Drain events no faster than the wall clock mapped by pace_ratio
        (simulated seconds per wall second). Used by the operator bridge."""
        from .metrics import build_report

        if not self._started:
            self._setup()
        heap = self._heap
        wall_start = _time.monotonic()
        sim_start = self.now_us
        while heap:
            if stop_event is not None and stop_event.is_set():
                break
            self._drain_commands()
            if self._replay_commands:
                self._drain_replay()
            at = heap[0][0]
            if at > self.duration_us:
                break
            allowed = sim_start + (_time.monotonic() - wall_start) * pace_ratio * 1e6
            if at > allowed:
                _time.sleep(min(0.02, (at - allowed) / (pace_ratio * 1e6)))
                continue
            at, _seq, fn = heapq.heappop(heap)
            self.now_us = at
            fn()
            self.events_processed += 1
        self.now_us = min(self.duration_us, self.now_us)
        for nid in self.node_order:
            self.nodes[nid].touch_energy()
        return build_report(self)

    # -- export ------------------------------------------------------------------------

    def event_log_lines(self) -> list[str]:
        return [json.dumps(e, separators=(",", ":")) for e in self.event_log]

    def event_log_hash(self) -> str:
        h = hashlib.sha256()
        for line in self.event_log_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


def _make_data_frame(uid, src, dst, payload_bytes, now_us, session):
    from .frames import DataFrame

    return DataFrame(
        uid=uid, src=src, dst=dst, payload_bytes=payload_bytes,
        injected_us=now_us, session=session,
    )
