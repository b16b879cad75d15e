"""Live operator bridge.

Exposes the running simulation's gateway over a message-framed channel:
a WebSocket endpoint (path /gateway) for browser consoles plus a raw TCP
mode carrying identical JSON frames (ASCII decimal byte length, newline,
then the JSON body). The bridge never touches node state directly; every
inbound command becomes an operator-command event at the gateway, so a
replay of the recorded command log reproduces the session exactly.

Inbound frame:  {"corr": str, "cmd": str, "target": "all"|id, "args": {}}
Outbound frame: {"corr": str, "event": str, "node": id, "data": {}}
"""

from __future__ import annotations

import asyncio
import json
import threading

from .core import SUPPORTED_RATES_MBPS
from . import control as ctl
from .engine import Engine

COMMANDS = {
    "get_network_status": (ctl.REQ_NETWORK_STATUS, "broadcast"),
    "get_node_status": (ctl.REQ_NODE_STATUS, "unicast"),
    "announce_gateway": (ctl.ANNOUNCE_GATEWAY, "broadcast"),
    "set_data_rate": (None, "set"),
    "set_tx_power": (None, "set"),
    "set_frequency": (None, "set"),
    "reset_node": (ctl.RESET_NODE, "unicast"),
    "reset_network": (ctl.RESET_NETWORK, "broadcast"),
}

_SET_COMMANDS = {
    "set_data_rate": ctl.UPDATE_DATA_RATE,
    "set_tx_power": ctl.UPDATE_TX_POWER,
    "set_frequency": ctl.UPDATE_FREQUENCY,
}

# console events correlated to the last command of each class
_EVENT_CORR_CLASS = {
    "node_status": "status",
    "gateway_status": "status",
    "command_ack": "set",
    "new_node": None,
}


class BridgeError(ValueError):
    pass


def validate_command(frame: dict, node_ids: set[int]) -> dict:
    """Translate one console frame into operator-command params.

    Raises BridgeError on anything malformed; nothing is injected then.
    """
    if not isinstance(frame, dict):
        raise BridgeError("frame must be a JSON object")
    cmd = frame.get("cmd")
    if cmd not in COMMANDS:
        raise BridgeError(f"unknown command {cmd!r}")
    target = frame.get("target", "all")
    kind, mode = COMMANDS[cmd]
    if mode == "unicast" or (mode == "set" and target != "all"):
        try:
            target_id = int(target)
        except (TypeError, ValueError):
            raise BridgeError(f"command {cmd} needs a node id target")
        if target_id not in node_ids:
            raise BridgeError(f"unknown node {target_id}")
        target = target_id
    elif target != "all":
        try:
            target = int(target)
        except (TypeError, ValueError):
            raise BridgeError(f"bad target {target!r}")
        if target not in node_ids:
            raise BridgeError(f"unknown node {target}")
    args = frame.get("args", {}) or {}
    if mode == "set":
        command = _SET_COMMANDS[cmd]
        value = args.get("value")
        if command == ctl.UPDATE_DATA_RATE and value not in SUPPORTED_RATES_MBPS:
            raise BridgeError(
                f"data rate must be one of {sorted(SUPPORTED_RATES_MBPS)}"
            )
        if command in (ctl.UPDATE_TX_POWER, ctl.UPDATE_FREQUENCY):
            if not isinstance(value, (int, float)) or value < 0:
                raise BridgeError(f"{cmd} needs a non-negative numeric value")
        kind = ctl.SET_NETWORK_PARAM if target == "all" else ctl.SET_NODE_PARAM
        payload = {"command": command, "value": value}
    elif cmd == "announce_gateway":
        payload = {}
        kind = ctl.ANNOUNCE_GATEWAY
    else:
        payload = dict(args)
    return {"kind": kind, "target": target, "payload": payload}


def _corr_class(cmd: str) -> str | None:
    if cmd in ("get_network_status", "get_node_status", "announce_gateway"):
        return "status"
    if cmd in _SET_COMMANDS or cmd in ("reset_node", "reset_network"):
        return "set"
    return None


class Bridge:
    """Correlation router between console connections and the engine."""

    def __init__(self, engine: Engine, loop: asyncio.AbstractEventLoop):
        self.engine = engine
        self.loop = loop
        self.node_ids = set(engine.nodes)
        self.clients: set[asyncio.Queue] = set()
        self.last_corr: dict[str, str] = {}
        self.command_log: list[dict] = []
        engine.console_sinks.append(self._on_console_event)

    # engine thread -> asyncio
    def _on_console_event(self, kind: str, node_id: int, data: dict) -> None:
        corr_class = _EVENT_CORR_CLASS.get(kind)
        corr = self.last_corr.get(corr_class, "") if corr_class else ""
        frame = {"corr": corr, "event": kind, "node": node_id, "data": data}
        self.loop.call_soon_threadsafe(self._fanout, frame)

    def _fanout(self, frame: dict) -> None:
        for q in list(self.clients):
            q.put_nowait(frame)

    def attach(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue()
        self.clients.add(q)
        return q

    def detach(self, q: asyncio.Queue) -> None:
        self.clients.discard(q)

    def handle_inbound(self, text: str) -> dict | None:
        """Validate and inject one inbound frame; returns an error frame
        to send back, or None on success."""
        try:
            frame = json.loads(text)
        except json.JSONDecodeError as exc:
            return {"corr": "", "event": "error", "node": -1,
                    "data": {"message": f"bad JSON: {exc}"}}
        corr = str(frame.get("corr", "")) if isinstance(frame, dict) else ""
        try:
            params = validate_command(frame, self.node_ids)
        except BridgeError as exc:
            return {"corr": corr, "event": "error", "node": -1,
                    "data": {"message": str(exc)}}
        corr_class = _corr_class(frame.get("cmd"))
        if corr_class:
            self.last_corr[corr_class] = corr
        self.command_log.append({"params": params, "corr": corr})
        self.engine.post_command(params)
        return None


def _encode_tcp(frame: dict) -> bytes:
    body = json.dumps(frame, separators=(",", ":")).encode()
    return str(len(body)).encode() + b"\n" + body


async def _read_tcp_frame(reader: asyncio.StreamReader) -> str | None:
    """One length-delimited frame as text; None on EOF or broken framing."""
    try:
        header = await reader.readline()
    except (ConnectionResetError, asyncio.IncompleteReadError):
        return None
    if not header:
        return None
    try:
        length = int(header.strip())
        if not 0 <= length <= 1_000_000:
            return None
        body = await reader.readexactly(length)
    except (ValueError, asyncio.IncompleteReadError):
        return None
    return body.decode("utf-8", errors="replace")


async def serve_async(
    engine: Engine,
    host: str = "127.0.0.1",
    ws_port: int = 8765,
    tcp_port: int | None = None,
    pace_ratio: float = 1.0,
    ready: asyncio.Event | None = None,
):
    """Run the engine live (worker thread) and serve console connections
    until the simulation finishes or the task is cancelled."""
    import websockets

    loop = asyncio.get_running_loop()
    bridge = Bridge(engine, loop)
    stop_event = threading.Event()
    done = loop.create_future()

    def _run_engine():
        try:
            report = engine.run_live(pace_ratio=pace_ratio, stop_event=stop_event)
            loop.call_soon_threadsafe(done.set_result, report)
        except BaseException as exc:  # surface engine crashes to the server
            loop.call_soon_threadsafe(done.set_exception, exc)

    worker = threading.Thread(target=_run_engine, daemon=True)
    worker.start()

    async def _pump(outq: asyncio.Queue, send):
        while True:
            frame = await outq.get()
            await send(frame)

    async def ws_handler(websocket):
        if getattr(websocket, "request", None) is not None:
            path = websocket.request.path
            if path.rstrip("/") not in ("", "/gateway"):
                await websocket.close(code=4004, reason="unknown path")
                return
        outq = bridge.attach()
        pump = asyncio.create_task(
            _pump(outq, lambda f: websocket.send(json.dumps(f)))
        )
        try:
            async for message in websocket:
                reply = bridge.handle_inbound(message)
                if reply is not None:
                    await websocket.send(json.dumps(reply))
        finally:
            pump.cancel()
            bridge.detach(outq)

    async def tcp_handler(reader, writer):
        outq = bridge.attach()

        async def send(frame):
            writer.write(_encode_tcp(frame))
            await writer.drain()

        pump = asyncio.create_task(_pump(outq, send))
        try:
            while True:
                text = await _read_tcp_frame(reader)
                if text is None:
                    break
                reply = bridge.handle_inbound(text)
                if reply is not None:
                    await send(reply)
        finally:
            pump.cancel()
            bridge.detach(outq)
            writer.close()

    tcp_port = ws_port + 1 if tcp_port is None else tcp_port
    ws_server = await websockets.serve(ws_handler, host, ws_port)
    tcp_server = await asyncio.start_server(tcp_handler, host, tcp_port)
    if ready is not None:
        ready.set()
    try:
        report = await done
        return report, bridge.command_log
    finally:
        stop_event.set()
        ws_server.close()
        tcp_server.close()
        await ws_server.wait_closed()
        await tcp_server.wait_closed()
        worker.join(timeout=5.0)


def serve_blocking(scenario, seed=None, host="127.0.0.1", ws_port=8765,
                   pace_ratio=1.0):
    engine = Engine(scenario, seed=seed)
    print(f"bridge: ws://{host}:{ws_port}/gateway  tcp://{host}:{ws_port + 1}  "
          f"pace={pace_ratio}x  scenario={scenario.name}")
    report, _log = asyncio.run(serve_async(engine, host, ws_port,
                                           pace_ratio=pace_ratio))
    rel = "-" if report.reliability is None else f"{report.reliability:.3f}"
    print(f"finished: sent={report.sent} received={report.received} reliability={rel}")
    return report


def replay_command_log(engine: Engine, command_log: list[dict]) -> None:
    """Queue a recorded command log for an exact headless replay."""
    for entry in command_log:
        engine.queue_replay_command(entry["events"], entry["params"])
