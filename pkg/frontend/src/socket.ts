// Thin WebSocket wrapper for the gateway bridge endpoint.

import { CommandFrame, EventFrame } from "./types.js";

export interface GatewayTransport {
  send(frame: CommandFrame): void;
  close(): void;
}

export interface SocketCallbacks {
  onEvent(frame: EventFrame): void;
  onOpen(): void;
  onClose(reason: string): void;
}

export function connectGateway(
  url: string,
  callbacks: SocketCallbacks,
): GatewayTransport {
  const ws = new WebSocket(url);
  ws.onopen = () => callbacks.onOpen();
  ws.onclose = (ev) => callbacks.onClose(ev.reason || "connection closed");
  ws.onerror = () => callbacks.onClose("connection error");
  ws.onmessage = (ev) => {
    try {
      callbacks.onEvent(JSON.parse(String(ev.data)) as EventFrame);
    } catch {
      // a malformed frame from the bridge is surfaced, not fatal
      callbacks.onEvent({
        corr: "",
        event: "error",
        node: -1,
        data: { message: "unparseable frame from bridge" },
      });
    }
  };
  return {
    send(frame: CommandFrame) {
      ws.send(JSON.stringify(frame));
    },
    close() {
      ws.close();
    },
  };
}
