import { renderMap } from "./map.js";
import { renderMessageList, wireConfigForm } from "./sidebar.js";
import { connectGateway, GatewayTransport } from "./socket.js";
import { ConsoleStore } from "./store.js";
import { renderTable } from "./table.js";

const REFRESH_MS = 5000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function start(): void {
  const store = new ConsoleStore();
  let transport: GatewayTransport | null = null;

  const issue = (cmd: string, target: "all" | number, value?: unknown) => {
    const result = store.issue(cmd, target, value);
    if (!result.ok) {
      el("cfg-error").textContent = result.error ?? "invalid command";
      return;
    }
    if (transport && result.frame) {
      transport.send(result.frame);
      store.notifySent(result.frame.corr);
    }
  };

  const render = () => {
    renderTable(el("device-rows"), store.rows());
    renderMessageList(el("message-list"), store);
    renderMap(
      el<HTMLCanvasElement>("topology"),
      store.rows(),
      !store.connected,
    );
    el("conn-state").textContent = store.connected ? "connected" : "disconnected";
    el("bridge-errors").textContent = store.errors.slice(-3).join(" | ");
  };
  store.subscribe(render);

  const params = new URLSearchParams(window.location.search);
  const url = params.get("bridge") ?? "ws://127.0.0.1:8765/gateway";
  transport = connectGateway(url, {
    onEvent: (frame) => store.onEvent(frame),
    onOpen: () => {
      store.setConnected(true);
      issue("get_network_status", "all");
    },
    onClose: () => store.setConnected(false),
  });

  // periodic refresh keeps statuses, positions and the Disconnected
  // timeout honest
  window.setInterval(() => {
    store.tick();
    if (store.connected) issue("get_network_status", "all");
  }, REFRESH_MS);

  el("btn-network-status").addEventListener("click", () =>
    issue("get_network_status", "all"),
  );
  el("btn-reset-network").addEventListener("click", () => {
    if (window.confirm("Reset the whole network?")) {
      issue("reset_network", "all");
    }
  });
  el("btn-announce").addEventListener("click", () =>
    issue("announce_gateway", "all"),
  );
  el("device-rows").addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    if (target.classList.contains("row-status")) {
      issue("get_node_status", Number(target.dataset.node));
    }
  });
  wireConfigForm(el("config-form"), {
    issue,
    confirm: (q) => window.confirm(q),
  });
  render();
}

window.addEventListener("DOMContentLoaded", start);
