// Single source of truth for the console. Every rendered fact traces to
// a bridge frame; the store never invents node state.

import {
  BatteryBar,
  CommandFrame,
  DATA_RATES,
  DeviceRow,
  EventFrame,
  MessageEntry,
  NodeStatusData,
  Target,
} from "./types.js";

export interface IssueResult {
  ok: boolean;
  error?: string;
  frame?: CommandFrame;
  entry?: MessageEntry;
}

const SET_COMMANDS = new Set(["set_data_rate", "set_tx_power", "set_frequency"]);
const STATUS_COMMANDS = new Set([
  "get_network_status",
  "get_node_status",
  "announce_gateway",
]);

export function batteryBar(data: Partial<NodeStatusData>): BatteryBar {
  const pct = data.battery_percent;
  if (pct === null || pct === undefined) {
    return "none"; // DC only, no battery installed
  }
  return data.dc_powered ? "grey" : "green";
}

export class ConsoleStore {
  devices = new Map<number, DeviceRow>();
  messages: MessageEntry[] = [];
  errors: string[] = [];
  connected = false;

  private corrCounter = 0;
  private listeners: Array<() => void> = [];

  constructor(
    private now: () => number = () => Date.now(),
    public statusTimeoutMs = 5000,
  ) {}

  subscribe(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  setConnected(up: boolean): void {
    this.connected = up;
    this.emit();
  }

  // -- outbound ------------------------------------------------------------

  validate(cmd: string, target: Target, value?: unknown): string | null {
    if (cmd === "set_data_rate" && !DATA_RATES.includes(Number(value))) {
      return `data rate must be one of ${DATA_RATES.join(", ")}`;
    }
    if (
      (cmd === "set_tx_power" || cmd === "set_frequency") &&
      (typeof value !== "number" || !isFinite(value) || value < 0)
    ) {
      return `${cmd} needs a non-negative number`;
    }
    if (
      (cmd === "get_node_status" || cmd === "reset_node") &&
      target === "all"
    ) {
      return `${cmd} needs a node target`;
    }
    return null;
  }

  issue(cmd: string, target: Target, value?: unknown): IssueResult {
    const error = this.validate(cmd, target, value);
    if (error) {
      return { ok: false, error };
    }
    const corr = `c${++this.corrCounter}`;
    const frame: CommandFrame = {
      corr,
      cmd,
      target,
      args: value === undefined ? {} : { value },
    };
    const entry: MessageEntry = {
      corr,
      command: cmd,
      target,
      state: "sent",
      sentAt: this.now(),
      pendingAt: null,
      successAt: null,
    };
    this.messages.push(entry);
    this.emit();
    return { ok: true, frame, entry };
  }

  // the transport confirms the frame left for the gateway
  notifySent(corr: string): void {
    const entry = this.messages.find((m) => m.corr === corr);
    if (entry && entry.state === "sent") {
      entry.state = "pending";
      entry.pendingAt = this.now();
      this.emit();
    }
  }

  // -- inbound ---------------------------------------------------------------

  onEvent(frame: EventFrame): void {
    if (frame.event === "error") {
      this.errors.push(String(frame.data.message ?? "unknown bridge error"));
      this.emit();
      return;
    }
    if (frame.event === "node_status" || frame.event === "gateway_status") {
      this.upsertDevice(frame.node, frame.data as Partial<NodeStatusData>);
    } else if (frame.event === "new_node") {
      this.touchDevice(frame.node, String(frame.data.addr ?? ""));
    }
    this.resolveMessages(frame);
    this.emit();
  }

  private resolveMessages(frame: EventFrame): void {
    for (const entry of this.messages) {
      if (entry.state === "success" || entry.corr !== frame.corr) continue;
      if (STATUS_COMMANDS.has(entry.command) && frame.event === "node_status") {
        // unicast status resolves on that node's own over-the-air
        // response; broadcast resolves on the first response from any
        // node (the gateway's own local echo does not count)
        if (entry.target === "all" || entry.target === frame.node) {
          this.succeed(entry);
        }
      } else if (SET_COMMANDS.has(entry.command) && frame.event === "command_ack") {
        if (entry.target === "all" || entry.target === frame.node) {
          this.succeed(entry);
        }
      }
    }
  }

  private succeed(entry: MessageEntry): void {
    if (entry.state === "sent") {
      entry.pendingAt = this.now();
    }
    entry.state = "success";
    entry.successAt = this.now();
  }

  private upsertDevice(nodeId: number, data: Partial<NodeStatusData>): void {
    const row: DeviceRow = this.devices.get(nodeId) ?? {
      nodeId,
      addr: "",
      status: "connected",
      batteryBar: "none",
      batteryPercent: null,
      dcPowered: false,
      latitude: 0,
      longitude: 0,
      backlog: 0,
      rateMbps: null,
      powerW: null,
      gateway: false,
      lastResponseAt: 0,
    };
    row.addr = String(data.addr ?? row.addr);
    row.latitude = Number(data.latitude ?? row.latitude);
    row.longitude = Number(data.longitude ?? row.longitude);
    row.batteryPercent =
      data.battery_percent === undefined ? row.batteryPercent
        : (data.battery_percent as number | null);
    row.dcPowered = Boolean(data.dc_powered ?? row.dcPowered);
    row.backlog = Number(data.backlog ?? row.backlog);
    row.rateMbps = data.rate_mbps === undefined ? row.rateMbps : Number(data.rate_mbps);
    row.powerW = data.power_w === undefined ? row.powerW : Number(data.power_w);
    row.gateway = Boolean((data as Record<string, unknown>).is_gateway ?? row.gateway);
    row.batteryBar = batteryBar({
      battery_percent: row.batteryPercent,
      dc_powered: row.dcPowered,
    });
    row.status = "connected";
    row.lastResponseAt = this.now();
    this.devices.set(nodeId, row);
  }

  private touchDevice(nodeId: number, addr: string): void {
    if (!this.devices.has(nodeId)) {
      this.upsertDevice(nodeId, { addr });
    }
  }

  // -- connectivity bookkeeping ------------------------------------------------

  /** Flip rows to disconnected when they stopped answering. */
  tick(): void {
    const cutoff = this.now() - this.statusTimeoutMs;
    let changed = false;
    for (const row of this.devices.values()) {
      const next = row.lastResponseAt < cutoff ? "disconnected" : "connected";
      if (next !== row.status) {
        row.status = next;
        changed = true;
      }
    }
    if (changed) this.emit();
  }

  byState(state: MessageEntry["state"]): MessageEntry[] {
    return this.messages.filter((m) => m.state === state);
  }

  rows(): DeviceRow[] {
    return [...this.devices.values()].sort((a, b) => a.nodeId - b.nodeId);
  }
}
