// Frame schema spoken by the gateway bridge. The console renders nothing
// it did not receive through these frames.

export type Target = "all" | number;

export interface CommandFrame {
  corr: string;
  cmd: string;
  target: Target;
  args: Record<string, unknown>;
}

export interface EventFrame {
  corr: string;
  event: string; // node_status | command_ack | new_node | error
  node: number;
  data: Record<string, unknown>;
}

export interface NodeStatusData {
  addr: string;
  latitude: number;
  longitude: number;
  battery_percent: number | null;
  dc_powered: boolean;
  backlog: number;
  rate_mbps: number;
  power_w: number;
}

export type MessageState = "sent" | "pending" | "success";

export interface MessageEntry {
  corr: string;
  command: string;
  target: Target;
  state: MessageState;
  sentAt: number;
  pendingAt: number | null;
  successAt: number | null;
}

export type BatteryBar = "grey" | "green" | "none";

export interface DeviceRow {
  nodeId: number;
  addr: string;
  status: "connected" | "disconnected";
  batteryBar: BatteryBar;
  batteryPercent: number | null;
  dcPowered: boolean;
  latitude: number;
  longitude: number;
  backlog: number;
  rateMbps: number | null;
  powerW: number | null;
  gateway: boolean;
  lastResponseAt: number;
}

export const DATA_RATES = [1, 2, 5.5, 11];
