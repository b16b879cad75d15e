// Device status table with the network-wide action buttons in its
// top-right corner.

import { DeviceRow } from "./types.js";

export function batteryCellHtml(row: DeviceRow): string {
  if (row.batteryBar === "none") {
    return `<span class="battery-none">DC</span>`;
  }
  const pct = Math.max(0, Math.min(100, row.batteryPercent ?? 0));
  const cls = row.batteryBar === "grey" ? "battery-bar grey" : "battery-bar green";
  return (
    `<span class="${cls}" data-bar="${row.batteryBar}">` +
    `<span class="fill" style="width:${pct}%"></span>` +
    `</span><span class="pct">${pct}%</span>`
  );
}

export function rowHtml(row: DeviceRow): string {
  const status =
    row.status === "connected"
      ? `<span class="status connected">Connected</span>`
      : `<span class="status disconnected">Disconnected</span>`;
  const rate = row.rateMbps === null ? "-" : `${row.rateMbps} Mbps`;
  const power = row.powerW === null ? "-" : `${row.powerW.toFixed(2)} W`;
  return (
    `<tr data-node="${row.nodeId}" class="${row.gateway ? "gateway" : ""}">` +
    `<td>${row.addr}${row.gateway ? " ★" : ""}</td>` +
    `<td>${status}</td>` +
    `<td>${batteryCellHtml(row)}</td>` +
    `<td>${row.latitude.toFixed(5)}, ${row.longitude.toFixed(5)}</td>` +
    `<td>${row.backlog}</td>` +
    `<td>${rate}</td>` +
    `<td>${power}</td>` +
    `<td><button class="row-status" data-node="${row.nodeId}">Get Status</button></td>` +
    `</tr>`
  );
}

export function renderTable(tbody: HTMLElement, rows: DeviceRow[]): void {
  tbody.innerHTML = rows.map(rowHtml).join("");
}
