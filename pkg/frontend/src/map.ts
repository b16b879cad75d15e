// Topology map on an abstract plane: positions come straight from the
// latest status responses. The gateway is drawn as a blue dot.

import { DeviceRow } from "./types.js";

const METERS_PER_DEG = 111_194.9;

export function project(rows: DeviceRow[], width: number, height: number) {
  if (rows.length === 0) return new Map<number, { x: number; y: number }>();
  const lat0 = rows.reduce((s, r) => s + r.latitude, 0) / rows.length;
  const lon0 = rows.reduce((s, r) => s + r.longitude, 0) / rows.length;
  const pts = rows.map((r) => ({
    id: r.nodeId,
    x: (r.longitude - lon0) * METERS_PER_DEG * Math.cos((lat0 * Math.PI) / 180),
    y: (r.latitude - lat0) * METERS_PER_DEG,
  }));
  const span = Math.max(
    200,
    ...pts.map((p) => Math.abs(p.x)),
    ...pts.map((p) => Math.abs(p.y)),
  );
  const scale = (Math.min(width, height) / 2 - 24) / span;
  const out = new Map<number, { x: number; y: number }>();
  for (const p of pts) {
    out.set(p.id, {
      x: width / 2 + p.x * scale,
      y: height / 2 - p.y * scale,
    });
  }
  return out;
}

export function renderMap(canvas: HTMLCanvasElement, rows: DeviceRow[],
                          stale: boolean): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const positions = project(rows, canvas.width, canvas.height);
  for (const row of rows) {
    const p = positions.get(row.nodeId);
    if (!p) continue;
    ctx.beginPath();
    ctx.arc(p.x, p.y, 9, 0, Math.PI * 2);
    if (row.gateway) {
      ctx.fillStyle = "#2f81f7"; // gateway: blue
    } else if (row.status === "disconnected") {
      ctx.fillStyle = "#6e7681";
    } else {
      ctx.fillStyle = "#3fb950";
    }
    ctx.fill();
    ctx.fillStyle = "#e6edf3";
    ctx.font = "12px sans-serif";
    ctx.fillText(row.addr || String(row.nodeId), p.x + 12, p.y + 4);
  }
  if (stale) {
    ctx.fillStyle = "rgba(180, 60, 60, 0.85)";
    ctx.fillRect(0, 0, canvas.width, 26);
    ctx.fillStyle = "#fff";
    ctx.fillText("bridge disconnected — data may be stale", 10, 17);
  }
}
