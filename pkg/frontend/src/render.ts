// Canvas drawing for the editor and dashboard. Pure functions over a
// minimal 2D-context surface so tests can substitute a recording stub.
// Geometry is never derived here: overlay polylines and track boxes
// arrive in native image coordinates straight from the engine; the
// canvas backing store is kept at native resolution, so only the
// operator's zoom/pan transform applies at draw time.

import { TrackRow } from "./api.js";
import { CorrespondenceDraft } from "./drafts.js";
import { Point, ViewState, identityView, nativeToCanvas } from "./coords.js";

/** The slice of CanvasRenderingContext2D the renderers actually use. */
export interface Ctx2D {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  rect(x: number, y: number, w: number, h: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

const TEAM_COLORS: Record<number, string> = {
  0: "#2d7ff9",
  1: "#e4483b",
};
const BALL_COLOR = "#f5a623";
const DRAFT_COLOR = "#18b36b";
const SUBMITTED_COLOR = "#8a8f98";
const OVERLAY_COLOR = "#18b36b";

function colorFor(row: TrackRow): string {
  if (row.class === "ball") return BALL_COLOR;
  return TEAM_COLORS[row.team ?? -1] ?? "#cccccc";
}

/** Field lines reprojected by the engine, one polyline per segment. */
export function drawOverlay(
  ctx: Ctx2D,
  polylines: [number, number][][],
  view: ViewState = identityView,
): void {
  ctx.strokeStyle = OVERLAY_COLOR;
  ctx.lineWidth = 1.5;
  for (const line of polylines) {
    if (line.length < 2) continue;
    ctx.beginPath();
    line.forEach(([x, y], i) => {
      const p = nativeToCanvas({ x, y }, view);
      if (i === 0) ctx.moveTo(p.x, p.y);
      else ctx.lineTo(p.x, p.y);
    });
    ctx.stroke();
  }
}

export function drawDrafts(
  ctx: Ctx2D,
  drafts: readonly CorrespondenceDraft[],
  view: ViewState = identityView,
): void {
  ctx.font = "12px sans-serif";
  for (const d of drafts) {
    const p = nativeToCanvas({ x: d.image[0], y: d.image[1] }, view);
    const color = d.status === "submitted" ? SUBMITTED_COLOR : DRAFT_COLOR;
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(p.x, p.y, 6, 0, Math.PI * 2);
    ctx.stroke();
    ctx.beginPath();
    ctx.arc(p.x, p.y, 1.5, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillText(d.landmark, p.x + 9, p.y - 9);
  }
}

export function drawTracks(
  ctx: Ctx2D,
  rows: TrackRow[],
  view: ViewState = identityView,
): void {
  ctx.font = "12px sans-serif";
  for (const row of rows) {
    const [x, y, w, h] = row.bbox;
    const tl = nativeToCanvas({ x, y }, view);
    const br = nativeToCanvas({ x: x + w, y: y + h }, view);
    ctx.strokeStyle = colorFor(row);
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.rect(tl.x, tl.y, br.x - tl.x, br.y - tl.y);
    ctx.stroke();
    const label =
      row.class === "ball"
        ? "ball"
        : row.jersey != null
          ? `#${row.jersey}`
          : `t${row.track_id}`;
    ctx.fillStyle = colorFor(row);
    ctx.fillText(label, tl.x, tl.y - 4);
  }
}

/** Radar panel: field positions on the plan image, already in plan px. */
export function drawRadarDots(
  ctx: Ctx2D,
  rows: TrackRow[],
  planToCanvas: (x: number, y: number) => Point,
): void {
  for (const row of rows) {
    if (row.field_x == null || row.field_y == null) continue;
    const p = planToCanvas(row.field_x, row.field_y);
    ctx.fillStyle = colorFor(row);
    ctx.beginPath();
    ctx.arc(p.x, p.y, row.class === "ball" ? 4 : 6, 0, Math.PI * 2);
    ctx.fill();
    if (row.fallen) {
      ctx.strokeStyle = "#111111";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(p.x - 8, p.y);
      ctx.lineTo(p.x + 8, p.y);
      ctx.stroke();
    }
  }
}
