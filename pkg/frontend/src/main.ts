// DOM wiring for the two-pane console. All behaviour lives in the
// tested modules (api, coords, drafts, calibration, dashboard, render);
// this file only moves values between them and the page.

import { EngineClient, FieldInfo, TeamStats } from "./api.js";
import { CalibrationController } from "./calibration.js";
import {
  Size,
  ViewState,
  displayToNative,
  identityView,
  nativeToCanvas,
  zoomAbout,
} from "./coords.js";
import { Dashboard } from "./dashboard.js";
import { DraftSet } from "./drafts.js";
import { drawDrafts, drawOverlay, drawTracks } from "./render.js";

const api = new EngineClient("");
const drafts = new DraftSet(window.localStorage);
const controller = new CalibrationController(api, drafts);
const dashboard = new Dashboard(api);

function $<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const editorCanvas = $<HTMLCanvasElement>("editor-canvas");
const editorFrame = $<HTMLInputElement>("editor-frame");
const landmarkSelect = $<HTMLSelectElement>("landmark-select");
const submitBtn = $<HTMLButtonElement>("submit-btn");
const acceptBtn = $<HTMLButtonElement>("accept-btn");
const clearBtn = $<HTMLButtonElement>("clear-btn");
const fitReadout = $<HTMLElement>("fit-readout");
const editorError = $<HTMLElement>("editor-error");
const draftList = $<HTMLElement>("draft-list");

const scrub = $<HTMLInputElement>("scrub");
const scrubReadout = $<HTMLElement>("scrub-readout");
const frameCanvas = $<HTMLCanvasElement>("frame-canvas");
const radarImg = $<HTMLImageElement>("radar-img");
const heatmapImg = $<HTMLImageElement>("heatmap-img");
const trackCount = $<HTMLElement>("track-count");
const scoreboardBox = $<HTMLElement>("scoreboard");
const offlineBanner = $<HTMLElement>("offline-banner");
const retryBtn = $<HTMLButtonElement>("retry-btn");

let field: FieldInfo | null = null;
let view: ViewState = identityView;
let frameImage: HTMLImageElement | null = null;

function nativeSize(): Size {
  return frameImage
    ? { width: frameImage.naturalWidth, height: frameImage.naturalHeight }
    : { width: editorCanvas.width, height: editorCanvas.height };
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

function redrawEditor(): void {
  const ctx = editorCanvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#202124";
  ctx.fillRect(0, 0, editorCanvas.width, editorCanvas.height);
  if (frameImage) {
    // backing store is native resolution, so only zoom/pan applies
    const tl = nativeToCanvas({ x: 0, y: 0 }, view);
    ctx.drawImage(
      frameImage, tl.x, tl.y,
      frameImage.naturalWidth * view.zoom, frameImage.naturalHeight * view.zoom,
    );
  }
  if (controller.pending) {
    drawOverlay(ctx, controller.pending.overlay, view);
  }
  drawDrafts(ctx, drafts.list(), view);
}

function refreshEditorChrome(): void {
  submitBtn.disabled = !controller.canSubmit();
  acceptBtn.disabled = controller.pending === null;
  editorError.textContent = controller.lastError ?? "";
  draftList.textContent = drafts
    .list()
    .map((d) => `${d.landmark} (${d.image[0].toFixed(1)}, ${d.image[1].toFixed(1)})`)
    .join("\n");
  if (controller.pending) {
    const { rms, gate, aboveGate } = controller.pending;
    fitReadout.textContent =
      `rms ${rms.toFixed(2)} px (gate ${gate.toFixed(2)} px)` +
      (aboveGate ? ", above gate" : "");
    fitReadout.classList.toggle("warn", aboveGate);
  } else {
    fitReadout.textContent = "";
    fitReadout.classList.remove("warn");
  }
}

async function loadEditorFrame(n: number): Promise<void> {
  try {
    frameImage = await loadImage(api.frameUrl(n));
    editorCanvas.width = frameImage.naturalWidth;
    editorCanvas.height = frameImage.naturalHeight;
    editorError.textContent = "";
  } catch {
    frameImage = null;
    editorError.textContent = `frame ${n} unavailable`;
  }
  view = identityView;
  redrawEditor();
}

editorCanvas.addEventListener("click", (ev) => {
  const landmark = landmarkSelect.value;
  if (!landmark) return;
  const rect = editorCanvas.getBoundingClientRect();
  const p = displayToNative(ev.clientX, ev.clientY, rect, nativeSize(), view);
  drafts.place([p.x, p.y], landmark);
  controller.invalidatePending();
  refreshEditorChrome();
  redrawEditor();
});

editorCanvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const rect = editorCanvas.getBoundingClientRect();
  const anchor = displayToNative(ev.clientX, ev.clientY, rect, nativeSize(), view);
  view = zoomAbout(view, anchor, ev.deltaY < 0 ? 1.25 : 0.8);
  redrawEditor();
});

submitBtn.addEventListener("click", async () => {
  try {
    await controller.submit();
  } catch {
    // message already captured on the controller
  }
  refreshEditorChrome();
  redrawEditor();
});

acceptBtn.addEventListener("click", async () => {
  let out = await controller.accept();
  if (!out.ok && out.needsForce) {
    const go = window.confirm(`${out.message}. Store it anyway?`);
    if (go) out = await controller.accept(true);
  }
  if (out.ok) {
    editorError.textContent = "";
    fitReadout.textContent = `stored (rms ${out.rms.toFixed(2)} px)`;
    drafts.clear();
  } else if (!out.needsForce) {
    editorError.textContent = out.message;
  }
  refreshEditorChrome();
  redrawEditor();
});

clearBtn.addEventListener("click", () => {
  drafts.clear();
  controller.invalidatePending();
  refreshEditorChrome();
  redrawEditor();
});

editorFrame.addEventListener("change", () => {
  void loadEditorFrame(Number(editorFrame.value));
});

const STAT_COLUMNS: [keyof TeamStats, string][] = [
  ["goals", "Goals"],
  ["attempts", "Attempts"],
  ["on_target", "On target"],
  ["passes", "Passes"],
  ["illegal_defender", "Illegal defender"],
  ["falls", "Falls"],
  ["possession_pct", "Possession %"],
];

function renderScoreboard(): void {
  const sb = dashboard.state.scoreboard;
  if (!sb) {
    scoreboardBox.textContent = "No statistics yet. Run the stats stage.";
    return;
  }
  const teams = Object.keys(sb).sort();
  const header = ["", ...teams.map((t) => (t === "0" ? "Home" : "Away"))];
  const rows = STAT_COLUMNS.map(([key, label]) => {
    const cells = teams.map((t) => {
      const v = sb[t]?.[key];
      return typeof v === "number" && !Number.isInteger(v) ? v.toFixed(1) : `${v}`;
    });
    return [label, ...cells];
  });
  const table = document.createElement("table");
  for (const row of [header, ...rows]) {
    const tr = document.createElement("tr");
    for (const cell of row) {
      const td = document.createElement("td");
      td.textContent = cell;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  scoreboardBox.replaceChildren(table);
}

async function showFrame(n: number): Promise<void> {
  scrubReadout.textContent = `frame ${n}`;
  const state = await dashboard.loadFrame(n);
  offlineBanner.style.display = state.offline ? "block" : "none";
  trackCount.textContent = `${dashboard.trackCount} tracks`;
  renderScoreboard();
  radarImg.src = api.radarUrl(n);
  const ctx = frameCanvas.getContext("2d");
  if (!ctx) return;
  try {
    const img = await loadImage(api.frameUrl(n));
    frameCanvas.width = img.naturalWidth;
    frameCanvas.height = img.naturalHeight;
    ctx.drawImage(img, 0, 0);
  } catch {
    ctx.fillStyle = "#202124";
    ctx.fillRect(0, 0, frameCanvas.width, frameCanvas.height);
  }
  drawTracks(ctx, state.tracks);
}

scrub.addEventListener("input", () => {
  void showFrame(Number(scrub.value));
});

retryBtn.addEventListener("click", () => {
  void dashboard.retry().then(() => showFrame(dashboard.state.frame));
});

async function boot(): Promise<void> {
  try {
    field = await api.getField();
    landmarkSelect.replaceChildren(
      ...field.landmarks.map((l) => {
        const opt = document.createElement("option");
        opt.value = l.id;
        opt.textContent = l.id;
        return opt;
      }),
    );
  } catch {
    offlineBanner.style.display = "block";
  }
  heatmapImg.src = api.heatmapUrl("ball");
  refreshEditorChrome();
  await loadEditorFrame(Number(editorFrame.value) || 0);
  await showFrame(Number(scrub.value) || 0);
}

void boot();
