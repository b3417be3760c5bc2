// single-page wiring: session upload, patch drawing, run control, trace
// chart, and ownership overlay; all state lives in this module

import { ApiClient, ApiError, RunForm, SessionInfo, TraceRow } from "./api.js";
import { polylinePoints, seriesExtent } from "./chart.js";
import { blend, ownershipAt } from "./overlay.js";
import {
  PatchDraft, channelColor, rectFromDrag, toPayload, validateDrafts,
} from "./patches.js";

const api = new ApiClient("");

interface State {
  session: SessionInfo | null;
  imageBitmap: ImageBitmap | null;
  drafts: PatchDraft[];
  badDrafts: Map<number, string>;
  runId: string | null;
  running: boolean;
  rows: TraceRow[];
  k: number;
  overlayChannel: number;
  overlayOpacity: number;
  ownershipPixels: Map<number, ImageData>;
  baseImageData: ImageData | null;
}

const state: State = {
  session: null,
  imageBitmap: null,
  drafts: [],
  badDrafts: new Map(),
  runId: null,
  running: false,
  rows: [],
  k: 2,
  overlayChannel: 1,
  overlayOpacity: 0.5,
  ownershipPixels: new Map(),
  baseImageData: null,
};

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function setStatus(text: string, isError = false): void {
  const node = el<HTMLDivElement>("status");
  node.textContent = text;
  node.className = isError ? "status error" : "status";
}

// ---------------------------------------------------------------- session

async function onFileChosen(file: File): Promise<void> {
  try {
    state.session = await api.createSession(file);
  } catch (err) {
    setStatus(err instanceof Error ? err.message : String(err), true);
    return;
  }
  state.imageBitmap = await createImageBitmap(file);
  state.drafts = [];
  state.badDrafts.clear();
  state.runId = null;
  state.rows = [];
  state.ownershipPixels.clear();

  const canvas = el<HTMLCanvasElement>("image-canvas");
  canvas.width = state.session.width;
  canvas.height = state.session.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(state.imageBitmap, 0, 0);
  state.baseImageData = ctx.getImageData(0, 0, canvas.width, canvas.height);
  setStatus(`session ${state.session.session_id} `
    + `(${state.session.width}x${state.session.height})`);
  redraw();
}

// ----------------------------------------------------------- patch drawing

let dragStart: { x: number; y: number } | null = null;

function canvasPos(ev: MouseEvent): { x: number; y: number } {
  const canvas = el<HTMLCanvasElement>("image-canvas");
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * canvas.width,
    y: ((ev.clientY - rect.top) / rect.height) * canvas.height,
  };
}

function redraw(currentDrag?: PatchDraft): void {
  const canvas = el<HTMLCanvasElement>("image-canvas");
  const ctx = canvas.getContext("2d")!;
  if (state.baseImageData) ctx.putImageData(state.baseImageData, 0, 0);

  const overlay = state.ownershipPixels.get(state.overlayChannel);
  if (overlay && state.baseImageData) {
    const mixed = blend(
      state.baseImageData.data, overlay.data, state.overlayOpacity,
    );
    const pixels = new Uint8ClampedArray(new ArrayBuffer(mixed.length));
    pixels.set(mixed);
    ctx.putImageData(new ImageData(pixels, canvas.width, canvas.height), 0, 0);
  }

  const rects = currentDrag ? [...state.drafts, currentDrag] : state.drafts;
  rects.forEach((p, i) => {
    const [r, g, b] = channelColor(p.channel);
    ctx.lineWidth = 2;
    ctx.strokeStyle = state.badDrafts.has(i)
      ? "#ff0000" : `rgb(${r},${g},${b})`;
    ctx.strokeRect(p.x + 0.5, p.y + 0.5, p.w - 1, p.h - 1);
    ctx.fillStyle = `rgba(${r},${g},${b},0.25)`;
    ctx.fillRect(p.x, p.y, p.w, p.h);
  });
  renderDraftList();
}

function renderDraftList(): void {
  const list = el<HTMLUListElement>("patch-list");
  list.innerHTML = "";
  state.drafts.forEach((p, i) => {
    const item = document.createElement("li");
    const [r, g, b] = channelColor(p.channel);
    const problem = state.badDrafts.get(i);
    item.innerHTML = `<span class="swatch" style="background:rgb(${r},${g},${b})"></span>`
      + `ch ${p.channel} @ (${p.x},${p.y}) ${p.w}x${p.h}`
      + (problem ? ` <span class="error">${problem}</span>` : "");
    const remove = document.createElement("button");
    remove.textContent = "x";
    remove.onclick = () => {
      state.drafts.splice(i, 1);
      revalidate();
      redraw();
    };
    item.appendChild(remove);
    list.appendChild(item);
  });
}

function revalidate(): void {
  state.badDrafts.clear();
  if (!state.session) return;
  const problems = validateDrafts(
    state.drafts, state.k, state.session.width, state.session.height,
  );
  for (const p of problems) state.badDrafts.set(p.index, p.message);
  el<HTMLButtonElement>("submit-patches").disabled = problems.length > 0
    || state.drafts.length === 0;
}

async function submitPatches(): Promise<void> {
  if (!state.session) return;
  try {
    const report = await api.putSupervision(
      state.session.session_id, toPayload(state.drafts),
    );
    const areas = Object.entries(report.areas)
      .map(([c, a]) => `ch ${c}: ${a}px`).join(", ");
    setStatus(`supervision stored (${areas})`);
  } catch (err) {
    if (err instanceof ApiError) setStatus(`rejected: ${err.message}`, true);
    else setStatus(String(err), true);
  }
}

// ------------------------------------------------------------------- runs

function readRunForm(): RunForm {
  return {
    model: el<HTMLSelectElement>("model").value as "full" | "pc",
    k: parseInt(el<HTMLInputElement>("k").value, 10),
    lambda: parseFloat(el<HTMLInputElement>("lambda").value),
    alpha: parseFloat(el<HTMLInputElement>("alpha").value),
    epsilon: parseFloat(el<HTMLInputElement>("epsilon").value),
    seed: parseInt(el<HTMLInputElement>("seed").value, 10),
    max_outer: parseInt(el<HTMLInputElement>("max-outer").value, 10),
  };
}

function renderChart(): void {
  const svg = el<HTMLElement>("chart");
  const w = 420;
  const h = 160;
  const totals = state.rows.map((r) => r.total);
  const ext = seriesExtent(totals);
  const series: [string, number[]][] = [
    ["#0082c8", totals],
    ["#e6194b", state.rows.map((r) => r.data)],
    ["#3cb44b", state.rows.map((r) => r.sobolev)],
    ["#f58231", state.rows.map((r) => r.mm)],
  ];
  svg.innerHTML = series
    .map(([color, vals]) =>
      `<polyline fill="none" stroke="${color}" stroke-width="1.5" `
      + `points="${polylinePoints(vals, w, h, ext)}"/>`)
    .join("");
  el<HTMLDivElement>("chart-readout").textContent = state.rows.length
    ? `iter ${state.rows[state.rows.length - 1].iter}  `
      + `total ${state.rows[state.rows.length - 1].total.toFixed(4)}`
    : "";
}

async function startRun(): Promise<void> {
  if (!state.session || state.running) return;
  const form = readRunForm();
  state.k = form.k;
  revalidate();
  let rid: string;
  try {
    rid = await api.startRun(state.session.session_id, form);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      setStatus("run active - wait for it to finish", true);
    } else {
      setStatus(err instanceof Error ? err.message : String(err), true);
    }
    return;
  }
  state.runId = rid;
  state.running = true;
  state.rows = [];
  state.ownershipPixels.clear();
  setStatus(`run ${rid} streaming...`);
  const term = await api.watchRun(state.session.session_id, rid, (row) => {
    state.rows.push(row);
    renderChart();
  });
  state.running = false;
  if (term.status === "failed") {
    setStatus(`run failed: ${term.error ?? "unknown"}`, true);
    return;
  }
  setStatus(`run ${rid} done after ${state.rows.length} iterations`);
  await loadArtifacts();
}

// -------------------------------------------------------------- artifacts

async function fetchImageData(url: string): Promise<ImageData> {
  const r = await fetch(url);
  if (!r.ok) throw new ApiError(r.status, r.statusText);
  const bitmap = await createImageBitmap(await r.blob());
  const scratch = document.createElement("canvas");
  scratch.width = bitmap.width;
  scratch.height = bitmap.height;
  const ctx = scratch.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  return ctx.getImageData(0, 0, bitmap.width, bitmap.height);
}

async function loadArtifacts(): Promise<void> {
  if (!state.session || !state.runId) return;
  const sid = state.session.session_id;
  el<HTMLImageElement>("labels-img").src =
    api.labelsUrl(sid, state.runId) + `?t=${Date.now()}`;
  for (let ch = 1; ch <= state.k; ch++) {
    state.ownershipPixels.set(
      ch, await fetchImageData(api.ownershipUrl(sid, state.runId, ch)),
    );
  }
  const select = el<HTMLSelectElement>("overlay-channel");
  select.innerHTML = "";
  for (let ch = 1; ch <= state.k; ch++) {
    const opt = document.createElement("option");
    opt.value = String(ch);
    opt.textContent = `channel ${ch}`;
    select.appendChild(opt);
  }
  state.overlayChannel = 1;
  redraw();
}

// ------------------------------------------------------------------ wiring

export function wire(): void {
  el<HTMLInputElement>("file").addEventListener("change", (ev) => {
    const input = ev.target as HTMLInputElement;
    if (input.files && input.files[0]) void onFileChosen(input.files[0]);
  });

  const canvas = el<HTMLCanvasElement>("image-canvas");
  canvas.addEventListener("mousedown", (ev) => {
    if (!state.session) return;
    dragStart = canvasPos(ev);
  });
  canvas.addEventListener("mousemove", (ev) => {
    const pos = canvasPos(ev);
    const overlay = state.ownershipPixels.get(state.overlayChannel);
    if (overlay && state.session) {
      const x = Math.min(Math.max(Math.floor(pos.x), 0), state.session.width - 1);
      const y = Math.min(Math.max(Math.floor(pos.y), 0), state.session.height - 1);
      el<HTMLDivElement>("hover-readout").textContent =
        `p_${state.overlayChannel}(${x},${y}) = `
        + ownershipAt(overlay.data, state.session.width, x, y).toFixed(2);
    }
    if (!dragStart) return;
    const channel = parseInt(el<HTMLSelectElement>("draw-channel").value, 10);
    redraw(rectFromDrag(dragStart.x, dragStart.y, pos.x, pos.y, channel));
  });
  canvas.addEventListener("mouseup", (ev) => {
    if (!dragStart) return;
    const pos = canvasPos(ev);
    const channel = parseInt(el<HTMLSelectElement>("draw-channel").value, 10);
    state.drafts.push(
      rectFromDrag(dragStart.x, dragStart.y, pos.x, pos.y, channel),
    );
    dragStart = null;
    revalidate();
    redraw();
  });

  el<HTMLButtonElement>("submit-patches").addEventListener(
    "click", () => void submitPatches(),
  );
  el<HTMLButtonElement>("start-run").addEventListener(
    "click", () => void startRun(),
  );
  el<HTMLInputElement>("k").addEventListener("change", () => {
    state.k = parseInt(el<HTMLInputElement>("k").value, 10);
    revalidate();
    renderDraftList();
  });
  el<HTMLSelectElement>("overlay-channel").addEventListener("change", (ev) => {
    state.overlayChannel = parseInt((ev.target as HTMLSelectElement).value, 10);
    redraw();
  });
  el<HTMLInputElement>("overlay-opacity").addEventListener("input", (ev) => {
    state.overlayOpacity = parseFloat((ev.target as HTMLInputElement).value);
    redraw();
  });
  revalidate();
}

if (typeof document !== "undefined" && document.getElementById("file")) {
  wire();
}
