/**
 * Viewer entry point: load a scene, drag a body to a rough placement,
 * trigger server-side refinement, watch the energy converge, accept or
 * retry with a different feature-map sample.
 */

import { ServiceClient, type WireMesh } from "./protocol.js";
import { ViewerController } from "./controller.js";
import { ViewerState } from "./state.js";
import {
  contactColors,
  semanticColors,
  sceneColors,
  semanticPalette,
  uniformColors,
  type RGB,
} from "./overlay.js";
import { Renderer3D } from "./render.js";

const client = new ServiceClient("");
const state = new ViewerState();
const ctrl = new ViewerController(client, state, onControllerEvent);

const canvas = document.getElementById("view") as HTMLCanvasElement;
const r3d = new Renderer3D(canvas);

const el = (id: string) => document.getElementById(id)!;
const sceneSel = el("scene") as HTMLSelectElement;
const bodySel = el("body") as HTMLSelectElement;
const overlaySel = el("overlay") as HTMLSelectElement;
const fmapSel = el("fmap") as HTMLSelectElement;
const statusEl = el("status");
const sdfEl = el("sdf-readout");
const energyEl = el("energy");
const legendEl = el("legend");
const spark = el("spark") as HTMLCanvasElement;

let sceneWire: WireMesh | null = null;
let bodyWire: WireMesh | null = null;
let summaries: { contact: number[]; semantic_class: number[] }[] = [];

function onControllerEvent(kind: string): void {
  drawSpark();
  if (kind === "done") {
    applyTransform();
    banner("refinement converged");
  } else if (kind === "cancelled" || kind === "cancel") {
    applyTransform();
    banner("cancelled (best-so-far kept)");
  } else if (kind === "failed") {
    banner(`refinement failed: ${state.job?.error}`, true);
  }
}

function banner(msg: string, isError = false): void {
  statusEl.textContent = msg;
  statusEl.className = isError ? "error" : "";
}

function palette(): RGB[] {
  return semanticPalette(state.classNames);
}

function drawLegend(): void {
  legendEl.innerHTML = "";
  if (!sceneWire) return;
  const present = new Set<number>();
  sceneWire.labels.forEach((l) => present.add(l));
  const pal = palette();
  for (const label of [...present].sort((a, b) => a - b)) {
    const row = document.createElement("div");
    const sw = document.createElement("span");
    const c = pal[(label + 1) % pal.length];
    sw.className = "swatch";
    sw.style.background = `rgb(${c.map((v) => Math.round(v * 255)).join(",")})`;
    row.appendChild(sw);
    row.appendChild(document.createTextNode(state.classNames[label] ?? `class ${label}`));
    legendEl.appendChild(row);
  }
}

function refreshSceneColors(): void {
  if (!sceneWire) return;
  if (state.overlay === "semantics") {
    r3d.setSceneColors(sceneColors(sceneWire.labels, palette()));
  } else {
    r3d.setSceneColors(uniformColors(sceneWire.nVertices, [0.62, 0.62, 0.66]));
  }
}

function refreshBodyColors(): void {
  if (!bodyWire) return;
  const s = summaries[state.selectedFmap];
  if (!s || state.overlay === "none") {
    r3d.setBodyColors(uniformColors(bodyWire.nVertices, [0.85, 0.82, 0.75]));
  } else if (state.overlay === "contact") {
    r3d.setBodyColors(contactColors(s.contact));
  } else {
    r3d.setBodyColors(semanticColors(s.semantic_class, palette()));
  }
}

function drawSpark(): void {
  const ctx = spark.getContext("2d")!;
  ctx.clearRect(0, 0, spark.width, spark.height);
  const es = state.job?.energies ?? [];
  if (es.length < 2) return;
  const lo = Math.min(...es);
  const hi = Math.max(...es);
  ctx.strokeStyle = "#7fd87f";
  ctx.beginPath();
  es.forEach((e, i) => {
    const x = (i / (es.length - 1)) * (spark.width - 4) + 2;
    const y = spark.height - 3 - ((hi > lo ? (hi - e) / (hi - lo) : 0.5) * (spark.height - 6));
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  energyEl.textContent = `E = ${es[es.length - 1].toFixed(4)}`;
}

let sdfTimer: number | null = null;
function scheduleSdfReadout(): void {
  // throttled: the number shown always comes from the service
  if (sdfTimer !== null) return;
  sdfTimer = window.setTimeout(async () => {
    sdfTimer = null;
    try {
      const v = await ctrl.refreshMinSdf();
      if (v !== null) sdfEl.textContent = `min SDF: ${v.toFixed(4)} m`;
    } catch {
      sdfEl.textContent = "min SDF: n/a";
    }
  }, 180);
}

function applyTransform(): void {
  r3d.setBodyTransform(state.transform.translation, state.transform.yaw);
  scheduleSdfReadout();
}

async function loadScene(id: string): Promise<void> {
  try {
    sceneWire = await client.sceneMesh(id);
    state.sceneId = id;
    r3d.setSceneMesh(sceneWire, sceneColors(sceneWire.labels, palette()));
    refreshSceneColors();
    drawLegend();
    banner(`scene ${id}: ${sceneWire.nVertices} vertices`);
  } catch (e) {
    banner(`failed to load scene: ${e}`, true);
  }
}

async function loadBody(id: string): Promise<void> {
  try {
    bodyWire = await client.bodyMesh(id);
    state.bodyId = id;
    summaries = [];
    state.fmapIds = [];
    fmapSel.innerHTML = "";
    r3d.setBodyMesh(bodyWire, uniformColors(bodyWire.nVertices, [0.85, 0.82, 0.75]));
    applyTransform();
    banner(`body ${id} loaded`);
  } catch (e) {
    banner(`failed to load body: ${e}`, true);
  }
}

async function sampleMaps(): Promise<void> {
  if (!state.bodyId) return;
  const seed = Math.floor(Math.random() * 1e6);
  try {
    const resp = await ctrl.sampleMaps(4, seed);
    summaries = resp.summaries;
    fmapSel.innerHTML = "";
    resp.fmap_ids.forEach((fid, i) => {
      const o = document.createElement("option");
      o.value = String(i);
      o.textContent = `${fid}`;
      fmapSel.appendChild(o);
    });
    refreshBodyColors();
    banner(`sampled ${resp.fmap_ids.length} feature maps (seed ${seed})`);
  } catch (e) {
    banner(`sampling failed: ${e}`, true);
  }
}

async function refinePlacement(): Promise<void> {
  if (!state.sceneId || !state.bodyId || state.fmapIds.length === 0) {
    banner("load a scene + body and sample feature maps first", true);
    return;
  }
  try {
    const jobId = await ctrl.refine();
    banner(`refining (job ${jobId})...`);
  } catch (e) {
    banner(`placement request failed: ${e}`, true);
  }
}

async function cancelJob(): Promise<void> {
  try {
    await ctrl.cancel();
  } catch (e) {
    banner(`cancel failed: ${e}`, true);
  }
}

// --- input wiring ---------------------------------------------------------

let dragging: "none" | "body" | "orbit" | "yaw" = "none";
let last: [number, number] = [0, 0];

canvas.addEventListener("pointerdown", (ev) => {
  last = [ev.clientX, ev.clientY];
  dragging = ev.shiftKey ? "body" : ev.ctrlKey ? "yaw" : "orbit";
  canvas.setPointerCapture(ev.pointerId);
});
canvas.addEventListener("pointerup", () => (dragging = "none"));
canvas.addEventListener("pointermove", (ev) => {
  const dx = ev.clientX - last[0];
  const dy = ev.clientY - last[1];
  last = [ev.clientX, ev.clientY];
  if (dragging === "orbit") {
    r3d.orbit(dx * 0.008, dy * 0.008);
  } else if (dragging === "yaw") {
    state.rotate(dx * 0.01);
    applyTransform();
  } else if (dragging === "body") {
    const rect = canvas.getBoundingClientRect();
    const p = r3d.pickGround(
      ((ev.clientX - rect.left) / rect.width) * 2 - 1,
      -(((ev.clientY - rect.top) / rect.height) * 2 - 1),
    );
    if (p) {
      const [x, y, z] = state.transform.translation;
      state.setTransform({ ...state.transform, translation: [p[0], p[1], z] });
      applyTransform();
    }
  }
});
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  r3d.zoom(ev.deltaY > 0 ? 1.1 : 0.9);
});
window.addEventListener("keydown", (ev) => {
  if (ev.key === "PageUp") state.nudgeVertical(0.02);
  else if (ev.key === "PageDown") state.nudgeVertical(-0.02);
  else if (ev.key === "[") state.rotate(-0.1);
  else if (ev.key === "]") state.rotate(0.1);
  else return;
  applyTransform();
});

el("sample").addEventListener("click", sampleMaps);
el("refine").addEventListener("click", refinePlacement);
el("cancel").addEventListener("click", cancelJob);
sceneSel.addEventListener("change", () => loadScene(sceneSel.value));
bodySel.addEventListener("change", () => loadBody(bodySel.value));
overlaySel.addEventListener("change", () => {
  state.overlay = overlaySel.value as ViewerState["overlay"];
  refreshSceneColors();
  refreshBodyColors();
});
fmapSel.addEventListener("change", () => {
  state.selectedFmap = Number(fmapSel.value);
  refreshBodyColors();
});

async function boot(): Promise<void> {
  try {
    const scenes = await client.scenes();
    const bodies = await client.bodies();
    for (const s of scenes) {
      const o = document.createElement("option");
      o.value = s.id;
      o.textContent = s.id;
      sceneSel.appendChild(o);
      state.classNames = s.classes;
    }
    for (const b of bodies) {
      const o = document.createElement("option");
      o.value = b.id;
      o.textContent = b.id;
      bodySel.appendChild(o);
    }
    if (scenes.length) await loadScene(scenes[0].id);
    if (bodies.length) await loadBody(bodies[0].id);
  } catch (e) {
    banner(`service unreachable: ${e}`, true);
  }
}

function frame(): void {
  r3d.render();
  requestAnimationFrame(frame);
}

boot();
frame();
