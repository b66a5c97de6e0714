/**
 * Browser entry point: wires the API client, state store, and canvas.
 *
 * The page boots by fetching the model summary and the surface, paints the
 * heatmap, then lets the analyst click a polyline together, submit it for
 * wombling, and read per-segment verdicts off the overlay. All statistics
 * on screen are server numbers; the client only draws them.
 */

import { ApiClient, SurfacePayload } from "./api.js";
import { fmt, heat, MISSING_RGB, sigColor } from "./colormap.js";
import { AppState } from "./state.js";
import { nearestIndex, snapToNode, ViewTransform } from "./transform.js";
import { hoverReadout, submissionLabel, totalsView } from "./view.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const api = new ApiClient("");
const state = new AppState();

function context2d(target: HTMLCanvasElement): CanvasRenderingContext2D {
  const g = target.getContext("2d");
  if (!g) {
    throw new Error("canvas 2d context unavailable");
  }
  return g;
}

const canvas = el<HTMLCanvasElement>("surface");
const ctx = context2d(canvas);

let surface: SurfacePayload | null = null;
let base: HTMLCanvasElement | null = null;
let view: ViewTransform | null = null;

function showBanner(message: string | null): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

/** Paint one pixel per grid node, then scale without smoothing. */
function buildBase(s: SurfacePayload): HTMLCanvasElement {
  const off = document.createElement("canvas");
  off.width = s.nx;
  off.height = s.ny;
  const octx = context2d(off);
  const img = octx.createImageData(s.nx, s.ny);
  const lo = s.vmin ?? 0;
  const span = s.vmax !== null && s.vmin !== null ? s.vmax - s.vmin : 0;
  for (let i = 0; i < s.nx; i++) {
    for (let j = 0; j < s.ny; j++) {
      const v = s.values[i]?.[j];
      const missing = s.missing[i]?.[j] || v === undefined;
      const rgb = missing
        ? MISSING_RGB
        : heat(span > 0 ? ((v as number) - lo) / span : 0.5);
      /* canvas row 0 is the top, which is the largest y */
      const p = 4 * ((s.ny - 1 - j) * s.nx + i);
      img.data[p] = rgb[0];
      img.data[p + 1] = rgb[1];
      img.data[p + 2] = rgb[2];
      img.data[p + 3] = 255;
    }
  }
  octx.putImageData(img, 0, 0);
  return off;
}

function redraw(): void {
  if (!base || !view) {
    return;
  }
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(base, 0, 0, canvas.width, canvas.height);

  const sel = state.selected();
  if (sel) {
    const sigs = sel.result.segments[state.measure] ?? [];
    const pts = sel.result.vertices.map(([x, y]) => view!.toPixel(x, y));
    ctx.lineWidth = 4;
    for (let k = 0; k + 1 < pts.length; k++) {
      const a = pts[k] as [number, number];
      const b = pts[k + 1] as [number, number];
      ctx.strokeStyle = sigColor(sigs[k]?.sig ?? 0);
      ctx.beginPath();
      ctx.moveTo(a[0], a[1]);
      ctx.lineTo(b[0], b[1]);
      ctx.stroke();
    }
  }

  if (state.vertices.length) {
    const pts = state.vertices.map(([x, y]) => view!.toPixel(x, y));
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 1.5;
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    pts.forEach(([px, py], k) => (k ? ctx.lineTo(px, py) : ctx.moveTo(px, py)));
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = "#ffffff";
    for (const [px, py] of pts) {
      ctx.beginPath();
      ctx.arc(px, py, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

function renderPanel(): void {
  showBanner(state.banner);
  el<HTMLButtonElement>("submit").disabled = !state.canSubmit() || state.inFlight;
  el<HTMLSpanElement>("status").textContent = state.inFlight ? "wombling…" : "";

  const totals = el<HTMLTableSectionElement>("totals-body");
  totals.innerHTML = "";
  const sel = state.selected();
  if (sel) {
    for (const row of totalsView(sel.result)) {
      const tr = document.createElement("tr");
      const name = document.createElement("td");
      name.textContent = row.measure;
      name.style.color = sigColor(row.sig);
      const total = document.createElement("td");
      total.textContent = row.total;
      const avg = document.createElement("td");
      avg.textContent = row.average;
      tr.append(name, total, avg);
      totals.append(tr);
    }
    el<HTMLSpanElement>("arc-length").textContent = fmt(sel.result.arc_length);
  } else {
    el<HTMLSpanElement>("arc-length").textContent = "–";
  }

  const list = el<HTMLOListElement>("submissions");
  list.innerHTML = "";
  for (const sub of state.submissions) {
    const li = document.createElement("li");
    li.textContent = submissionLabel(sub);
    if (sub.id === state.selectedId) {
      li.classList.add("selected");
    }
    li.addEventListener("click", () => state.select(sub.id));
    list.append(li);
  }
}

function currentSeed(): number {
  const raw = el<HTMLInputElement>("seed").value;
  const seed = Number.parseInt(raw, 10);
  return Number.isFinite(seed) ? seed : 0;
}

function wire(): void {
  canvas.addEventListener("mousemove", (ev) => {
    if (!surface || !view) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const [x, y] = view.toDomain(ev.clientX - rect.left, ev.clientY - rect.top);
    const i = nearestIndex(surface.xs, x);
    const j = nearestIndex(surface.ys, y);
    el<HTMLSpanElement>("readout").textContent = hoverReadout(surface, i, j);
  });

  canvas.addEventListener("click", (ev) => {
    if (!surface || !view) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    let [x, y] = view.toDomain(ev.clientX - rect.left, ev.clientY - rect.top);
    if (state.snapEnabled) {
      [x, y] = snapToNode(surface.xs, surface.ys, x, y);
    }
    state.addVertex(x, y);
  });

  el<HTMLButtonElement>("undo").addEventListener("click", () => state.undoVertex());
  el<HTMLButtonElement>("clear").addEventListener("click", () => state.clearDraft());
  el<HTMLInputElement>("snap").addEventListener("change", (ev) => {
    state.snapEnabled = (ev.target as HTMLInputElement).checked;
  });
  el<HTMLButtonElement>("submit").addEventListener("click", () => {
    void state.submit(api, currentSeed());
  });

  for (const radio of document.querySelectorAll<HTMLInputElement>("input[name=measure]")) {
    radio.addEventListener("change", () => state.setMeasure(radio.value));
  }

  el<HTMLButtonElement>("lift").addEventListener("click", async () => {
    const level = Number.parseFloat(el<HTMLInputElement>("level").value);
    if (!Number.isFinite(level)) {
      state.banner = "contour level must be a number";
      renderPanel();
      return;
    }
    try {
      const payload = await api.contours(level);
      if (!payload.count) {
        state.banner = `no contour found at level ${level}`;
        renderPanel();
        return;
      }
      /* several closed loops can exist; start from the most detailed one */
      const longest = payload.contours.reduce((a, b) =>
        b.length > a.length ? b : a,
      );
      state.banner = null;
      state.loadCurve(longest);
    } catch (err) {
      state.banner = err instanceof Error ? err.message : String(err);
      renderPanel();
    }
  });
}

async function boot(): Promise<void> {
  try {
    const summary = await api.summary();
    el<HTMLSpanElement>("model-info").textContent =
      `${summary.family}, ${summary.site_count} sites, ` +
      `${summary.draw_count} posterior draws, seed ${summary.seed}`;
    const params = Object.entries(summary.params)
      .map(([k, q]) => `${k}=${fmt(q.q50)}`)
      .join("  ");
    el<HTMLSpanElement>("param-info").textContent = params;

    const measures = el<HTMLSpanElement>("measures");
    measures.innerHTML = "";
    summary.measures.forEach((m, idx) => {
      const label = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = "measure";
      radio.value = m;
      radio.checked = idx === 0;
      label.append(radio, ` ${m}`);
      measures.append(label);
    });
    state.measure = summary.measures[0] ?? "gradient";

    surface = await api.surface();
    view = new ViewTransform(summary.bounds, canvas.width, canvas.height);
    base = buildBase(surface);

    el<HTMLSpanElement>("scale").textContent =
      surface.vmin !== null && surface.vmax !== null
        ? `${fmt(surface.vmin)} … ${fmt(surface.vmax)}`
        : "–";

    wire();
    state.onChange(() => {
      renderPanel();
      redraw();
    });
    renderPanel();
    redraw();
  } catch (err) {
    showBanner(err instanceof Error ? err.message : String(err));
  }
}

void boot();
