/** Browser wiring: binds DOM controls to the studio controller. */

import { ApiClient } from "./api.js";
import { buffersEqual, compositeSplit } from "./compare.js";
import { StudioController, ViewportSurface } from "./controller.js";
import { widgetFromDirection } from "./lightWidget.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function bannerSurface(viewport: HTMLImageElement, banner: HTMLElement): ViewportSurface {
  return {
    showImage(bytes) {
      const blob = new Blob([bytes], { type: "image/png" });
      const url = URL.createObjectURL(blob);
      const old = viewport.src;
      viewport.src = url;
      if (old.startsWith("blob:")) URL.revokeObjectURL(old);
    },
    showError(message) {
      banner.textContent = message;
      banner.classList.remove("hidden");
    },
  };
}

function drawLightWidget(canvas: HTMLCanvasElement, dir: readonly number[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  const r = Math.min(width, height) / 2 - 2;
  ctx.clearRect(0, 0, width, height);
  const grad = ctx.createRadialGradient(
    width / 2 - r / 3, height / 2 - r / 3, r / 6, width / 2, height / 2, r,
  );
  grad.addColorStop(0, "#cfd8e3");
  grad.addColorStop(1, "#3b4656");
  ctx.fillStyle = grad;
  ctx.beginPath();
  ctx.arc(width / 2, height / 2, r, 0, 2 * Math.PI);
  ctx.fill();
  const { u, v } = widgetFromDirection([dir[0] ?? 0, dir[1] ?? 0, dir[2] ?? 1]);
  ctx.fillStyle = "#ffd75e";
  ctx.beginPath();
  ctx.arc(width / 2 + u * r, height / 2 - v * r, 5, 0, 2 * Math.PI);
  ctx.fill();
}

async function main(): Promise<void> {
  const base = (document.body.dataset.serviceUrl ?? "").replace(/\/$/, "")
    || `${location.protocol}//${location.host}`;
  const api = new ApiClient(base);

  const viewport = $<HTMLImageElement>("viewport");
  const banner = $<HTMLDivElement>("error-banner");
  banner.addEventListener("click", () => banner.classList.add("hidden"));

  const controller = new StudioController(api, bannerSurface(viewport, banner));

  // ---- session upload ----
  const uploadForm = $<HTMLFormElement>("upload-form");
  uploadForm.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const data = new FormData(uploadForm);
    const files: Record<string, Blob> = {};
    for (const name of ["portrait", "normal", "mask", "albedo", "coarse_depth"]) {
      const f = data.get(name);
      if (f instanceof File && f.size > 0) files[name] = f;
    }
    try {
      const id = await api.createSession(files);
      $<HTMLSpanElement>("session-id").textContent = id;
      await api.runStage(id, "integrate");
      await api.runStage(id, "mesh");
      controller.attachSession(id);
      $<HTMLAnchorElement>("mesh-link").href = api.meshUrl(id);
    } catch (err) {
      banner.textContent = err instanceof Error ? err.message : String(err);
      banner.classList.remove("hidden");
    }
  });

  // ---- pose drag on the viewport ----
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  viewport.addEventListener("pointerdown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
    viewport.setPointerCapture(ev.pointerId);
  });
  viewport.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const rect = viewport.getBoundingClientRect();
    controller.onPoseDrag(
      (ev.clientX - lastX) / rect.width,
      (lastY - ev.clientY) / rect.height,
    );
    lastX = ev.clientX;
    lastY = ev.clientY;
  });
  viewport.addEventListener("pointerup", () => {
    dragging = false;
  });

  // ---- light sphere widget ----
  const widget = $<HTMLCanvasElement>("light-widget");
  drawLightWidget(widget, [0.45, 0.35, 0.82]);
  const onWidget = (ev: PointerEvent) => {
    const rect = widget.getBoundingClientRect();
    const u = ((ev.clientX - rect.left) / rect.width) * 2 - 1;
    const v = -(((ev.clientY - rect.top) / rect.height) * 2 - 1);
    controller.onLightDrag(u, v);
    const light = controller.state.light;
    if (light.kind === "directional") drawLightWidget(widget, light.dir);
  };
  let lightDragging = false;
  widget.addEventListener("pointerdown", (ev) => {
    lightDragging = true;
    widget.setPointerCapture(ev.pointerId);
    onWidget(ev);
  });
  widget.addEventListener("pointermove", (ev) => {
    if (lightDragging) onWidget(ev);
  });
  widget.addEventListener("pointerup", () => {
    lightDragging = false;
  });

  // ---- presets, gains, output ----
  $<HTMLSelectElement>("preset").addEventListener("change", (ev) => {
    controller.onPresetSelected((ev.target as HTMLSelectElement).value);
  });
  const kd = $<HTMLInputElement>("kd");
  const ks = $<HTMLInputElement>("ks");
  const onGains = () => {
    const gains = Array(4).fill(Number(ks.value));
    controller.onGainsChange(Number(kd.value), gains);
  };
  kd.addEventListener("input", onGains);
  ks.addEventListener("input", onGains);
  $<HTMLSelectElement>("output").addEventListener("change", (ev) => {
    controller.onOutputChange(
      (ev.target as HTMLSelectElement).value as never,
    );
  });

  // ---- environment upload ----
  $<HTMLInputElement>("env-upload").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    const sessionId = controller.state.sessionId;
    if (!file || !sessionId) return;
    try {
      const id = await api.uploadLight(sessionId, file);
      controller.onEnvironmentSelected(id);
    } catch (err) {
      banner.textContent = err instanceof Error ? err.message : String(err);
      banner.classList.remove("hidden");
    }
  });

  // ---- A/B compare and export ----
  let snapshotA: ImageData | null = null;
  $<HTMLButtonElement>("pin-a").addEventListener("click", () => {
    const canvas = document.createElement("canvas");
    canvas.width = viewport.naturalWidth;
    canvas.height = viewport.naturalHeight;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.drawImage(viewport, 0, 0);
    snapshotA = ctx.getImageData(0, 0, canvas.width, canvas.height);
  });
  const compareCanvas = $<HTMLCanvasElement>("compare");
  const split = $<HTMLInputElement>("split");
  split.addEventListener("input", () => {
    if (!snapshotA) return;
    const canvas = document.createElement("canvas");
    canvas.width = snapshotA.width;
    canvas.height = snapshotA.height;
    const ctx = canvas.getContext("2d");
    const cctx = compareCanvas.getContext("2d");
    if (!ctx || !cctx) return;
    ctx.drawImage(viewport, 0, 0);
    const current = ctx.getImageData(0, 0, canvas.width, canvas.height);
    const out = compositeSplit(
      snapshotA.data, current.data, canvas.width, canvas.height,
      Number(split.value) / 100,
    );
    compareCanvas.width = canvas.width;
    compareCanvas.height = canvas.height;
    cctx.putImageData(new ImageData(out, canvas.width, canvas.height), 0, 0);
    if (buffersEqual(snapshotA.data, current.data)) {
      compareCanvas.title = "A and B are identical";
    }
  });
  $<HTMLButtonElement>("export").addEventListener("click", () => {
    const bytes = controller.exportCurrent();
    if (!bytes) return;
    const a = document.createElement("a");
    a.href = URL.createObjectURL(new Blob([bytes], { type: "image/png" }));
    a.download = "render.png";
    a.click();
  });
}

main().catch((err) => console.error(err));
