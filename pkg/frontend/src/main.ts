/** DOM wiring for the explorer page: archive file input, latent slider
 * with tick marks at stored subtask latents, scale selector, canvas
 * render and V/V0 readout. */

import { parseArchive, type ExplorerModel } from "./archive.js";
import { inferPreview, volumeFraction, PREVIEW_CAP } from "./infer.js";
import { drawField } from "./render.js";
import { Debouncer } from "./debounce.js";

const SLIDER_STEPS = 200;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string | null): void {
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function maxScale(model: ExplorerModel): number {
  const coarsest = Math.max(...model.dims);
  return Math.max(1, Math.floor(PREVIEW_CAP / coarsest));
}

class ExplorerApp {
  private model: ExplorerModel | null = null;
  private debouncer = new Debouncer(100);

  private slider = el<HTMLInputElement>("latent-slider");
  private sliderRow = el<HTMLDivElement>("latent-row");
  private ticks = el<HTMLDataListElement>("latent-ticks");
  private scaleSelect = el<HTMLSelectElement>("scale-select");
  private canvas = el<HTMLCanvasElement>("field-canvas");
  private volume = el<HTMLSpanElement>("volume-readout");
  private latentValue = el<HTMLSpanElement>("latent-value");

  constructor() {
    el<HTMLInputElement>("archive-input").addEventListener("change", (ev) => {
      const input = ev.target as HTMLInputElement;
      const file = input.files?.[0];
      if (file) void this.loadFile(file);
    });
    this.slider.addEventListener("input", () => this.scheduleRender());
    this.scaleSelect.addEventListener("change", () => this.scheduleRender());
  }

  private async loadFile(file: File): Promise<void> {
    try {
      const buf = await file.arrayBuffer();
      this.model = parseArchive(buf);
      showError(null);
      this.configureControls();
      this.scheduleRender();
    } catch (err) {
      this.model = null;
      showError(err instanceof Error ? err.message : String(err));
    }
  }

  private configureControls(): void {
    const model = this.model!;
    const cap = maxScale(model);
    this.scaleSelect.innerHTML = "";
    for (let s = 1; s <= Math.max(cap, 1); s++) {
      const opt = document.createElement("option");
      opt.value = String(s);
      opt.textContent = `${s}x`;
      this.scaleSelect.appendChild(opt);
    }

    if (model.kind === "single") {
      this.sliderRow.style.display = "none";
      return;
    }
    this.sliderRow.style.display = "";
    this.slider.min = "0";
    this.slider.max = String(SLIDER_STEPS);
    this.slider.value = "0";
    this.ticks.innerHTML = "";
    for (const entry of model.latents) {
      const z = entry.z[0] ?? 0;
      const frac = (z - model.zMin) / (model.zMax - model.zMin);
      const opt = document.createElement("option");
      opt.value = String(Math.round(frac * SLIDER_STEPS));
      if (entry.delta !== null) {
        opt.label = `δ=${entry.delta.toFixed(2)}`;
      }
      this.ticks.appendChild(opt);
    }
  }

  private currentLatent(): Float64Array | null {
    const model = this.model!;
    if (model.kind === "single") return null;
    const frac = Number(this.slider.value) / SLIDER_STEPS;
    const z = model.zMin + frac * (model.zMax - model.zMin);
    const code = new Float64Array(model.latentDim);
    code[0] = z;
    return code;
  }

  private scheduleRender(): void {
    this.debouncer.request(() => this.renderOnce());
  }

  private renderOnce(): void {
    const model = this.model;
    if (!model) return;
    try {
      const z = this.currentLatent();
      const scale = Number(this.scaleSelect.value) || 1;
      const { values, dims } = inferPreview(model, z, scale);
      drawField(this.canvas, values, dims);
      this.volume.textContent = volumeFraction(values).toFixed(3);
      this.latentValue.textContent = z ? (z[0] ?? 0).toFixed(3) : "—";
      showError(null);
    } catch (err) {
      showError(err instanceof Error ? err.message : String(err));
    }
  }
}

if (typeof document !== "undefined") {
  new ExplorerApp();
}
