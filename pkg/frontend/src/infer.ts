/** Feedforward inference matching the primary toolkit's network math:
 * sinusoidal hidden layers (first-layer frequency baked into the stored
 * weights), optional per-layer ReLU modulator gains from a latent code,
 * and an arctangent output squash onto (0, 1). */

import type { ExplorerModel, Layer } from "./archive.js";

export const PREVIEW_CAP = 128;

/** Normalized sample coordinates of the scale-times-subdivided grid,
 * x fastest, each axis mapped to (-1, 1) at cell centers. */
export function sampleCoordinates(dims: number[], scale: number): Float64Array {
  const refined = dims.map((d) => d * scale);
  const n = refined.reduce((a, b) => a * b, 1);
  const rank = dims.length;
  const out = new Float64Array(n * rank);
  for (let e = 0; e < n; e++) {
    let rem = e;
    for (let a = 0; a < rank; a++) {
      const d = refined[a]!;
      const idx = rem % d;
      rem = Math.floor(rem / d);
      out[e * rank + a] = ((idx + 0.5) / d) * 2 - 1;
    }
  }
  return out;
}

function applyLayer(layer: Layer, input: Float64Array, batch: number): Float64Array {
  const { weights, bias, outDim, inDim } = layer;
  const out = new Float64Array(batch * outDim);
  for (let r = 0; r < batch; r++) {
    for (let o = 0; o < outDim; o++) {
      let acc = bias[o]!;
      const wRow = o * inDim;
      const xRow = r * inDim;
      for (let i = 0; i < inDim; i++) {
        acc += weights[wRow + i]! * input[xRow + i]!;
      }
      out[r * outDim + o] = acc;
    }
  }
  return out;
}

/** ReLU modulator gains for one latent code, one vector per hidden layer. */
export function modulatorGains(model: ExplorerModel, z: Float64Array): Float64Array[] {
  let a = z;
  const gains: Float64Array[] = [];
  for (const layer of model.modulator) {
    const pre = applyLayer(layer, a, 1);
    for (let i = 0; i < pre.length; i++) {
      pre[i] = Math.max(pre[i]!, 0);
    }
    gains.push(pre);
    a = pre;
  }
  return gains;
}

/** Density field at the given latent (null for single-network archives)
 * and super-resolution scale, in refined-element order (x fastest). */
export function inferField(
  model: ExplorerModel, z: Float64Array | null, scale: number,
): Float64Array {
  if (model.kind === "dual" && z === null) {
    throw new Error("dual archive inference requires a latent code");
  }
  const coords = sampleCoordinates(model.dims, scale);
  const batch = coords.length / model.inputDim;
  const gains = model.kind === "dual" ? modulatorGains(model, z!) : null;

  let h = coords;
  for (let li = 0; li + 1 < model.layers.length; li++) {
    const layer = model.layers[li]!;
    h = applyLayer(layer, h, batch);
    const psi = gains ? gains[li]! : null;
    for (let r = 0; r < batch; r++) {
      for (let o = 0; o < layer.outDim; o++) {
        const k = r * layer.outDim + o;
        const s = Math.sin(h[k]!);
        h[k] = psi ? s * psi[o]! : s;
      }
    }
  }
  const out = applyLayer(model.layers[model.layers.length - 1]!, h, batch);
  for (let i = 0; i < out.length; i++) {
    out[i] = Math.atan(model.alpha * out[i]!) / Math.PI + 0.5;
  }
  return out;
}

/** Preview inference with the resolution cap applied to every axis. */
export function inferPreview(
  model: ExplorerModel, z: Float64Array | null, scale: number,
): { values: Float64Array; dims: number[] } {
  const dims = model.dims.map((d) => d * scale);
  if (dims.some((d) => d > PREVIEW_CAP)) {
    throw new Error(
      `preview resolution ${dims.join("x")} exceeds the ${PREVIEW_CAP} cap`,
    );
  }
  return { values: inferField(model, z, scale), dims };
}

/** Mean density, the V/V0 readout. */
export function volumeFraction(values: Float64Array): number {
  let sum = 0;
  for (let i = 0; i < values.length; i++) sum += values[i]!;
  return sum / values.length;
}
