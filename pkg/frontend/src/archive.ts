/** Parser for NSTW weight archives (little-endian binary).
 *
 * Layout (version 1):
 *   magic 'NSTW' | u32 version | u8 kind (0 single, 1 dual) | u8 input_dim
 *   u8 latent_dim | u8 rank | u64*rank grid dims | f64*rank element size
 *   f64 omega | f64 alpha
 *   u32 n_layers | per layer: u32 out, u32 in
 *   per layer payload: f64 W row-major, f64 b
 *   dual only:
 *     u32 n_mod_layers | headers/payloads as above
 *     u32 n_latents | per latent: f64 delta (NaN if unset) | f64*latent_dim z
 */

export interface Layer {
  /** row-major (out x in) */
  weights: Float64Array;
  bias: Float64Array;
  outDim: number;
  inDim: number;
}

export interface LatentEntry {
  /** volume fraction the subtask was trained for, if recorded */
  delta: number | null;
  z: Float64Array;
}

export interface ExplorerModel {
  kind: "single" | "dual";
  inputDim: number;
  latentDim: number;
  dims: number[];
  elementSize: number[];
  omega: number;
  alpha: number;
  layers: Layer[];
  modulator: Layer[];
  latents: LatentEntry[];
  /** stored latent range widened by 10% on each side (dual only) */
  zMin: number;
  zMax: number;
}

export class ArchiveError extends Error {}

class Reader {
  private view: DataView;
  private off = 0;

  constructor(private buf: ArrayBuffer) {
    this.view = new DataView(buf);
  }

  private need(n: number) {
    if (this.off + n > this.buf.byteLength) {
      throw new ArchiveError("truncated archive");
    }
  }

  u8(): number {
    this.need(1);
    return this.view.getUint8(this.off++);
  }

  u32(): number {
    this.need(4);
    const v = this.view.getUint32(this.off, true);
    this.off += 4;
    return v;
  }

  u64(): number {
    this.need(8);
    const v = this.view.getBigUint64(this.off, true);
    this.off += 8;
    if (v > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new ArchiveError("implausible 64-bit size field");
    }
    return Number(v);
  }

  f64(): number {
    this.need(8);
    const v = this.view.getFloat64(this.off, true);
    this.off += 8;
    return v;
  }

  f64array(n: number): Float64Array {
    this.need(8 * n);
    // copy: the source buffer may not be 8-byte aligned at this offset
    const out = new Float64Array(n);
    for (let i = 0; i < n; i++) {
      out[i] = this.view.getFloat64(this.off + 8 * i, true);
    }
    this.off += 8 * n;
    return out;
  }

  bytes(n: number): Uint8Array {
    this.need(n);
    const out = new Uint8Array(this.buf, this.off, n);
    this.off += n;
    return out;
  }

  atEnd(): boolean {
    return this.off === this.buf.byteLength;
  }
}

function readLayers(r: Reader): Layer[] {
  const n = r.u32();
  if (n === 0 || n > 1024) {
    throw new ArchiveError(`implausible layer count ${n}`);
  }
  const shapes: Array<[number, number]> = [];
  for (let i = 0; i < n; i++) {
    shapes.push([r.u32(), r.u32()]);
  }
  return shapes.map(([outDim, inDim]) => ({
    weights: r.f64array(outDim * inDim),
    bias: r.f64array(outDim),
    outDim,
    inDim,
  }));
}

export function parseArchive(buf: ArrayBuffer): ExplorerModel {
  const r = new Reader(buf);
  const magic = r.bytes(4);
  if (String.fromCharCode(...magic) !== "NSTW") {
    throw new ArchiveError("not a weight archive (bad magic)");
  }
  const version = r.u32();
  if (version !== 1) {
    throw new ArchiveError(`unsupported archive version ${version}`);
  }
  const kindByte = r.u8();
  const inputDim = r.u8();
  const latentDim = r.u8();
  const rank = r.u8();
  if ((kindByte !== 0 && kindByte !== 1) || (rank !== 2 && rank !== 3) || inputDim !== rank) {
    throw new ArchiveError("inconsistent archive header");
  }
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) dims.push(r.u64());
  const elementSize: number[] = [];
  for (let i = 0; i < rank; i++) elementSize.push(r.f64());
  const omega = r.f64();
  const alpha = r.f64();
  const layers = readLayers(r);
  for (let i = 0; i + 1 < layers.length; i++) {
    if (layers[i]!.outDim !== layers[i + 1]!.inDim) {
      throw new ArchiveError("layer dimensions do not chain");
    }
  }
  if (layers[0]!.inDim !== inputDim) {
    throw new ArchiveError("first layer does not match input dim");
  }

  if (kindByte === 0) {
    if (!r.atEnd()) throw new ArchiveError("trailing bytes in archive");
    return {
      kind: "single", inputDim, latentDim: 0, dims, elementSize, omega, alpha,
      layers, modulator: [], latents: [], zMin: 0, zMax: 0,
    };
  }

  const modulator = readLayers(r);
  const hidden = layers.slice(0, -1).map((l) => l.outDim);
  if (modulator.length !== hidden.length ||
      modulator.some((m, i) => m.outDim !== hidden[i])) {
    throw new ArchiveError("modulator widths do not match oscillator");
  }
  const nLatents = r.u32();
  const latents: LatentEntry[] = [];
  for (let i = 0; i < nLatents; i++) {
    const delta = r.f64();
    latents.push({
      delta: Number.isNaN(delta) ? null : delta,
      z: r.f64array(latentDim),
    });
  }
  if (!r.atEnd()) throw new ArchiveError("trailing bytes in archive");

  const firsts = latents.map((l) => l.z[0] ?? 0);
  let zMin = Math.min(...firsts);
  let zMax = Math.max(...firsts);
  const margin = 0.1 * (zMax - zMin || 1);
  zMin -= margin;
  zMax += margin;
  return {
    kind: "dual", inputDim, latentDim, dims, elementSize, omega, alpha,
    layers, modulator, latents, zMin, zMax,
  };
}
