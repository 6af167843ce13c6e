/** Parser for raw64 density files written by the primary CLI.
 * Layout: magic 'NSTO' | u32 version | u8 rank | u64*rank dims | u32 scale
 * | f64 payload, all little-endian. */

export interface DensityField {
  values: Float64Array;
  dims: number[];
  scale: number;
}

export class Raw64Error extends Error {}

export function parseRaw64(buf: ArrayBuffer): DensityField {
  const view = new DataView(buf);
  if (buf.byteLength < 9) throw new Raw64Error("truncated raw64 file");
  const magic = String.fromCharCode(
    view.getUint8(0), view.getUint8(1), view.getUint8(2), view.getUint8(3),
  );
  if (magic !== "NSTO") throw new Raw64Error("not a raw64 density file");
  const version = view.getUint32(4, true);
  if (version !== 1) throw new Raw64Error(`unsupported raw64 version ${version}`);
  const rank = view.getUint8(8);
  let off = 9;
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    const v = view.getBigUint64(off, true);
    off += 8;
    dims.push(Number(v));
  }
  const scale = view.getUint32(off, true);
  off += 4;
  const n = dims.reduce((a, b) => a * b, 1);
  if (buf.byteLength !== off + 8 * n) {
    throw new Raw64Error("raw64 payload size does not match dims");
  }
  const values = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    values[i] = view.getFloat64(off + 8 * i, true);
  }
  return { values, dims, scale };
}
