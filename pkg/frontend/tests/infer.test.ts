import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { parseArchive } from "../src/archive.js";
import {
  inferField, inferPreview, sampleCoordinates, volumeFraction, PREVIEW_CAP,
} from "../src/infer.js";
import { parseRaw64 } from "../src/raw64.js";

const GOLDEN = join(__dirname, "golden");

function load(name: string): ArrayBuffer {
  const buf = readFileSync(join(GOLDEN, name));
  return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
}

function maxAbsDiff(a: Float64Array, b: Float64Array): number {
  expect(a.length).toBe(b.length);
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    worst = Math.max(worst, Math.abs(a[i]! - b[i]!));
  }
  return worst;
}

describe("sampleCoordinates", () => {
  it("matches the primary convention: x fastest, centers in (-1, 1)", () => {
    const pts = sampleCoordinates([2, 2], 1);
    expect(Array.from(pts)).toEqual([
      -0.5, -0.5, 0.5, -0.5, -0.5, 0.5, 0.5, 0.5,
    ]);
  });

  it("refines per axis under scale", () => {
    const pts = sampleCoordinates([2, 1], 2);
    expect(pts.length).toBe(4 * 2 * 2);
    expect(pts[0]).toBeCloseTo(-0.75, 12);
    expect(pts[2]).toBeCloseTo(-0.25, 12);
  });
});

describe("inferField parity with the primary CLI", () => {
  it("single archive, scale 1", () => {
    const model = parseArchive(load("single.nstw"));
    const golden = parseRaw64(load("single_s1.raw64"));
    const values = inferField(model, null, 1);
    expect(maxAbsDiff(values, golden.values)).toBeLessThan(1e-4);
  });

  it("single archive, scale 2 (super-resolution)", () => {
    const model = parseArchive(load("single.nstw"));
    const golden = parseRaw64(load("single_s2.raw64"));
    const values = inferField(model, null, 2);
    expect(maxAbsDiff(values, golden.values)).toBeLessThan(1e-4);
  });

  it("dual archive at each stored latent", () => {
    const model = parseArchive(load("dual.nstw"));
    for (const [i, entry] of model.latents.entries()) {
      const golden = parseRaw64(load(`dual_z${i}.raw64`));
      const values = inferField(model, entry.z, 1);
      expect(maxAbsDiff(values, golden.values)).toBeLessThan(1e-4);
    }
  });

  it("dual archive at an interpolated latent", () => {
    const meta = JSON.parse(readFileSync(join(GOLDEN, "meta.json"), "utf-8"));
    const model = parseArchive(load("dual.nstw"));
    const golden = parseRaw64(load("dual_mid.raw64"));
    const values = inferField(model, Float64Array.of(meta.dual_mid), 1);
    expect(maxAbsDiff(values, golden.values)).toBeLessThan(1e-4);
  });
});

describe("inferField edge cases", () => {
  it("all-zero weights give a uniform 0.5 field", () => {
    const model = parseArchive(load("zero.nstw"));
    const values = inferField(model, null, 1);
    for (const v of values) expect(v).toBe(0.5);
  });

  it("densities stay strictly inside (0, 1)", () => {
    const model = parseArchive(load("single.nstw"));
    for (const v of inferField(model, null, 1)) {
      expect(v).toBeGreaterThan(0);
      expect(v).toBeLessThan(1);
    }
  });

  it("dual inference requires a latent", () => {
    const model = parseArchive(load("dual.nstw"));
    expect(() => inferField(model, null, 1)).toThrow(/latent/);
  });

  it("preview cap rejects oversized resolutions", () => {
    const model = parseArchive(load("single.nstw"));
    expect(() => inferPreview(model, null, 5)).toThrow(String(PREVIEW_CAP));
    const ok = inferPreview(model, null, 4); // 128 exactly
    expect(ok.dims).toEqual([128, 128]);
  });
});

describe("volumeFraction", () => {
  it("matches the primary readout for the golden field", () => {
    const golden = parseRaw64(load("single_s1.raw64"));
    expect(volumeFraction(golden.values)).toBeCloseTo(0.5125, 3);
  });

  it("is exact on hand fields", () => {
    expect(volumeFraction(Float64Array.of(1, 1, 1, 1))).toBe(1);
    expect(volumeFraction(Float64Array.of(0, 1, 0, 1))).toBe(0.5);
  });
});
