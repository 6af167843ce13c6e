/** Field-to-raster mapping, shared with the primary pgm8 exporter:
 * material is dark, pixel = 255 - round(255 * rho), y axis flipped so
 * larger y is drawn higher. */

export function toGrayscale(
  values: Float64Array, nx: number, ny: number,
): Uint8ClampedArray<ArrayBuffer> {
  const rgba = new Uint8ClampedArray(new ArrayBuffer(nx * ny * 4));
  for (let row = 0; row < ny; row++) {
    const fieldRow = ny - 1 - row; // field y points up, raster rows go down
    for (let col = 0; col < nx; col++) {
      const rho = Math.min(Math.max(values[fieldRow * nx + col]!, 0), 1);
      const g = 255 - Math.round(255 * rho);
      const p = (row * nx + col) * 4;
      rgba[p] = g;
      rgba[p + 1] = g;
      rgba[p + 2] = g;
      rgba[p + 3] = 255;
    }
  }
  return rgba;
}

/** Middle-z slice of a 3D field in x-fastest order; 3D archives are
 * previewed as 2D slices. */
export function middleSlice(values: Float64Array, dims: number[]): { values: Float64Array; nx: number; ny: number } {
  const [nx, ny, nz] = [dims[0]!, dims[1]!, dims[2]!];
  const k = Math.floor(nz / 2);
  const out = values.slice(k * nx * ny, (k + 1) * nx * ny);
  return { values: out, nx, ny };
}

export function drawField(
  canvas: HTMLCanvasElement, values: Float64Array, dims: number[],
): void {
  let plane: { values: Float64Array; nx: number; ny: number };
  if (dims.length === 3) {
    plane = middleSlice(values, dims);
  } else {
    plane = { values, nx: dims[0]!, ny: dims[1]! };
  }
  canvas.width = plane.nx;
  canvas.height = plane.ny;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const image = new ImageData(toGrayscale(plane.values, plane.nx, plane.ny), plane.nx, plane.ny);
  ctx.putImageData(image, 0, 0);
}
