/** A/B split compositor: pixels left of the split come from A, the rest
 * from B. Pure function over RGBA buffers so it is testable off-DOM. */

export function compositeSplit(
  a: Uint8ClampedArray,
  b: Uint8ClampedArray,
  width: number,
  height: number,
  splitFrac: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (a.length !== b.length || a.length !== width * height * 4) {
    throw new Error("buffer sizes do not match dimensions");
  }
  const splitX = Math.round(Math.min(1, Math.max(0, splitFrac)) * width);
  const out = new Uint8ClampedArray(a.length);
  for (let y = 0; y < height; y++) {
    const row = y * width * 4;
    const cut = row + splitX * 4;
    out.set(a.subarray(row, cut), row);
    out.set(b.subarray(cut, row + width * 4), cut);
  }
  return out;
}

/** True when the two buffers are pixel-identical (the slider is inert). */
export function buffersEqual(a: Uint8ClampedArray, b: Uint8ClampedArray): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}
