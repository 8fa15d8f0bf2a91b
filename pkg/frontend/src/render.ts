/** Pure rendering helpers: colormap, raster -> RGBA, contour extraction.
 *
 * Everything here is a pure function of its inputs so identical payloads
 * always produce identical pixels; the canvas blitting lives in main.ts.
 */

/** Viridis-like piecewise-linear colormap over a fixed [0, 1] range. */
const STOPS: [number, [number, number, number]][] = [
  [0.0, [68, 1, 84]],
  [0.25, [59, 82, 139]],
  [0.5, [33, 145, 140]],
  [0.75, [94, 201, 98]],
  [1.0, [253, 231, 37]],
];

export function colormap(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, t));
  for (let i = 1; i < STOPS.length; i++) {
    const [t1, c1] = STOPS[i];
    if (x <= t1) {
      const [t0, c0] = STOPS[i - 1];
      const f = t1 === t0 ? 0 : (x - t0) / (t1 - t0);
      return [
        Math.round(c0[0] + f * (c1[0] - c0[0])),
        Math.round(c0[1] + f * (c1[1] - c0[1])),
        Math.round(c0[2] + f * (c1[2] - c0[2])),
      ];
    }
  }
  return STOPS[STOPS.length - 1][1];
}

/** Blue-white-red map for signed difference rasters, symmetric about 0. */
export function divergingColormap(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(-1, t));
  if (x < 0) {
    const f = 1 + x; // 0 at -1, 1 at 0
    return [Math.round(255 * f), Math.round(255 * f), 255];
  }
  const f = 1 - x;
  return [255, Math.round(255 * f), Math.round(255 * f)];
}

/**
 * Map a row-major raster to RGBA bytes.  Values are scaled by [lo, hi];
 * nodes outside the mask are dimmed to a neutral gray.
 */
export function rasterToRGBA(
  values: number[],
  mask: number[] | null,
  lo: number,
  hi: number,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(values.length * 4);
  const span = hi > lo ? hi - lo : 1;
  for (let i = 0; i < values.length; i++) {
    const inside = mask === null || mask[i] !== 0;
    const [r, g, b] = colormap((values[i] - lo) / span);
    out[4 * i] = inside ? r : 40;
    out[4 * i + 1] = inside ? g : 40;
    out[4 * i + 2] = inside ? b : 44;
    out[4 * i + 3] = 255;
  }
  return out;
}

export function diffToRGBA(diff: number[], scale: number): Uint8ClampedArray {
  const out = new Uint8ClampedArray(diff.length * 4);
  const s = scale > 0 ? scale : 1;
  for (let i = 0; i < diff.length; i++) {
    const [r, g, b] = divergingColormap(diff[i] / s);
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = 255;
  }
  return out;
}

export type Segment = [number, number, number, number]; // x0, y0, x1, y1 in cell units

/**
 * Marching-squares iso-contour of a row-major raster at `level`.
 * Returns line segments in fractional pixel coordinates (x right, y down),
 * suitable for overlaying on the rendered raster.
 */
export function contourSegments(
  values: number[],
  width: number,
  height: number,
  level: number,
): Segment[] {
  const at = (ix: number, iy: number) => values[iy * width + ix];
  const lerp = (a: number, b: number) => (level - a) / (b - a);
  const segments: Segment[] = [];
  for (let iy = 0; iy < height - 1; iy++) {
    for (let ix = 0; ix < width - 1; ix++) {
      const tl = at(ix, iy);
      const tr = at(ix + 1, iy);
      const br = at(ix + 1, iy + 1);
      const bl = at(ix, iy + 1);
      let code =
        (tl >= level ? 8 : 0) | (tr >= level ? 4 : 0) | (br >= level ? 2 : 0) | (bl >= level ? 1 : 0);
      if (code === 0 || code === 15) continue;
      // edge interpolation points
      const top: [number, number] = [ix + lerp(tl, tr), iy];
      const right: [number, number] = [ix + 1, iy + lerp(tr, br)];
      const bottom: [number, number] = [ix + lerp(bl, br), iy + 1];
      const left: [number, number] = [ix, iy + lerp(tl, bl)];
      const add = (a: [number, number], b: [number, number]) =>
        segments.push([a[0], a[1], b[0], b[1]]);
      switch (code) {
        case 1:
        case 14:
          add(left, bottom);
          break;
        case 2:
        case 13:
          add(bottom, right);
          break;
        case 3:
        case 12:
          add(left, right);
          break;
        case 4:
        case 11:
          add(top, right);
          break;
        case 5: // saddle: resolve by cell-center average
          if ((tl + tr + br + bl) / 4 >= level) {
            add(top, right);
            add(left, bottom);
          } else {
            add(top, left);
            add(bottom, right);
          }
          break;
        case 6:
        case 9:
          add(top, bottom);
          break;
        case 7:
        case 8:
          add(top, left);
          break;
        case 10:
          if ((tl + tr + br + bl) / 4 >= level) {
            add(top, left);
            add(bottom, right);
          } else {
            add(top, right);
            add(left, bottom);
          }
          break;
      }
    }
  }
  return segments;
}
