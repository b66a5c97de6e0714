/**
 * Affine mapping between domain coordinates and canvas pixels.
 *
 * The y axis flips: domain y grows upward, canvas y grows downward. Both
 * directions are exact affine maps, so a pixel -> domain -> pixel round
 * trip loses at most floating-point noise, far inside the 0.5 px budget.
 */

import type { Bounds } from "./api.js";

export class ViewTransform {
  constructor(
    readonly bounds: Bounds,
    readonly width: number,
    readonly height: number,
  ) {
    if (!(bounds.xmax > bounds.xmin) || !(bounds.ymax > bounds.ymin)) {
      throw new Error("view bounds must have positive extent");
    }
    if (!(width > 0) || !(height > 0)) {
      throw new Error("view size must be positive");
    }
  }

  toPixel(x: number, y: number): [number, number] {
    const { xmin, xmax, ymin, ymax } = this.bounds;
    const px = ((x - xmin) / (xmax - xmin)) * this.width;
    const py = ((ymax - y) / (ymax - ymin)) * this.height;
    return [px, py];
  }

  toDomain(px: number, py: number): [number, number] {
    const { xmin, xmax, ymin, ymax } = this.bounds;
    const x = xmin + (px / this.width) * (xmax - xmin);
    const y = ymax - (py / this.height) * (ymax - ymin);
    return [x, y];
  }
}

/** Index of the entry in `sorted` closest to `v` (ties pick the lower). */
export function nearestIndex(sorted: number[], v: number): number {
  if (sorted.length === 0) {
    throw new Error("nearestIndex needs a non-empty array");
  }
  let best = 0;
  let bestDist = Math.abs(v - (sorted[0] as number));
  for (let i = 1; i < sorted.length; i++) {
    const d = Math.abs(v - (sorted[i] as number));
    if (d < bestDist) {
      best = i;
      bestDist = d;
    }
  }
  return best;
}

/** Snap a domain point to the nearest grid node of the surface payload. */
export function snapToNode(
  xs: number[],
  ys: number[],
  x: number,
  y: number,
): [number, number] {
  return [xs[nearestIndex(xs, x)] as number, ys[nearestIndex(ys, y)] as number];
}
