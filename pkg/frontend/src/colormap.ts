/**
 * Color ramps and number formatting for rendering server payloads.
 *
 * Interpolating ramp anchors is raster styling, not inference; the numbers
 * painted or printed are always payload values passed through `fmt`.
 */

export type Rgb = [number, number, number];

/* viridis-like anchors, dark blue through teal to yellow */
const RAMP: Rgb[] = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

export const MISSING_RGB: Rgb = [205, 205, 205];

/** Map t in [0, 1] onto the ramp; out-of-range t clamps. */
export function heat(t: number): Rgb {
  if (!Number.isFinite(t)) {
    return MISSING_RGB;
  }
  const clamped = Math.min(1, Math.max(0, t));
  const pos = clamped * (RAMP.length - 1);
  const lo = Math.floor(pos);
  const hi = Math.min(lo + 1, RAMP.length - 1);
  const w = pos - lo;
  const a = RAMP[lo] as Rgb;
  const b = RAMP[hi] as Rgb;
  return [
    Math.round(a[0] + w * (b[0] - a[0])),
    Math.round(a[1] + w * (b[1] - a[1])),
    Math.round(a[2] + w * (b[2] - a[2])),
  ];
}

/** Segment stroke for a significance flag: +1 green, -1 cyan, 0 gray. */
export function sigColor(sig: number): string {
  if (sig > 0) {
    return "#1b9e48";
  }
  if (sig < 0) {
    return "#0fb6c9";
  }
  return "#8a8a8a";
}

/** Compact display form of a payload number. Formatting only, no math. */
export function fmt(v: number | null | undefined): string {
  if (v === null || v === undefined || !Number.isFinite(v)) {
    return "–";
  }
  const s = v.toPrecision(6);
  return s.includes(".") && !s.includes("e")
    ? s.replace(/\.?0+$/, "")
    : s;
}
