/**
 * Pure render-model helpers: payload values in, display strings out.
 *
 * These exist so tests can assert the passthrough property directly: every
 * number in a returned string is a formatted payload field, with no
 * client-side arithmetic between the server response and the screen.
 */

import type { SurfacePayload, WomblePayload } from "./api.js";
import { fmt } from "./colormap.js";
import type { Submission } from "./state.js";

/** Hover readout for grid node (i, j): coordinates and fitted value. */
export function hoverReadout(surface: SurfacePayload, i: number, j: number): string {
  const x = surface.xs[i];
  const y = surface.ys[j];
  if (x === undefined || y === undefined) {
    return "";
  }
  const missing = surface.missing[i]?.[j];
  const value = missing ? null : surface.values[i]?.[j];
  return `x=${fmt(x)}  y=${fmt(y)}  ẑ=${fmt(value)}`;
}

export interface TotalsView {
  measure: string;
  total: string;
  average: string;
  sig: number;
}

/** Totals panel rows, one per measure reported by the server. */
export function totalsView(result: WomblePayload): TotalsView[] {
  return result.measures.map((measure) => {
    const t = result.totals[measure];
    const a = result.averages[measure];
    return {
      measure,
      total: t
        ? `${fmt(t.q50)}  [${fmt(t["q2.5"])}, ${fmt(t["q97.5"])}]`
        : "–",
      average: a
        ? `${fmt(a.q50)}  [${fmt(a["q2.5"])}, ${fmt(a["q97.5"])}]`
        : "–",
      sig: t ? t.sig : 0,
    };
  });
}

/** One-line label for the submissions list. */
export function submissionLabel(sub: Submission): string {
  const segs = sub.result.segments[sub.result.measures[0] ?? ""]?.length ?? 0;
  return (
    `#${sub.id}  seed ${sub.seed}  ${segs} segment${segs === 1 ? "" : "s"}` +
    `  length ${fmt(sub.result.arc_length)}`
  );
}

/** Significance flags of the selected measure, one per segment. */
export function segmentSigs(result: WomblePayload, measure: string): number[] {
  return (result.segments[measure] ?? []).map((seg) => seg.sig);
}
