/**
 * Application state: the curve being drawn, the submission queue, results,
 * and the error banner.
 *
 * Wombling requests serialize through a FIFO queue so at most one is in
 * flight at a time; extra submissions wait their turn instead of racing.
 * Results are stored exactly as the server returned them.
 */

import { ApiClient, ApiError, WomblePayload } from "./api.js";

export interface Submission {
  id: number;
  curve: [number, number][];
  seed: number;
  result: WomblePayload;
}

export type Listener = () => void;

export class AppState {
  vertices: [number, number][] = [];
  snapEnabled = false;
  measure = "gradient";
  submissions: Submission[] = [];
  selectedId: number | null = null;
  banner: string | null = null;
  inFlight = false;

  private queue: { curve: [number, number][]; seed: number }[] = [];
  private nextId = 1;
  private listeners: Listener[] = [];
  private draining: Promise<void> | null = null;

  onChange(fn: Listener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) {
      fn();
    }
  }

  addVertex(x: number, y: number): void {
    this.vertices.push([x, y]);
    this.emit();
  }

  undoVertex(): void {
    this.vertices.pop();
    this.emit();
  }

  clearDraft(): void {
    this.vertices = [];
    this.emit();
  }

  /** Replace the draft with a server-provided polyline (contour lift). */
  loadCurve(points: [number, number][]): void {
    this.vertices = points.map(([x, y]) => [x, y]);
    this.emit();
  }

  canSubmit(): boolean {
    return this.vertices.length >= 2;
  }

  setMeasure(measure: string): void {
    this.measure = measure;
    this.emit();
  }

  select(id: number): void {
    this.selectedId = id;
    this.emit();
  }

  selected(): Submission | null {
    return this.submissions.find((s) => s.id === this.selectedId) ?? null;
  }

  /**
   * Queue the current draft for wombling. Resolves when the queue drains,
   * so callers (and tests) can await completion of everything enqueued.
   */
  submit(api: ApiClient, seed: number): Promise<void> {
    if (!this.canSubmit()) {
      this.banner = "a curve needs at least 2 vertices";
      this.emit();
      return Promise.resolve();
    }
    this.queue.push({
      curve: this.vertices.map(([x, y]) => [x, y]),
      seed,
    });
    if (!this.draining) {
      this.draining = this.drain(api);
    }
    return this.draining;
  }

  private async drain(api: ApiClient): Promise<void> {
    this.inFlight = true;
    this.emit();
    try {
      for (let job = this.queue.shift(); job; job = this.queue.shift()) {
        try {
          const result = await api.womble(job.curve, job.seed);
          const sub: Submission = {
            id: this.nextId++,
            curve: job.curve,
            seed: job.seed,
            result,
          };
          this.submissions.push(sub);
          this.selectedId = sub.id;
          this.banner = null;
        } catch (err) {
          this.banner =
            err instanceof ApiError ? err.message : String(err);
        }
        this.emit();
      }
    } finally {
      this.inFlight = false;
      this.draining = null;
      this.emit();
    }
  }
}
