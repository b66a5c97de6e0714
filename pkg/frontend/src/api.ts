/**
 * Typed client for the wombler HTTP JSON API.
 *
 * Every number shown anywhere in the UI comes out of one of these payloads.
 * The client never derives statistics of its own; it forwards curves and
 * seeds to the server and hands back whatever the server said, so two
 * submissions with the same curve and seed render identically.
 *
 * Grid payloads are x-major: values[i][j] belongs to (xs[i], ys[j]).
 */

export interface QuantileSummary {
  "q2.5": number;
  q50: number;
  "q97.5": number;
}

export interface Verdict extends QuantileSummary {
  sig: number;
}

export interface Bounds {
  xmin: number;
  xmax: number;
  ymin: number;
  ymax: number;
}

export interface SummaryPayload {
  family: string;
  site_count: number;
  draw_count: number;
  seed: number;
  params: Record<string, QuantileSummary>;
  accept_rates: Record<string, number>;
  bounds: Bounds;
  rate_components: string[];
  measures: string[];
}

export interface SurfacePayload {
  nx: number;
  ny: number;
  xs: number[];
  ys: number[];
  values: number[][];
  missing: boolean[][];
  vmin: number | null;
  vmax: number | null;
}

export interface RatesPayload {
  component: string;
  nx: number;
  ny: number;
  xs: number[];
  ys: number[];
  "q2.5": number[][];
  q50: number[][];
  "q97.5": number[][];
  sig: number[][];
}

export interface ContoursPayload {
  level: number;
  count: number;
  contours: [number, number][][];
}

export interface WomblePayload {
  arc_length: number;
  seed: number;
  measures: string[];
  segments: Record<string, Verdict[]>;
  totals: Record<string, Verdict>;
  averages: Record<string, QuantileSummary>;
  vertices: [number, number][];
}

/** Server-reported failure; `message` is the server's error text verbatim. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

function need(cond: boolean, what: string): void {
  if (!cond) {
    throw new ApiError(0, `payload schema mismatch: ${what}`);
  }
}

/** Reject surface payloads whose grid arrays do not agree with nx/ny. */
export function checkSurface(p: SurfacePayload): SurfacePayload {
  need(Number.isInteger(p?.nx) && p.nx > 0, "nx must be a positive integer");
  need(Number.isInteger(p?.ny) && p.ny > 0, "ny must be a positive integer");
  need(Array.isArray(p.xs) && p.xs.length === p.nx, `xs must have ${p?.nx} entries`);
  need(Array.isArray(p.ys) && p.ys.length === p.ny, `ys must have ${p?.ny} entries`);
  need(Array.isArray(p.values) && p.values.length === p.nx, "values must be x-major");
  need(
    p.values.every((col) => Array.isArray(col) && col.length === p.ny),
    "every values column must have ny entries",
  );
  return p;
}

export function checkWomble(p: WomblePayload): WomblePayload {
  need(Array.isArray(p?.measures) && p.measures.length > 0, "measures missing");
  for (const m of p.measures) {
    need(Array.isArray(p.segments?.[m]), `segments missing for ${m}`);
    need(typeof p.totals?.[m]?.q50 === "number", `totals missing for ${m}`);
  }
  need(typeof p.arc_length === "number", "arc_length missing");
  return p;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    const text = await res.text();
    if (!res.ok) {
      let message = text;
      try {
        const parsed = JSON.parse(text);
        if (parsed && typeof parsed.error === "string") {
          message = parsed.error;
        }
      } catch {
        // non-JSON error body stays verbatim
      }
      throw new ApiError(res.status, message);
    }
    return JSON.parse(text) as T;
  }

  summary(): Promise<SummaryPayload> {
    return this.request<SummaryPayload>("/api/model/summary");
  }

  async surface(nx?: number, ny?: number): Promise<SurfacePayload> {
    const q = gridQuery(nx, ny);
    return checkSurface(await this.request<SurfacePayload>(`/api/surface${q}`));
  }

  rates(component: string, nx?: number, ny?: number): Promise<RatesPayload> {
    const q = gridQuery(nx, ny, `component=${encodeURIComponent(component)}`);
    return this.request<RatesPayload>(`/api/rates${q}`);
  }

  contours(level: number, nx?: number, ny?: number): Promise<ContoursPayload> {
    const q = gridQuery(nx, ny, `level=${encodeURIComponent(String(level))}`);
    return this.request<ContoursPayload>(`/api/contours${q}`);
  }

  async womble(curve: [number, number][], seed: number): Promise<WomblePayload> {
    const payload = await this.request<WomblePayload>("/api/womble", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ curve, seed }),
    });
    return checkWomble(payload);
  }
}

function gridQuery(nx?: number, ny?: number, first?: string): string {
  const parts: string[] = first ? [first] : [];
  if (nx !== undefined) {
    parts.push(`nx=${nx}`);
  }
  if (ny !== undefined) {
    parts.push(`ny=${ny}`);
  }
  return parts.length ? `?${parts.join("&")}` : "";
}
