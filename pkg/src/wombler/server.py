"""Read-only HTTP JSON service over a fitted model archive.

Endpoints:
  GET  /api/model/summary                  family, parameter CIs, bounds
  GET  /api/surface?nx=&ny=                posterior-mean surface grid
  GET  /api/rates?component=dx&nx=&ny=     per-location rate summaries
  GET  /api/contours?level=&nx=&ny=        level-set polylines
  POST /api/womble  {"curve": [[x,y],...], "seed": 11}
                                           per-segment and total measures

Grid payloads are x-major: values[i][j] belongs to (xs[i], ys[j]). The
archive is loaded once and shared read-only across request threads; surface
and rate grids are cached per size. Wombling draws are seeded per request,
so the same curve and seed always return identical results. A static UI
directory can be mounted at / alongside the API.
"""
from __future__ import annotations

import json
import logging
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import archive
from .geometry import GridSpec, extract_contours, make_grid, predict_surface
from .numerics import STREAM_RATES, STREAM_WOMBLE, stream
from .rates import components_for, sprates
from .womble import WOMBLE_COMPONENTS, curvature_supported, spwombling

log = logging.getLogger(__name__)

DEFAULT_GRID_NODES = 41
MAX_GRID_NODES = 401

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".map": "application/json",
    ".png": "image/png",
    ".ico": "image/x-icon",
}

_INDEX_FALLBACK = """<!doctype html>
<title>wombler API</title>
<h1>wombler serve</h1>
<p>No UI directory mounted. JSON endpoints:</p>
<ul>
<li>GET /api/model/summary</li>
<li>GET /api/surface?nx=&amp;ny=</li>
<li>GET /api/rates?component=dx&amp;nx=&amp;ny=</li>
<li>GET /api/contours?level=&amp;nx=&amp;ny=</li>
<li>POST /api/womble {"curve": [[x,y],...], "seed": 11}</li>
</ul>
"""


class BadRequest(ValueError):
    """Client-side error mapped to a 400 response."""


class ServerState:
    """Archive contents plus per-grid-size caches, shared across threads."""

    def __init__(self, archive_dir):
        self.manifest = archive.load_manifest(archive_dir)
        self.data = archive.load_data(archive_dir)
        self.draws = archive.load_draws(archive_dir)
        self.summaries = archive.load_summaries(archive_dir)
        self.family = self.manifest["family"]
        self.seed = int(self.manifest["seed"])
        coords = self.data.coords
        spans = coords.max(axis=0) - coords.min(axis=0)
        pads = [0.02 * s if s > 0 else 0.5 for s in spans]
        self.bounds = (
            float(coords[:, 0].min() - pads[0]),
            float(coords[:, 0].max() + pads[0]),
            float(coords[:, 1].min() - pads[1]),
            float(coords[:, 1].max() + pads[1]),
        )
        self._cache: dict = {}
        self._lock = threading.Lock()

    def grid_spec(self, nx: int, ny: int) -> GridSpec:
        return GridSpec(*self.bounds, nx, ny)

    def surface(self, nx: int, ny: int):
        key = ("surface", nx, ny)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = predict_surface(
                    self.data, self.draws, self.grid_spec(nx, ny), self.family
                )
            return self._cache[key]

    def rates(self, nx: int, ny: int):
        key = ("rates", nx, ny)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = sprates(
                    make_grid(self.grid_spec(nx, ny)),
                    self.data,
                    self.draws,
                    self.family,
                    stream(self.seed, STREAM_RATES),
                )
            return self._cache[key]

    def measures(self) -> list[str]:
        if curvature_supported(self.family):
            return list(WOMBLE_COMPONENTS)
        return [WOMBLE_COMPONENTS[0]]

    def summary_payload(self) -> dict:
        xmin, xmax, ymin, ymax = self.bounds
        return {
            "family": self.family,
            "site_count": self.data.n,
            "draw_count": self.draws.m,
            "seed": self.seed,
            "params": self.summaries.get("params", {}),
            "accept_rates": self.summaries.get("accept_rates", {}),
            "bounds": {"xmin": xmin, "xmax": xmax, "ymin": ymin, "ymax": ymax},
            "rate_components": list(components_for(self.family)),
            "measures": self.measures(),
        }

    def surface_payload(self, nx: int, ny: int) -> dict:
        spec = self.grid_spec(nx, ny)
        surf = self.surface(nx, ny)
        try:
            vmin, vmax = surf.value_range()
        except ValueError:
            vmin = vmax = None
        return {
            "nx": nx,
            "ny": ny,
            "xs": spec.xs,
            "ys": spec.ys,
            "values": surf.values,
            "missing": surf.missing,
            "vmin": vmin,
            "vmax": vmax,
        }

    def rates_payload(self, component: str, nx: int, ny: int) -> dict:
        result = self.rates(nx, ny)
        if component not in result.components:
            raise BadRequest(
                f"unknown component {component!r}; choose from "
                f"{', '.join(result.components)}"
            )
        spec = self.grid_spec(nx, ny)
        ci = result.components.index(component)

        def nested(arr):
            return arr.reshape(spec.ny, spec.nx).T

        return {
            "component": component,
            "nx": nx,
            "ny": ny,
            "xs": spec.xs,
            "ys": spec.ys,
            "q2.5": nested(result.q025[:, ci]),
            "q50": nested(result.q50[:, ci]),
            "q97.5": nested(result.q975[:, ci]),
            "sig": nested(result.sig[:, ci].astype(int)),
        }

    def contours_payload(self, level: float, nx: int, ny: int) -> dict:
        surf = self.surface(nx, ny)
        contours = extract_contours(surf, level)
        return {
            "level": level,
            "count": len(contours),
            "contours": [c for c in contours],
        }

    def womble_payload(self, points: list[tuple[float, float]], seed: int) -> dict:
        try:
            result = spwombling(
                points,
                self.data,
                self.draws,
                self.family,
                stream(seed, STREAM_WOMBLE),
            )
        except ValueError as exc:
            raise BadRequest(str(exc)) from None
        segments = {}
        totals = {}
        averages = {}
        for ci, comp in enumerate(result.components):
            segments[comp] = [
                {
                    "q2.5": result.q025[s, ci],
                    "q50": result.q50[s, ci],
                    "q97.5": result.q975[s, ci],
                    "sig": int(result.sig[s, ci]),
                }
                for s in range(len(result.segments))
            ]
            totals[comp] = {
                "q2.5": result.totals["q2.5"][ci],
                "q50": result.totals["q50"][ci],
                "q97.5": result.totals["q97.5"][ci],
                "sig": int(result.totals["sig"][ci]),
            }
            averages[comp] = {
                "q2.5": result.averages["q2.5"][ci],
                "q50": result.averages["q50"][ci],
                "q97.5": result.averages["q97.5"][ci],
            }
        return {
            "arc_length": result.length,
            "seed": seed,
            "measures": list(result.components),
            "segments": segments,
            "totals": totals,
            "averages": averages,
            "vertices": [
                [seg.start[0], seg.start[1]] for seg in result.segments
            ]
            + [list(result.segments[-1].end)],
        }


def _int_param(query: dict, name: str, default: int) -> int:
    raw = query.get(name, [None])[0]
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise BadRequest(f"{name} must be an integer") from None
    if not (2 <= value <= MAX_GRID_NODES):
        raise BadRequest(f"{name} must be between 2 and {MAX_GRID_NODES}")
    return value


def _parse_curve_body(body: bytes, default_seed: int):
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadRequest(f"invalid JSON body: {exc}") from None
    if not isinstance(payload, dict):
        raise BadRequest("body must be a JSON object")
    curve = payload.get("curve")
    if not isinstance(curve, list) or len(curve) < 2:
        raise BadRequest("curve must be a list of at least 2 [x, y] points")
    points = []
    for i, item in enumerate(curve):
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise BadRequest(f"curve[{i}] must be an [x, y] pair")
        try:
            x, y = float(item[0]), float(item[1])
        except (TypeError, ValueError):
            raise BadRequest(f"curve[{i}] must contain numbers") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise BadRequest(f"curve[{i}] must contain finite numbers")
        points.append((x, y))
    seed = payload.get("seed", default_seed)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise BadRequest("seed must be an integer")
    return points, seed


class ApiHandler(BaseHTTPRequestHandler):
    state: ServerState
    ui_dir: Path | None = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(archive.jsonable(payload)).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, body: bytes, ctype: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        parsed = urlparse(self.path)
        route = parsed.path
        query = parse_qs(parsed.query)
        try:
            if route == "/api/model/summary":
                self._send_json(200, self.state.summary_payload())
            elif route == "/api/surface":
                nx = _int_param(query, "nx", DEFAULT_GRID_NODES)
                ny = _int_param(query, "ny", DEFAULT_GRID_NODES)
                self._send_json(200, self.state.surface_payload(nx, ny))
            elif route == "/api/rates":
                component = query.get("component", ["dx"])[0]
                nx = _int_param(query, "nx", DEFAULT_GRID_NODES)
                ny = _int_param(query, "ny", DEFAULT_GRID_NODES)
                self._send_json(200, self.state.rates_payload(component, nx, ny))
            elif route == "/api/contours":
                raw = query.get("level", [None])[0]
                if raw is None:
                    raise BadRequest("level query parameter is required")
                try:
                    level = float(raw)
                except ValueError:
                    raise BadRequest("level must be a number") from None
                nx = _int_param(query, "nx", DEFAULT_GRID_NODES)
                ny = _int_param(query, "ny", DEFAULT_GRID_NODES)
                self._send_json(200, self.state.contours_payload(level, nx, ny))
            elif route.startswith("/api/"):
                self._send_json(404, {"error": f"unknown endpoint {route}"})
            else:
                self._serve_static(route)
        except BadRequest as exc:
            self._send_json(400, {"error": str(exc)})
        except Exception as exc:  # keep the server alive on surprises
            log.exception("request failed: %s %s", self.command, self.path)
            self._send_json(500, {"error": str(exc)})

    def do_POST(self):
        parsed = urlparse(self.path)
        try:
            if parsed.path != "/api/womble":
                self._send_json(404, {"error": f"unknown endpoint {parsed.path}"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length)
            points, seed = _parse_curve_body(body, self.state.seed)
            self._send_json(200, self.state.womble_payload(points, seed))
        except BadRequest as exc:
            self._send_json(400, {"error": str(exc)})
        except Exception as exc:
            log.exception("request failed: %s %s", self.command, self.path)
            self._send_json(500, {"error": str(exc)})

    def _serve_static(self, route: str) -> None:
        if self.ui_dir is None:
            if route in ("/", "/index.html"):
                self._send_bytes(
                    200, _INDEX_FALLBACK.encode(), "text/html; charset=utf-8"
                )
            else:
                self._send_json(404, {"error": f"no such path {route}"})
            return
        root = self.ui_dir.resolve()
        rel = route.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            self._send_json(404, {"error": "not found"})
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_json(404, {"error": f"no such path {route}"})
            return
        ctype = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        self._send_bytes(200, target.read_bytes(), ctype)


def make_server(archive_dir, host: str, port: int, ui_dir=None) -> ThreadingHTTPServer:
    """Build the HTTP server; raises OSError if the port is taken."""
    state = ServerState(archive_dir)
    handler = type(
        "BoundApiHandler",
        (ApiHandler,),
        {"state": state, "ui_dir": Path(ui_dir) if ui_dir else None},
    )
    httpd = ThreadingHTTPServer((host, port), handler)
    httpd.daemon_threads = True
    return httpd


def run_server(archive_dir, host: str, port: int, ui_dir=None) -> None:
    httpd = make_server(archive_dir, host, port, ui_dir=ui_dir)
    actual_port = httpd.server_address[1]
    print(f"serving {archive_dir} on http://{host}:{actual_port}")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
