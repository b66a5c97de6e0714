"""Evaluation grids, posterior surface prediction, and level-set extraction.

A wombling analysis usually starts from a candidate boundary traced along a
level set of the fitted surface. This module covers that workflow: build a
rectangular evaluation grid, predict the posterior mean of the response
surface at the grid nodes by averaging the kriging mean over retained
posterior draws, and trace level-set polylines with marching squares so the
curves can be fed straight back into the curve measures.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, kernel_value, resolve_family
from .model import PosteriorDraws, SpatialDataset
from .numerics import FactorizationError, chol_solve, cholesky_jittered

log = logging.getLogger(__name__)

#: draws entering the surface average are capped at this many by default
DEFAULT_SURFACE_DRAWS = 200


@dataclass(frozen=True)
class GridSpec:
    """Rectangular lattice bounds and per-axis node counts."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int

    def __post_init__(self):
        bounds = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(np.isfinite(b) for b in bounds):
            raise ValueError("grid bounds must be finite")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("grid bounds must satisfy max > min on both axes")
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("node counts must be integers")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("need at least 2 nodes per axis")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.xmin, self.xmax, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.ymin, self.ymax, self.ny)


def make_grid(spec: GridSpec) -> np.ndarray:
    """Row-major lattice of nx*ny points including both bounds, x fastest."""
    gx, gy = np.meshgrid(spec.xs, spec.ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass
class Surface:
    """Posterior-mean surface values on a grid.

    values[i, j] is the prediction at (xs[i], ys[j]). Nodes where no draw
    produced a finite prediction are flagged in the missing mask and hold
    NaN; contour extraction skips every cell touching such a node.
    """

    grid: GridSpec
    values: np.ndarray
    missing: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shape = (self.grid.nx, self.grid.ny)
        if self.values.shape != shape:
            raise ValueError(f"values must have shape {shape}")
        if self.missing is None:
            self.missing = ~np.isfinite(self.values)
        else:
            self.missing = np.asarray(self.missing, dtype=bool)
            if self.missing.shape != shape:
                raise ValueError(f"missing mask must have shape {shape}")

    def finite_values(self) -> np.ndarray:
        vals = np.where(self.missing, np.nan, self.values)
        return vals[np.isfinite(vals)]

    def value_range(self) -> tuple[float, float]:
        vals = self.finite_values()
        if vals.size == 0:
            raise ValueError("surface has no finite values")
        return float(vals.min()), float(vals.max())

    def flat_values(self) -> np.ndarray:
        """Values ordered like the make_grid rows (x varying fastest)."""
        return self.values.T.ravel()


def thin_indices(m: int, cap: int | None) -> np.ndarray:
    """Deterministic evenly spaced draw indices, at most cap of them."""
    if m < 1:
        raise ValueError("need at least one draw")
    if cap is None or m <= cap:
        return np.arange(m)
    if cap < 1:
        raise ValueError("cap must be at least 1 when given")
    return np.round(np.linspace(0.0, m - 1.0, cap)).astype(int)


def predict_surface(
    data: SpatialDataset,
    draws: PosteriorDraws,
    spec: GridSpec,
    family: str,
    max_draws: int | None = DEFAULT_SURFACE_DRAWS,
) -> Surface:
    """Average the per-draw kriging mean of the response over the grid.

    Per draw, the surface at s0 is beta0 + k(s0)' (sigma2 R)^{-1} Z, the trend
    plus the conditional mean of the latent field (nugget excluded, matching
    the derivative conditioning). At most max_draws evenly spaced draws enter
    the average; pass None to use every draw. Draws whose covariance cannot
    be factored are skipped with a warning; nodes left with no finite
    contribution are marked missing.
    """
    family = resolve_family(family)
    if draws.m < 1:
        raise ValueError("need at least one posterior draw")
    trend = data.design
    if trend.shape[1] != 1 or not np.all(trend == 1.0):
        raise ValueError(
            "surface prediction is implemented for the intercept-only trend"
        )
    pts = make_grid(spec)
    d0 = np.hypot(
        pts[:, None, 0] - data.coords[None, :, 0],
        pts[:, None, 1] - data.coords[None, :, 1],
    )
    dist = data.distance_matrix()
    acc = np.zeros(len(pts))
    cnt = np.zeros(len(pts), dtype=int)
    for idx in thin_indices(draws.m, max_draws):
        sigma2, phi = draws.theta[idx, 0], draws.theta[idx, 1]
        try:
            kspec = KernelSpec(family, float(sigma2), float(phi))
            low, _ = cholesky_jittered(kernel_value(dist, kspec))
        except (ValueError, FactorizationError) as exc:
            log.warning("skipping draw %d in surface prediction: %s", idx, exc)
            continue
        weights = chol_solve(low, draws.z[idx])
        pred = draws.beta[idx, 0] + kernel_value(d0, kspec) @ weights
        ok = np.isfinite(pred)
        acc[ok] += pred[ok]
        cnt[ok] += 1
    flat = np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)
    values = flat.reshape(spec.ny, spec.nx).T
    missing = (cnt == 0).reshape(spec.ny, spec.nx).T
    return Surface(grid=spec, values=values, missing=missing)


# marching-squares segment table, keyed by the 4-bit corner classification
# (bit 1 = bottom-left, 2 = bottom-right, 4 = top-right, 8 = top-left corner
# at or above the level); entries name the pair of crossed cell edges.
# Complementary cases produce the same undirected segment.
_SEGMENT_TABLE = {
    1: (("L", "B"),),
    2: (("B", "R"),),
    3: (("L", "R"),),
    4: (("R", "T"),),
    6: (("B", "T"),),
    7: (("L", "T"),),
    8: (("T", "L"),),
    9: (("B", "T"),),
    11: (("R", "T"),),
    12: (("L", "R"),),
    13: (("B", "R"),),
    14: (("L", "B"),),
}


def _edge_key(i: int, j: int, name: str) -> tuple[str, int, int]:
    if name == "B":
        return ("h", i, j)
    if name == "T":
        return ("h", i, j + 1)
    if name == "L":
        return ("v", i, j)
    return ("v", i + 1, j)


def _edge_point(key, xs, ys, vals, level) -> tuple[float, float]:
    kind, i, j = key
    if kind == "h":
        va, vb = vals[i, j], vals[i + 1, j]
        t = (level - va) / (vb - va)
        return (xs[i] + t * (xs[i + 1] - xs[i]), ys[j])
    va, vb = vals[i, j], vals[i, j + 1]
    t = (level - va) / (vb - va)
    return (xs[i], ys[j] + t * (ys[j + 1] - ys[j]))


def _walk(start, adj, visited) -> list:
    chain = [start]
    visited.add(start)
    prev, cur = None, start
    while True:
        candidates = [k for k in adj[cur] if k != prev and k not in visited]
        if not candidates:
            return chain
        nxt = min(candidates)
        chain.append(nxt)
        visited.add(nxt)
        prev, cur = cur, nxt


def extract_contours(surface: Surface, level: float) -> list[np.ndarray]:
    """Trace level-set polylines of the surface with marching squares.

    Returns a list of (p, 2) point arrays. Open curves end on the grid
    boundary or against missing nodes; closed loops repeat the first point
    at the end. A level outside the range of finite surface values yields an
    empty list. Crossings are placed by linear interpolation along cell
    edges, so re-interpolating any returned point bilinearly recovers the
    level; the two saddle configurations are disambiguated by comparing the
    corner average against the level.
    """
    if not np.isfinite(level):
        raise ValueError("level must be finite")
    spec = surface.grid
    vals = np.where(surface.missing, np.nan, surface.values)
    finite = vals[np.isfinite(vals)]
    if finite.size == 0 or level < finite.min() or level > finite.max():
        return []
    adj: dict[tuple, list] = defaultdict(list)
    for i in range(spec.nx - 1):
        for j in range(spec.ny - 1):
            v00, v10 = vals[i, j], vals[i + 1, j]
            v11, v01 = vals[i + 1, j + 1], vals[i, j + 1]
            if not (
                np.isfinite(v00)
                and np.isfinite(v10)
                and np.isfinite(v11)
                and np.isfinite(v01)
            ):
                continue
            case = 0
            if v00 >= level:
                case |= 1
            if v10 >= level:
                case |= 2
            if v11 >= level:
                case |= 4
            if v01 >= level:
                case |= 8
            if case in (0, 15):
                continue
            if case in (5, 10):
                center_in = (v00 + v10 + v11 + v01) / 4.0 >= level
                if case == 5:
                    pairs = (
                        (("B", "R"), ("L", "T"))
                        if center_in
                        else (("L", "B"), ("R", "T"))
                    )
                else:
                    pairs = (
                        (("L", "B"), ("R", "T"))
                        if center_in
                        else (("B", "R"), ("L", "T"))
                    )
            else:
                pairs = _SEGMENT_TABLE[case]
            for a, b in pairs:
                ka, kb = _edge_key(i, j, a), _edge_key(i, j, b)
                adj[ka].append(kb)
                adj[kb].append(ka)

    visited: set = set()
    chains: list[list] = []
    for start in sorted(k for k, nbrs in adj.items() if len(nbrs) == 1):
        if start in visited:
            continue
        chains.append(_walk(start, adj, visited))
    for start in sorted(adj):
        if start in visited:
            continue
        chain = _walk(start, adj, visited)
        chain.append(start)
        chains.append(chain)

    xs, ys = spec.xs, spec.ys
    cache: dict[tuple, tuple[float, float]] = {}
    out = []
    for chain in chains:
        pts = [
            cache.setdefault(k, _edge_point(k, xs, ys, vals, level))
            for k in chain
        ]
        out.append(np.array(pts))
    return out
