"""Posterior rates of change: gradients and curvatures of the latent surface.

Given a latent-field draw Z at the data sites and covariance parameters
theta, the joint law of (Z, gradient(s0), curvature(s0)) is Gaussian with
cross blocks given by kernel derivatives. Conditioning yields a closed-form
5-dimensional normal per location (2 for families that only support first
derivatives), from which one sample is drawn per posterior draw.

Sign convention. Writing the cross covariance between site values and the
derivative components at s0, two layouts circulate: displacement taken
data-minus-target with a leading minus on the conditional mean, or
target-minus-data with none. They agree for gradient rows (odd derivative)
but differ for curvature rows (even derivative), where a global minus is
wrong. The convention here was fixed by a finite-difference oracle on the
covariance function itself: every cross block is the plain derivative of the
kernel in the target argument, evaluated at displacement s0 - s_i, with no
sign flips anywhere. Under that convention the assembled joint matrix is
positive semidefinite and the conditional mean equals the derivative of the
kriging mean, which the test suite checks by brute-force conditioning.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import pdist, squareform

from .kernels import (
    MAX_ORDER,
    KernelSpec,
    derivative_arrays,
    joint_cov_at_zero,
    kernel_value,
    resolve_family,
)
from .model import ThetaDraw
from .numerics import cholesky_jittered

log = logging.getLogger(__name__)

COMPONENTS_FULL = ("dx", "dy", "dxx", "dxy", "dyy")
COMPONENTS_GRAD = ("dx", "dy")

COINCIDENT_TOL = 1e-8


def components_for(family: str) -> tuple[str, ...]:
    family = resolve_family(family)
    return COMPONENTS_FULL if MAX_ORDER[family] >= 4 else COMPONENTS_GRAD


@dataclass
class RatesResult:
    """Per-location posterior draws and summaries of surface derivatives."""

    grid: np.ndarray
    components: tuple[str, ...]
    draws: np.ndarray
    q025: np.ndarray
    q50: np.ndarray
    q975: np.ndarray
    sig: np.ndarray
    missing: np.ndarray
    meta: dict = field(default_factory=dict)


def cross_basis(grid: np.ndarray, coords: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Cross-covariance columns between site values and derivative components.

    Returns (G, N, C): entry [g, i, :] is Cov(derivs at grid g, Y(site i))
    laid out per `components_for`, built at displacement grid - site.
    """
    dx = grid[:, 0][:, None] - coords[None, :, 0]
    dy = grid[:, 1][:, None] - coords[None, :, 1]
    order = min(MAX_ORDER[spec.family], 4)
    da = derivative_arrays(dx, dy, spec, order=max(order, 2))
    cols = [da.dk[..., 0], da.dk[..., 1]]
    if order >= 4:
        cols += [da.d2k[..., 0], da.d2k[..., 1], da.d2k[..., 2]]
    return np.stack(cols, axis=-1)


def rate_moments(
    grid: np.ndarray,
    z: np.ndarray,
    theta: ThetaDraw,
    coords: np.ndarray,
    family: str,
    _dist: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean (G, C) and covariance (G, C, C) of the rates given Z.

    Conditions each grid point on the full latent vector under
    Sigma_Z = sigma2 R(phi); the site factorization is shared across the grid.
    Covariances are symmetrized (A + A^T) / 2.
    """
    family = resolve_family(family)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    coords = np.asarray(coords, dtype=float)
    z = np.asarray(z, dtype=float)
    spec = KernelSpec(family, theta.sigma2, theta.phi)
    dist = squareform(pdist(coords)) if _dist is None else _dist
    sigma_z = kernel_value(dist, spec)
    l, _ = cholesky_jittered(sigma_z)
    basis = cross_basis(grid, coords, spec)  # (G, N, C)
    g, n, c = basis.shape
    flat = np.moveaxis(basis, 0, 1).reshape(n, g * c)
    half = solve_triangular(l, flat, lower=True).reshape(n, g, c)
    w = solve_triangular(l, z, lower=True)
    means = np.einsum("ngc,n->gc", half, w)
    prior = joint_cov_at_zero(spec)
    covs = prior[None, :, :] - np.einsum("ngc,ngd->gcd", half, half)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    return means, covs


def conditional_rates(
    s0: np.ndarray,
    z: np.ndarray,
    theta: ThetaDraw,
    coords: np.ndarray,
    family: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional law of the derivative components at one location.

    Returns (mean, cov): a C-vector and C x C matrix, C = 5 for families
    supporting curvature and 2 for gradient-only families.
    """
    means, covs = rate_moments(np.asarray(s0, dtype=float)[None, :], z, theta, coords, family)
    return means[0], covs[0]


def perturb_coincident(grid: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Nudge grid points lying on a data site by COINCIDENT_TOL per coordinate."""
    grid = np.array(grid, dtype=float, copy=True)
    d2 = ((grid[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    hit = np.sqrt(d2.min(axis=1)) < COINCIDENT_TOL
    if np.any(hit):
        log.warning(
            "%d grid point(s) coincide with data sites; perturbing by %g", int(hit.sum()), COINCIDENT_TOL
        )
        grid[hit] += COINCIDENT_TOL
    return grid


def summarize_rate_draws(draws: np.ndarray) -> dict:
    """Quantile summaries and significance flags over the draw axis.

    Draws that failed (NaN) are ignored per point; a point with no finite
    draws in some component is marked missing (summaries NaN, sig 0).
    sig is +1 where the 2.5% quantile is positive, -1 where the 97.5%
    quantile is negative, else 0.
    """
    finite = np.isfinite(draws).sum(axis=0)  # (G, C)
    enough = np.all(finite >= 1, axis=1)  # (G,)
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        q = np.nanquantile(draws, [0.025, 0.5, 0.975], axis=0, method="linear")
    q025, q50, q975 = q[0], q[1], q[2]
    for arr in (q025, q50, q975):
        arr[~enough] = np.nan
    sig = np.zeros(q50.shape, dtype=np.int8)
    with np.errstate(invalid="ignore"):
        sig[np.nan_to_num(q025, nan=-1.0) > 0] = 1
        sig[np.nan_to_num(q975, nan=1.0) < 0] = -1
    sig[~enough] = 0
    return {"q025": q025, "q50": q50, "q975": q975, "sig": sig, "missing": ~enough}


def sprates(
    grid: np.ndarray,
    data,
    draws,
    family: str,
    rng: np.random.Generator,
) -> RatesResult:
    """One derivative-vector sample per (posterior draw, grid point), summarized.

    Per theta/Z draw the conditional moments come from `rate_moments` (one
    site factorization shared across the grid) and one multivariate-normal
    sample is taken per point through an eigenvalue square root, which
    tolerates the semidefinite boundary. A draw whose site covariance cannot
    be factored is skipped with a warning (its samples are NaN and excluded
    from summaries); nonfinite per-point results are likewise NaN.
    """
    family = resolve_family(family)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid is empty")
    if draws.m == 0:
        raise ValueError("no posterior draws")
    comps = components_for(family)
    c = len(comps)
    coords = np.asarray(data.coords, dtype=float)
    work_grid = perturb_coincident(grid, coords)
    dist = squareform(pdist(coords))
    g = work_grid.shape[0]
    m = draws.m
    out = np.empty((m, g, c))
    failed_draws = 0
    for i in range(m):
        xi = rng.standard_normal((g, c))
        s2, phi, t2 = draws.theta[i]
        theta = ThetaDraw(float(s2), float(phi), float(t2))
        try:
            means, covs = rate_moments(work_grid, draws.z[i], theta, coords, family, _dist=dist)
        except Exception as err:  # factorization failure for this draw only
            log.warning("rates draw %d failed: %s", i, err)
            out[i] = np.nan
            failed_draws += 1
            continue
        w, v = np.linalg.eigh(covs)
        root = v * np.sqrt(np.clip(w, 0.0, None))[:, None, :]
        sample = means + np.einsum("gcd,gd->gc", root, xi)
        sample[~np.all(np.isfinite(sample), axis=1)] = np.nan
        out[i] = sample
    if failed_draws:
        log.warning("%d of %d rates draws failed and were excluded", failed_draws, m)
    summary = summarize_rate_draws(out)
    return RatesResult(
        grid=grid,
        components=comps,
        draws=out,
        q025=summary["q025"],
        q50=summary["q50"],
        q975=summary["q975"],
        sig=summary["sig"],
        missing=summary["missing"],
        meta={"family": family, "draws": m, "failed_draws": failed_draws},
    )
