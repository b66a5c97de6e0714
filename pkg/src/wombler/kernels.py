"""Isotropic covariance kernels and their spatial derivative blocks.

Families
--------
``matern32``   K(d) = sigma2 (1 + sqrt(3) phi d) exp(-sqrt(3) phi d)
``matern52``   K(d) = sigma2 (1 + sqrt(5) phi d + 5 phi^2 d^2 / 3) exp(-sqrt(5) phi d)
``gaussian``   K(d) = sigma2 exp(-phi^2 d^2)

For an isotropic kernel K(delta) = k(d) with d = ||delta||, every partial
derivative up to fourth order is a polynomial in the displacement components
times radial coefficient functions

    A = k'(d) / d
    B = (k''(d) d - k'(d)) / d^3
    D = B'(d) / d
    E = D'(d) / d

via the chain rule:

    grad_i          = x_i A
    hess_ij         = delta_ij A + x_i x_j B
    third_ijl       = (delta_ij x_l + delta_il x_j + delta_jl x_i) B + x_i x_j x_l D
    fourth_ijlm     = (delta_ij delta_lm + delta_il delta_jm + delta_jl delta_im) B
                      + (sum over the six index pairings of delta x x) D
                      + x_i x_j x_l x_m E

Second- and higher-order blocks are reported in the "unique component" layout
(xx, xy, yy) used throughout the package. matern32 is mean-square
differentiable once only, so it exposes blocks through order 2; matern52 and
gaussian expose all blocks through order 4.

Singular coefficients (B for matern32; D, E for matern52) blow up as d -> 0,
but they always enter multiplied by displacement powers that vanish faster,
so the d -> 0 limits of all existing blocks are finite. Those limits are
implemented as dedicated branches triggered below ``ZERO_TOL``.

All coefficient routines broadcast over arrays of displacements; the
inference hot paths evaluate whole grids of displacements in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("matern32", "matern52", "gaussian")

#: external (config/CLI) spellings -> internal family names
FAMILY_ALIASES = {
    "matern1": "matern32",
    "matern2": "matern52",
    "gaussian": "gaussian",
}

#: highest derivative order that exists in the mean-square sense
MAX_ORDER = {"matern32": 2, "matern52": 4, "gaussian": 4}

#: displacements shorter than this use the analytic d -> 0 limit branches
ZERO_TOL = 1e-12

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)


class SmoothnessError(ValueError):
    """A derivative block was requested beyond the family's differentiability."""


def resolve_family(name: str) -> str:
    """Map an external kernel name (matern1/matern2/gaussian) to the internal one."""
    key = name.strip().lower()
    if key in FAMILY_ALIASES:
        return FAMILY_ALIASES[key]
    if key in FAMILIES:
        return key
    raise ValueError(
        f"unknown kernel family {name!r}; choose from {sorted(FAMILY_ALIASES)}"
    )


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its variance and decay parameters."""

    family: str
    sigma2: float
    phi: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError("sigma2 must be positive and finite")
        if not (np.isfinite(self.phi) and self.phi > 0):
            raise ValueError("phi must be positive and finite")

    @property
    def max_order(self) -> int:
        return MAX_ORDER[self.family]


def _require_order(spec: KernelSpec, order: int) -> None:
    if order > spec.max_order:
        raise SmoothnessError(
            f"{spec.family} supports derivative blocks through order "
            f"{spec.max_order}; order {order} requires matern52 or gaussian"
        )


def kernel_value(d, spec: KernelSpec):
    """Covariance at separation distance d (scalar or array), K(d).

    Distances must be finite and nonnegative.
    """
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    s2, phi = spec.sigma2, spec.phi
    if spec.family == "matern32":
        ad = _SQRT3 * phi * d
        out = s2 * (1.0 + ad) * np.exp(-ad)
    elif spec.family == "matern52":
        ad = _SQRT5 * phi * d
        out = s2 * (1.0 + ad + ad * ad / 3.0) * np.exp(-ad)
    else:
        out = s2 * np.exp(-(phi * phi) * d * d)
    return out if out.ndim else float(out)


def _radial_coeffs(spec: KernelSpec, d: np.ndarray, order: int):
    """Radial coefficient functions (k, A, B, D, E) up to the requested order.

    Entries beyond `order` come back as None. Singular coefficients are zeroed
    on the d < ZERO_TOL branch; the polynomial prefactors in the assembled
    blocks vanish there, so zeroing reproduces the analytic limits.
    """
    s2, phi = spec.sigma2, spec.phi
    near0 = d < ZERO_TOL
    k = A = B = D = E = None
    if spec.family == "gaussian":
        c = phi * phi
        e = s2 * np.exp(-c * d * d)
        k = e
        if order >= 1:
            A = -2.0 * c * e
        if order >= 2:
            B = 4.0 * c * c * e
        if order >= 3:
            D = -8.0 * c**3 * e
        if order >= 4:
            E = 16.0 * c**4 * e
    elif spec.family == "matern32":
        a = _SQRT3 * phi
        e = np.exp(-a * d)
        k = s2 * (1.0 + a * d) * e
        if order >= 1:
            A = -s2 * a * a * e
        if order >= 2:
            # B = s2 a^3 e^{-ad} / d diverges at 0; its block contributions do not
            with np.errstate(divide="ignore"):
                B = np.where(near0, 0.0, s2 * a**3 * e / np.where(near0, 1.0, d))
    else:
        a = _SQRT5 * phi
        e = np.exp(-a * d)
        k = s2 * (1.0 + a * d + a * a * d * d / 3.0) * e
        third = s2 * a * a / 3.0
        if order >= 1:
            A = -third * (1.0 + a * d) * e
        if order >= 2:
            B = third * a * a * e
        safe = np.where(near0, 1.0, d)
        if order >= 3:
            D = np.where(near0, 0.0, -third * a**3 * e / safe)
        if order >= 4:
            E = np.where(near0, 0.0, third * a**3 * e * (a / safe**2 + 1.0 / safe**3))
    return k, A, B, D, E


@dataclass
class DerivativeArrays:
    """Derivative blocks evaluated over a broadcast batch of displacements.

    Shapes: k -> base; dk -> base+(2,); d2k -> base+(3,) in (xx, xy, yy)
    order; d3k -> base+(3,2); d4k -> base+(3,3). Blocks beyond the requested
    order are None.
    """

    k: np.ndarray
    dk: np.ndarray | None = None
    d2k: np.ndarray | None = None
    d3k: np.ndarray | None = None
    d4k: np.ndarray | None = None


def derivative_arrays(dx, dy, spec: KernelSpec, order: int) -> DerivativeArrays:
    """Evaluate all derivative blocks up to `order` at displacement arrays (dx, dy)."""
    _require_order(spec, order)
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    dx, dy = np.broadcast_arrays(dx, dy)
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
        raise ValueError("displacements must be finite")
    d = np.hypot(dx, dy)
    k, A, B, D, E = _radial_coeffs(spec, d, order)
    out = DerivativeArrays(k=k)
    if order >= 1:
        out.dk = np.stack([dx * A, dy * A], axis=-1)
    if order >= 2:
        out.d2k = np.stack([A + dx * dx * B, dx * dy * B, A + dy * dy * B], axis=-1)
    if order >= 3:
        dxxx = 3.0 * dx * B + dx**3 * D
        dxxy = dy * B + dx * dx * dy * D
        dxyy = dx * B + dx * dy * dy * D
        dyyy = 3.0 * dy * B + dy**3 * D
        out.d3k = np.stack(
            [
                np.stack([dxxx, dxxy], axis=-1),
                np.stack([dxxy, dxyy], axis=-1),
                np.stack([dxyy, dyyy], axis=-1),
            ],
            axis=-2,
        )
    if order >= 4:
        xxxx = 3.0 * B + 6.0 * dx * dx * D + dx**4 * E
        xxxy = 3.0 * dx * dy * D + dx**3 * dy * E
        xxyy = B + (dx * dx + dy * dy) * D + dx * dx * dy * dy * E
        xyyy = 3.0 * dx * dy * D + dx * dy**3 * E
        yyyy = 3.0 * B + 6.0 * dy * dy * D + dy**4 * E
        out.d4k = np.stack(
            [
                np.stack([xxxx, xxxy, xxyy], axis=-1),
                np.stack([xxxy, xxyy, xyyy], axis=-1),
                np.stack([xxyy, xyyy, yyyy], axis=-1),
            ],
            axis=-2,
        )
    return out


@dataclass(frozen=True)
class CrossCovBlocks:
    """Kernel derivative blocks at a single displacement.

    Blocks beyond the family's differentiability raise SmoothnessError on
    access instead of silently returning garbage.
    """

    k: float
    dk: np.ndarray
    d2k: np.ndarray
    _d3k: np.ndarray | None = field(default=None, repr=False)
    _d4k: np.ndarray | None = field(default=None, repr=False)

    @property
    def d2k_full(self) -> np.ndarray:
        """The 2x2 Hessian assembled from the unique components."""
        xx, xy, yy = self.d2k
        return np.array([[xx, xy], [xy, yy]])

    @property
    def d3k(self) -> np.ndarray:
        if self._d3k is None:
            raise SmoothnessError("third derivatives require matern52 or gaussian")
        return self._d3k

    @property
    def d4k(self) -> np.ndarray:
        if self._d4k is None:
            raise SmoothnessError("fourth derivatives require matern52 or gaussian")
        return self._d4k


def cross_cov_blocks(delta, spec: KernelSpec) -> CrossCovBlocks:
    """All derivative blocks the family supports, at one displacement."""
    dx, dy = float(delta[0]), float(delta[1])
    arr = derivative_arrays(dx, dy, spec, order=spec.max_order)
    return CrossCovBlocks(
        k=float(arr.k),
        dk=arr.dk,
        d2k=arr.d2k,
        _d3k=arr.d3k,
        _d4k=arr.d4k,
    )


def joint_cov_at_zero(spec: KernelSpec) -> np.ndarray:
    """Covariance of (gradient, unique curvatures) at a single location.

    5x5 for matern52/gaussian; the 2x2 gradient block alone for matern32.
    The gradient block is c I_2 with c = -A(0) > 0; gradient and curvature
    are uncorrelated at a point because odd-order derivatives vanish at 0.
    """
    zero = np.zeros(())
    if spec.family == "matern32":
        _, A, _, _, _ = _radial_coeffs(spec, zero, order=1)
        return -float(A) * np.eye(2)
    _, A, B, _, _ = _radial_coeffs(spec, zero, order=2)
    out = np.zeros((5, 5))
    out[:2, :2] = -float(A) * np.eye(2)
    out[2:, 2:] = float(B) * np.array([[3.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 3.0]])
    return out


def pair_cross_covariance(delta, spec: KernelSpec) -> np.ndarray:
    """Cross-covariance of (Y, gradient, curvatures) between two locations.

    `delta` is the second location minus the first; rows index the process and
    its derivatives at the first location, columns the same at the second.
    6x6 for matern52/gaussian, 3x3 (process + gradient) for matern32. At
    delta = 0 this is the covariance of the joint vector at one point and is
    symmetric positive definite.
    """
    blocks = cross_cov_blocks(delta, spec)
    if spec.family == "matern32":
        out = np.zeros((3, 3))
        out[0, 0] = blocks.k
        out[0, 1:] = blocks.dk
        out[1:, 0] = -blocks.dk
        out[1:, 1:] = -blocks.d2k_full
        return out
    out = np.zeros((6, 6))
    out[0, 0] = blocks.k
    out[0, 1:3] = blocks.dk
    out[0, 3:] = blocks.d2k
    out[1:3, 0] = -blocks.dk
    out[1:3, 1:3] = -blocks.d2k_full
    out[1:3, 3:] = -blocks.d3k.T
    out[3:, 0] = blocks.d2k
    out[3:, 1:3] = blocks.d3k
    out[3:, 3:] = blocks.d4k
    return out
