"""Shared numerical utilities: factorizations, sampling, quadrature, special functions.

Everything downstream (model fitting, gradient inference, line-integral
measures) funnels its linear algebra and quadrature through this module so
that jitter policies, node caching and seeding conventions live in one place.
"""
from __future__ import annotations

import functools
import math

import numpy as np
from scipy.linalg import solve_triangular


class FactorizationError(Exception):
    """Raised when a matrix cannot be Cholesky-factored within the jitter budget."""

    def __init__(self, message: str, jitter: float = 0.0):
        super().__init__(message)
        self.jitter = jitter


#: escalation ladder: start at 1e-10 * mean(diag), multiply by 10, at most 6 retries
_JITTER_REL = 1e-10
_JITTER_TRIES = 6


def cholesky_jittered(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor with an escalating diagonal jitter fallback.

    Parameters
    ----------
    a : (n, n) ndarray
        Symmetric positive (semi-)definite matrix.

    Returns
    -------
    L : (n, n) ndarray
        Lower-triangular factor with L @ L.T ~= a + jitter * I.
    jitter : float
        Diagonal inflation that was needed (0.0 on the clean path).

    Raises
    ------
    FactorizationError
        If the factorization still fails after the final escalation.
    """
    a = np.asarray(a, dtype=float)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale and float(np.max(np.abs(a - a.T))) > 1e-10 * scale:
        raise ValueError("cholesky_jittered requires a symmetric matrix")
    try:
        return np.linalg.cholesky(a), 0.0
    except np.linalg.LinAlgError:
        pass
    base = _JITTER_REL * float(np.mean(np.diag(a)))
    if base <= 0:
        base = _JITTER_REL
    eye = np.eye(a.shape[0])
    jitter = base
    for _ in range(_JITTER_TRIES):
        try:
            return np.linalg.cholesky(a + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"matrix of order {a.shape[0]} not positive definite "
        f"(last jitter attempted {jitter / 10.0:.3e})",
        jitter=jitter / 10.0,
    )


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b given a lower Cholesky factor."""
    y = solve_triangular(L, b, lower=True)
    return solve_triangular(L, y, lower=True, trans="T")


def chol_logdet(L: np.ndarray) -> float:
    """log det(L L^T) from the factor's diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def mvn_sample(mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(mean, cov).

    The covariance may be merely positive semi-definite: a zero matrix maps to
    the mean exactly, and near-singular matrices fall back to an eigenvalue
    factorization with negative eigenvalues clamped at zero.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return mean.copy()
    try:
        L, _ = cholesky_jittered(cov)
    except FactorizationError:
        L = psd_factor(cov)
    return mean + L @ rng.standard_normal(mean.shape[0])


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """Factor G with G @ G.T = clamp(cov) for symmetric near-PSD matrices."""
    sym = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(sym)
    return v * np.sqrt(np.clip(w, 0.0, None))


@functools.lru_cache(maxsize=64)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b].

    Exact for polynomials of degree <= 2n - 1; nodes are cached per n.
    """
    if n < 1:
        raise ValueError("need at least one quadrature node")
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def gamma_lower(a: int, x) -> np.ndarray | float:
    """Regularized lower incomplete gamma for integer shapes 1 and 2.

    gamma_lower(1, x) = 1 - exp(-x); gamma_lower(2, x) = 1 - (1 + x) exp(-x).
    The Gamma(a) normalization divides out, so values lie in [0, 1).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("gamma_lower requires x >= 0")
    if a == 1:
        out = -np.expm1(-x)
    elif a == 2:
        out = -np.expm1(-x) - x * np.exp(-x)
    else:
        raise ValueError(f"unsupported shape {a!r}: closed forms cover shapes 1 and 2")
    return out if out.ndim else float(out)


_SQRT1_2 = 1.0 / math.sqrt(2.0)


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF via erf; double-precision accurate on the real line."""
    return 0.5 * (1.0 + math.erf(x * _SQRT1_2))


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Independent, reproducible generator keyed by (seed, stream).

    Counter-based Philox keying: the same (seed, stream_id) always yields the
    same draws, and distinct stream ids never share state. Each sampling stage
    owns its stream exclusively, so stages can run in any order (or in
    parallel) without perturbing each other's randomness.
    """
    return np.random.Generator(np.random.Philox(key=np.array([seed, stream_id], dtype=np.uint64)))


# stream ids, one per sampling stage
STREAM_FIT = 0
STREAM_ZBETA = 1
STREAM_RATES = 2
STREAM_WOMBLE = 3
STREAM_SIMULATE = 4
