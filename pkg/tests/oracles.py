"""Independent oracles used across the test suite.

Everything here is computed from first principles (finite differences,
Bessel-form kernels, brute-force Gaussian conditioning, direct quadrature)
without touching the package's analytic derivative or conditioning code, so
agreement is evidence rather than tautology.
"""
import math

import numpy as np
from scipy.special import gammaln, kv

from wombler.kernels import KernelSpec, kernel_value


# ---------------------------------------------------------------- kernels

def matern_bessel(nu: float, sigma2: float, phi: float, d: float) -> float:
    """Generic Matern covariance via the modified Bessel function K_nu."""
    if d == 0:
        return sigma2
    arg = math.sqrt(2.0 * nu) * phi * d
    const = 2.0 ** (1.0 - nu) / math.exp(gammaln(nu))
    return sigma2 * const * arg**nu * kv(nu, arg)


def fd_gradient(f, x, y, h):
    """Central-difference gradient of a scalar field f(x, y)."""
    return np.array([
        (f(x + h, y) - f(x - h, y)) / (2 * h),
        (f(x, y + h) - f(x, y - h)) / (2 * h),
    ])


def fd_unique_second(f, x, y, h):
    """Central second differences of f, unique components (xx, xy, yy)."""
    fxx = (f(x + h, y) - 2 * f(x, y) + f(x - h, y)) / (h * h)
    fyy = (f(x, y + h) - 2 * f(x, y) + f(x, y - h)) / (h * h)
    fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4 * h * h)
    return np.array([fxx, fxy, fyy])


def fd_of_vector(g, x, y, h):
    """Central-difference Jacobian columns (d/dx, d/dy) of a vector field g(x, y)."""
    gx = (g(x + h, y) - g(x - h, y)) / (2 * h)
    gy = (g(x, y + h) - g(x, y - h)) / (2 * h)
    return gx, gy


def block_rel_err(fd, analytic):
    """Max entrywise deviation relative to the block's own scale."""
    fd = np.atleast_1d(np.asarray(fd, dtype=float))
    analytic = np.atleast_1d(np.asarray(analytic, dtype=float))
    scale = max(float(np.max(np.abs(analytic))), 1e-12)
    return float(np.max(np.abs(fd - analytic))) / scale


# ------------------------------------------------- process-level covariances

def fd_cov_value_gradient(spec: KernelSpec, site, target, h=1e-5):
    """Cov(Y(site), gradient of Y at target) by differentiating K in the target argument."""
    def k_of_target(tx, ty):
        return kernel_value(math.hypot(site[0] - tx, site[1] - ty), spec)
    return fd_gradient(k_of_target, target[0], target[1], h)


def fd_cov_value_curvature(spec: KernelSpec, site, target, h=1e-4):
    """Cov(Y(site), unique curvatures of Y at target) via second differences."""
    def k_of_target(tx, ty):
        return kernel_value(math.hypot(site[0] - tx, site[1] - ty), spec)
    return fd_unique_second(k_of_target, target[0], target[1], h)


# ------------------------------------------------------- Gaussian conditioning

def conditional_moments(joint_cov, observed, n_obs):
    """Brute-force block conditioning of N(0, joint_cov) on its first n_obs coordinates."""
    joint_cov = np.asarray(joint_cov, dtype=float)
    s11 = joint_cov[:n_obs, :n_obs]
    s12 = joint_cov[:n_obs, n_obs:]
    s22 = joint_cov[n_obs:, n_obs:]
    sol = np.linalg.solve(s11, s12)
    mean = sol.T @ np.asarray(observed, dtype=float)
    cov = s22 - s12.T @ sol
    return mean, cov


# ------------------------------------------------------- wombling quadrature

def segment_cross_entries(spec: KernelSpec, start, u, t_star, site, n=400):
    """Cov(wombling measures on a segment, Y(site)) by quadrature of FD kernel derivatives.

    Independent of the package's derivative code: the integrand differentiates
    kernel_value by central differences at each quadrature node.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * t_star * (x + 1.0)
    wt = 0.5 * t_star * w
    up = np.array([u[1], -u[0]])
    a2 = np.array([up[0] ** 2, 2 * up[0] * up[1], up[1] ** 2])
    g1 = 0.0
    g2 = 0.0
    for ti, wi in zip(t, wt):
        px, py = start[0] + ti * u[0], start[1] + ti * u[1]
        def k_at(ax, ay):
            return kernel_value(math.hypot(ax - site[0], ay - site[1]), spec)
        grad = fd_gradient(k_at, px, py, 1e-5)
        curv = fd_unique_second(k_at, px, py, 1e-4)
        g1 += wi * float(up @ grad)
        g2 += wi * float(a2 @ curv)
    return np.array([g1, g2])


# ------------------------------------------------------------- simulation

def simulate_gp_dataset(rng, n, family, sigma2, phi, tau2, beta0=0.0, low=0.0, high=10.0):
    """Draw (coords, y) from the generative model y = beta0 + Z + noise."""
    from scipy.spatial.distance import pdist, squareform

    coords = rng.uniform(low, high, size=(n, 2))
    dist = squareform(pdist(coords))
    cov = sigma2 * kernel_value(dist, KernelSpec(family, 1.0, phi))
    cov[np.diag_indices_from(cov)] += 1e-10 * sigma2
    z = np.linalg.cholesky(cov) @ rng.standard_normal(n)
    y = beta0 + z + math.sqrt(tau2) * rng.standard_normal(n)
    return coords, y, z
