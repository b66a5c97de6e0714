"""Hierarchical Gaussian-process model: collapsed Metropolis-Hastings and composition sampling.

The response decomposes as Y = X beta + Z + eps with Z a mean-zero GP
(variance sigma2, inverse range phi) and iid N(0, tau2) noise. Covariance
parameters theta = (sigma2, phi, tau2) are sampled from the collapsed
posterior

    P(theta | Y) propto U(phi | 0, phi_max)
                      x IG(sigma2 | a_sigma, b_sigma)
                      x IG(tau2 | a_tau, b_tau)
                      x N(Y_c | 0, sigma2 R(phi) + tau2 I)

where Y_c is the ordinary-least-squares residual of Y on X (intercept-only by
default). The trend is not dropped: beta and the latent field Z are recovered
one-for-one per theta draw in `sample_z_beta`, so downstream inference sees
the full model.

Sampling is adaptive random-walk Metropolis with one block per parameter on
transformed scales (log sigma2, logit(phi / phi_max), log tau2), Robbins-Monro
step adaptation toward 0.44 acceptance, frozen once burn-in ends.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import pdist, squareform

from .kernels import FAMILIES, KernelSpec, kernel_value
from .numerics import FactorizationError, chol_logdet, cholesky_jittered, mvn_sample

log = logging.getLogger(__name__)

PARAM_NAMES = ("sigma2", "phi", "tau2")

LOG_2PI = math.log(2.0 * math.pi)


class McmcDivergenceError(RuntimeError):
    """The sampler rejected every proposal for too many consecutive iterations."""


@dataclass
class SpatialDataset:
    """Observed spatial data: coordinates, responses, and a trend design matrix."""

    coords: np.ndarray
    y: np.ndarray
    design: np.ndarray | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError("coords must be an N x 2 array")
        n = self.coords.shape[0]
        if n < 3:
            raise ValueError("need at least 3 locations")
        if self.y.shape != (n,):
            raise ValueError("y must align with coords")
        if self.design is None:
            self.design = np.ones((n, 1))
        else:
            self.design = np.asarray(self.design, dtype=float)
            if self.design.ndim != 2 or self.design.shape[0] != n:
                raise ValueError("design must be N x p")
        if not (
            np.all(np.isfinite(self.coords))
            and np.all(np.isfinite(self.y))
            and np.all(np.isfinite(self.design))
        ):
            raise ValueError("dataset values must be finite")
        if n > 1 and pdist(self.coords).min() < 1e-9:
            raise ValueError("duplicate coordinates (closer than 1e-9)")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def distance_matrix(self) -> np.ndarray:
        return squareform(pdist(self.coords))

    def working_response(self) -> np.ndarray:
        """OLS residual of y on the design; the collapsed likelihood's response."""
        coef, *_ = np.linalg.lstsq(self.design, self.y, rcond=None)
        return self.y - self.design @ coef


@dataclass(frozen=True)
class ThetaDraw:
    sigma2: float
    phi: float
    tau2: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.phi > 0 and self.tau2 > 0):
            raise ValueError("variance parameters must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma2, self.phi, self.tau2])


@dataclass
class McmcConfig:
    """Run lengths, proposal adaptation, and prior hyper-parameters."""

    iterations: int = 10000
    burn_in: int = 5000
    thin: int = 1
    seed: int = 0
    target_accept: float = 0.44
    adapt_decay: float = 0.6
    initial_step: float = 0.5
    phi_max: float = 10.0
    sigma2_shape: float = 1.0
    sigma2_scale: float = 1.0
    tau2_shape: float = 2.0
    tau2_scale: float = 1.0
    divergence_patience: int = 1000

    def __post_init__(self):
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not (0 < self.target_accept < 1):
            raise ValueError("target_accept must lie in (0, 1)")
        if self.phi_max <= 0:
            raise ValueError("phi_max must be positive")

    @property
    def retained(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)


@dataclass
class FitResult:
    """Theta chain (original scale), per-parameter summaries, acceptance rates."""

    chain: np.ndarray
    summaries: dict
    accept_rates: dict
    config: McmcConfig
    family: str

    def theta(self, m: int) -> ThetaDraw:
        s2, phi, t2 = self.chain[m]
        return ThetaDraw(float(s2), float(phi), float(t2))


@dataclass
class PosteriorDraws:
    """Index-aligned posterior draws of theta, latent field z, and trend beta."""

    theta: np.ndarray
    z: np.ndarray
    beta: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if not (self.theta.shape[0] == self.z.shape[0] == self.beta.shape[0]):
            raise ValueError("theta, z, beta draws must be index-aligned")

    @property
    def m(self) -> int:
        return self.theta.shape[0]


def _log_invgamma(x: float, shape: float, scale: float) -> float:
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - scale / x


def log_posterior_terms(
    theta: ThetaDraw,
    data: SpatialDataset,
    family: str,
    config: McmcConfig | None = None,
    _dist: np.ndarray | None = None,
    _y_c: np.ndarray | None = None,
) -> dict:
    """The four log factors of the collapsed posterior, separately.

    Keys: phi_prior, sigma2_prior, tau2_prior, likelihood. Any value may be
    -inf outside the prior support; a covariance that cannot be factored also
    yields -inf (warned, not raised), so the sampler simply rejects.
    """
    cfg = config or McmcConfig()
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    terms = {
        "phi_prior": -math.log(cfg.phi_max) if 0.0 < theta.phi <= cfg.phi_max else -math.inf,
        "sigma2_prior": _log_invgamma(theta.sigma2, cfg.sigma2_shape, cfg.sigma2_scale),
        "tau2_prior": _log_invgamma(theta.tau2, cfg.tau2_shape, cfg.tau2_scale),
    }
    if not np.isfinite(terms["phi_prior"]):
        terms["likelihood"] = -math.inf
        return terms
    dist = data.distance_matrix() if _dist is None else _dist
    y_c = data.working_response() if _y_c is None else _y_c
    corr = kernel_value(dist, KernelSpec(family, 1.0, theta.phi))
    cov = theta.sigma2 * corr
    cov[np.diag_indices_from(cov)] += theta.tau2
    try:
        L, _ = cholesky_jittered(cov)
    except FactorizationError as err:
        log.warning("collapsed likelihood covariance not factorizable: %s", err)
        terms["likelihood"] = -math.inf
        return terms
    half = solve_triangular(L, y_c, lower=True)
    n = data.n
    terms["likelihood"] = -0.5 * (n * LOG_2PI + chol_logdet(L) + float(half @ half))
    return terms


def log_collapsed_posterior(
    theta: ThetaDraw,
    data: SpatialDataset,
    family: str,
    config: McmcConfig | None = None,
) -> float:
    """Log of the collapsed posterior density (unnormalized)."""
    return float(sum(log_posterior_terms(theta, data, family, config).values()))


def _sigmoid(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def fit_theta(
    data: SpatialDataset,
    family: str,
    config: McmcConfig,
    rng: np.random.Generator,
) -> FitResult:
    """Adaptive random-walk Metropolis over theta on transformed scales.

    One block per parameter per iteration, in the fixed order sigma2, phi,
    tau2. Proposal steps adapt by Robbins-Monro toward ``config.target_accept``
    during burn-in and are frozen afterwards, so the retained chain targets
    the exact posterior.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    dist = data.distance_matrix()
    y_c = data.working_response()
    n = data.n

    def loglik(sigma2: float, tau2: float, corr: np.ndarray) -> float:
        cov = sigma2 * corr
        cov[np.diag_indices_from(cov)] += tau2
        try:
            L, _ = cholesky_jittered(cov)
        except FactorizationError:
            return -math.inf
        half = solve_triangular(L, y_c, lower=True)
        return -0.5 * (n * LOG_2PI + chol_logdet(L) + float(half @ half))

    def corr_for(phi: float) -> np.ndarray:
        return kernel_value(dist, KernelSpec(family, 1.0, phi))

    def log_prior_and_jacobian(u: np.ndarray) -> tuple[float, tuple[float, float, float]]:
        # u = (log sigma2, logit(phi/phi_max), log tau2); returns the log prior
        # plus proposal-space Jacobian, and the natural-scale parameters
        if abs(u[0]) > 600.0 or abs(u[2]) > 600.0:
            return -math.inf, (math.nan, math.nan, math.nan)
        sigma2 = math.exp(u[0])
        frac = _sigmoid(u[1])
        phi = config.phi_max * frac
        tau2 = math.exp(u[2])
        if not (phi > 0.0 and frac < 1.0):
            return -math.inf, (sigma2, phi, tau2)
        lp = (
            _log_invgamma(sigma2, config.sigma2_shape, config.sigma2_scale)
            + _log_invgamma(tau2, config.tau2_shape, config.tau2_scale)
            - math.log(config.phi_max)
        )
        # log-Jacobians: d sigma2/du = sigma2; d phi/dv = phi_max f(1-f)
        lp += u[0] + u[2] + math.log(config.phi_max) + math.log(frac) + math.log1p(-frac)
        return lp, (sigma2, phi, tau2)

    var0 = max(float(np.var(y_c)), 1e-6)
    u = np.array([
        math.log(0.5 * var0),
        math.log(1.0 / (config.phi_max - 1.0)) if config.phi_max > 1.0 else 0.0,
        math.log(0.5 * var0),
    ])
    prior_j, (sigma2, phi, tau2) = log_prior_and_jacobian(u)
    corr = corr_for(phi)
    cur_lik = loglik(sigma2, tau2, corr)
    cur_target = prior_j + cur_lik

    steps = np.full(3, config.initial_step)
    accept_post = np.zeros(3)
    total_post = 0
    chain = np.empty((config.retained, 3))
    kept = 0
    consecutive_rejects = 0

    for it in range(1, config.iterations + 1):
        adapting = it <= config.burn_in
        gamma = 1.0 / it**config.adapt_decay
        any_accept = False
        for j in range(3):
            prop = u.copy()
            prop[j] += steps[j] * rng.standard_normal()
            prop_prior, (p_s2, p_phi, p_t2) = log_prior_and_jacobian(prop)
            if not np.isfinite(prop_prior):
                alpha = 0.0
                prop_target = -math.inf
                prop_corr = corr
            else:
                prop_corr = corr_for(p_phi) if j == 1 else corr
                prop_lik = loglik(p_s2, p_t2, prop_corr)
                prop_target = prop_prior + prop_lik
                alpha = min(1.0, math.exp(min(0.0, prop_target - cur_target)))
            if rng.uniform() < alpha:
                u = prop
                cur_target = prop_target
                sigma2, phi, tau2 = p_s2, p_phi, p_t2
                if j == 1:
                    corr = prop_corr
                any_accept = True
                if not adapting:
                    accept_post[j] += 1
            if adapting:
                steps[j] *= math.exp(gamma * (alpha - config.target_accept))
        if not adapting:
            total_post += 1
        consecutive_rejects = 0 if any_accept else consecutive_rejects + 1
        if consecutive_rejects >= config.divergence_patience:
            raise McmcDivergenceError(
                f"no proposal accepted for {config.divergence_patience} consecutive iterations"
            )
        if it > config.burn_in and (it - config.burn_in - 1) % config.thin == 0:
            chain[kept] = (sigma2, phi, tau2)
            kept += 1

    chain = chain[:kept]
    rates = {
        name: (accept_post[j] / total_post if total_post else math.nan)
        for j, name in enumerate(PARAM_NAMES)
    }
    if kept >= 2:
        summaries = summarize_chain(chain)
    else:
        summaries = {
            name: {"q2.5": chain[0, j], "q50": chain[0, j], "q97.5": chain[0, j]}
            for j, name in enumerate(PARAM_NAMES)
        }
    return FitResult(chain=chain, summaries=summaries, accept_rates=rates, config=config, family=family)


def summarize_chain(chain: np.ndarray) -> dict:
    """Per-parameter 2.5/50/97.5% quantiles (linear interpolation).

    Accepts an (M, 3) theta chain or a single (M,) series; M must be >= 2.
    """
    chain = np.asarray(chain, dtype=float)
    if chain.shape[0] < 2:
        raise ValueError("chain must hold at least 2 draws")
    qs = np.quantile(chain, [0.025, 0.5, 0.975], axis=0, method="linear")
    if chain.ndim == 1:
        return {"q2.5": float(qs[0]), "q50": float(qs[1]), "q97.5": float(qs[2])}
    return {
        name: {"q2.5": float(qs[0, j]), "q50": float(qs[1, j]), "q97.5": float(qs[2, j])}
        for j, name in enumerate(PARAM_NAMES)
    }


def z_beta_moments(
    data: SpatialDataset,
    theta: ThetaDraw,
    family: str,
    _dist: np.ndarray | None = None,
) -> dict:
    """Gaussian conditional moments used by `sample_z_beta` for one theta.

    Returns beta_mean, beta_cov (flat-prior conditional of beta | Y, theta),
    plus z_gain and z_cov so that Z | Y, beta, theta is
    N(z_gain @ (Y - X beta), z_cov). Exposed so the conditionals can be
    checked against direct joint-covariance conditioning.
    """
    dist = data.distance_matrix() if _dist is None else _dist
    x = data.design
    y = data.y
    cov_z = theta.sigma2 * kernel_value(dist, KernelSpec(family, 1.0, theta.phi))
    cov_y = cov_z.copy()
    cov_y[np.diag_indices_from(cov_y)] += theta.tau2
    ly, _ = cholesky_jittered(cov_y)
    xw = solve_triangular(ly, x, lower=True)
    yw = solve_triangular(ly, y, lower=True)
    cov_b = np.linalg.inv(xw.T @ xw)
    mean_b = cov_b @ (xw.T @ yw)
    # kriging form avoids inverting the (possibly ill-conditioned) prior
    half = solve_triangular(ly, cov_z, lower=True)
    gain = solve_triangular(ly, half, lower=True, trans="T").T  # cov_z @ cov_y^{-1}
    z_cov = cov_z - half.T @ half
    return {"beta_mean": mean_b, "beta_cov": cov_b, "z_gain": gain, "z_cov": z_cov}


def sample_z_beta(
    data: SpatialDataset,
    theta_chain: np.ndarray,
    family: str,
    rng: np.random.Generator,
    meta: dict | None = None,
) -> PosteriorDraws:
    """Composition draws of (beta, Z) given each retained theta.

    For every theta draw: beta | Y, theta from its flat-prior Gaussian
    conditional under Sigma_Y = sigma2 R(phi) + tau2 I, then Z | Y, beta,
    theta with prior N(0, sigma2 R(phi)) and likelihood N(Y - X beta | Z,
    tau2 I). Draws are index-aligned with the theta chain.
    """
    theta_chain = np.atleast_2d(np.asarray(theta_chain, dtype=float))
    if theta_chain.shape[0] == 0:
        raise ValueError("theta chain is empty")
    dist = data.distance_matrix()
    x = data.design
    y = data.y
    n, p = x.shape
    m = theta_chain.shape[0]
    z_draws = np.empty((m, n))
    beta_draws = np.empty((m, p))
    for i in range(m):
        s2, phi, t2 = theta_chain[i]
        mom = z_beta_moments(data, ThetaDraw(float(s2), float(phi), float(t2)), family, _dist=dist)
        beta = mvn_sample(mom["beta_mean"], mom["beta_cov"], rng)
        mean_z = mom["z_gain"] @ (y - x @ beta)
        z_draws[i] = mvn_sample(mean_z, mom["z_cov"], rng)
        beta_draws[i] = beta
    return PosteriorDraws(theta=theta_chain, z=z_draws, beta=beta_draws, meta=dict(meta or {}))
