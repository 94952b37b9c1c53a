"""Gaussian algebra in natural and moment form: partitions, cavities, reconstruction.

All m-dimensional Gaussians use the convention p(x) ∝ exp(h'x - x'Lambda x / 2).
Site factors are rank one along a projection direction upsilon, so most
per-site work reduces to scalar natural-parameter arithmetic along that
direction.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from .types import (
    FloatArray,
    GaussianMoments,
    GaussianNatural,
    GramResult,
    Method,
    NumericalError,
    SiteParams,
)

logger = logging.getLogger("sparse-ep.gaussian")

LOG_2PI = float(np.log(2.0 * np.pi))

# Projected variances below this are treated as a degenerate direction.
MIN_VARIANCE = 1e-12


def natural_chol(nat: GaussianNatural) -> FloatArray:
    """Lower Cholesky factor of ``nat.Lambda``, cached on the object.

    Raises:
        NumericalError: if Lambda is not positive definite.
    """
    if nat._chol is None:
        sym = 0.5 * (nat.Lambda + nat.Lambda.T)
        try:
            nat._chol = cholesky(sym, lower=True, check_finite=True)
        except (LinAlgError, ValueError) as e:
            raise NumericalError(
                f"Precision matrix is not positive definite: {e}",
                hint="The posterior approximation broke down; try stronger damping.",
            ) from e
    return nat._chol


def is_positive_definite(nat: GaussianNatural) -> bool:
    try:
        natural_chol(nat)
    except NumericalError:
        return False
    return True


def log_partition(nat: GaussianNatural) -> float:
    """g(h, Lambda) = h'Lambda^-1 h / 2 - log det Lambda / 2 + m log(2 pi) / 2."""
    if nat.m == 0:
        return 0.0
    L = natural_chol(nat)
    w = cho_solve((L, True), nat.h)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return 0.5 * float(nat.h @ w) - 0.5 * logdet + 0.5 * nat.m * LOG_2PI


def log_partition_1d(h: FloatArray, lam: FloatArray) -> FloatArray:
    """Scalar (vectorized) log partition h^2 / (2 lam) - log(lam) / 2 + log(2 pi) / 2."""
    return h * h / (2.0 * lam) - 0.5 * np.log(lam) + 0.5 * LOG_2PI


def moments(nat: GaussianNatural) -> GaussianMoments:
    """Moment form of ``nat``; Sigma = Lambda^-1, mu = Lambda^-1 h."""
    L = natural_chol(nat)
    Sigma = cho_solve((L, True), np.eye(nat.m))
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = cho_solve((L, True), nat.h)
    return GaussianMoments(mu=mu, Sigma=Sigma)


def natural(mom: GaussianMoments) -> GaussianNatural:
    """Natural form of ``mom``; inverse of :func:`moments`."""
    try:
        L = cholesky(0.5 * (mom.Sigma + mom.Sigma.T), lower=True)
    except LinAlgError as e:
        raise NumericalError(f"Covariance is not positive definite: {e}") from e
    Lambda = cho_solve((L, True), np.eye(mom.m))
    Lambda = 0.5 * (Lambda + Lambda.T)
    h = cho_solve((L, True), mom.mu)
    return GaussianNatural(h=h, Lambda=Lambda)


def prior_natural(gramres: GramResult) -> GaussianNatural:
    """Prior over the inducing values: h = 0, Lambda = K^-1."""
    K_inv = cho_solve((gramres.chol, True), np.eye(gramres.m))
    return GaussianNatural(h=np.zeros(gramres.m), Lambda=0.5 * (K_inv + K_inv.T))


def project(q: GaussianMoments, upsilon: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Marginal mean and variance of upsilon'f for each row of ``upsilon``, unchecked."""
    U = np.atleast_2d(upsilon)
    m_a = U @ q.mu
    v_a = np.einsum("ij,ij->i", U @ q.Sigma, U)
    return m_a, v_a


def marginal_of_projection(
    q: GaussianMoments, upsilon: FloatArray
) -> tuple[FloatArray, FloatArray] | tuple[float, float]:
    """Marginal (mean, variance) of a = upsilon'f under ``q``.

    Accepts one direction (m,) or a stack (n, m).

    Raises:
        NumericalError: if a direction is zero or its variance is not positive.
    """
    upsilon = np.asarray(upsilon, dtype=np.float64)
    single = upsilon.ndim == 1
    U = np.atleast_2d(upsilon)
    if np.any(~np.any(U != 0.0, axis=1)):
        raise NumericalError("Projection direction is zero; the marginal is degenerate")
    m_a, v_a = project(q, U)
    if np.any(v_a <= 0.0):
        raise NumericalError("Projected variance is not positive")
    if single:
        return float(m_a[0]), float(v_a[0])
    return m_a, v_a


def site_naturals(sites: SiteParams, upsilon: FloatArray) -> GaussianNatural:
    """Sum of the m-dimensional naturals (mu_t * u, nu * u u') over a set of sites."""
    U = np.atleast_2d(upsilon)
    nu = np.atleast_1d(sites.nu)
    mu_t = np.atleast_1d(sites.mu_t)
    Lambda = (U * nu[:, None]).T @ U
    return GaussianNatural(h=U.T @ mu_t, Lambda=0.5 * (Lambda + Lambda.T))


@dataclass
class Cavity:
    """Cavity marginals along each site's projection, with a validity mask.

    Invalid entries hold placeholder values and must be skipped.
    """

    m_c: FloatArray
    v_c: FloatArray
    valid: FloatArray

    @classmethod
    def empty(cls) -> "Cavity":
        return cls(m_c=np.zeros(0), v_c=np.zeros(0), valid=np.zeros(0, dtype=bool))


def ep_cavity_1d(
    m_a: FloatArray, v_a: FloatArray, nu: FloatArray, mu_t: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Remove rank-one sites from projected marginals by scalar natural arithmetic."""
    ok = v_a > MIN_VARIANCE
    v_safe = np.where(ok, v_a, 1.0)
    lam_c = 1.0 / v_safe - nu
    h_c = m_a / v_safe - mu_t
    ok &= lam_c > 0.0
    v_c = np.where(ok, 1.0 / np.where(ok, lam_c, 1.0), 1.0)
    m_c = np.where(ok, h_c * v_c, 0.0)
    return m_c, v_c, ok


def sep_cavity_natural(q_nat: GaussianNatural, theta: GaussianNatural, n: int) -> GaussianNatural:
    """Cavity q / theta^(1/n) in natural form, shared by every site."""
    if n <= 0:
        return q_nat.copy()
    return q_nat - theta.scaled(1.0 / n)


def cavity(
    method: Method,
    q: GaussianMoments,
    upsilon: FloatArray,
    site: SiteParams | None = None,
    theta: GaussianNatural | None = None,
    n: int = 0,
    q_nat: GaussianNatural | None = None,
) -> Cavity:
    """Cavity marginals (m_c, v_c) along each projection in ``upsilon``.

    EP removes each site's scalar naturals from the projected marginal of q.
    SEP removes theta / n from q once in m dimensions. ADF uses q itself.
    Sites whose cavity is not a proper Gaussian are flagged invalid.
    """
    method = Method(method)
    U = np.atleast_2d(np.asarray(upsilon, dtype=np.float64))
    if U.shape[0] == 0:
        return Cavity.empty()

    if method == Method.EP:
        if site is None:
            raise ValueError("EP cavity needs the current site parameters")
        m_a, v_a = project(q, U)
        m_c, v_c, ok = ep_cavity_1d(m_a, v_a, np.atleast_1d(site.nu), np.atleast_1d(site.mu_t))
        return Cavity(m_c=m_c, v_c=v_c, valid=ok)

    if method == Method.SEP:
        if theta is None:
            raise ValueError("SEP cavity needs the global factor")
        base = q_nat if q_nat is not None else natural(q)
        cav_nat = sep_cavity_natural(base, theta, n)
        try:
            cav = moments(cav_nat)
        except NumericalError:
            logger.debug("SEP cavity precision is not positive definite; skipping all sites")
            size = U.shape[0]
            return Cavity(m_c=np.zeros(size), v_c=np.ones(size), valid=np.zeros(size, dtype=bool))
        m_c, v_c = project(cav, U)
    else:
        m_c, v_c = project(q, U)

    ok = v_c > MIN_VARIANCE
    return Cavity(m_c=np.where(ok, m_c, 0.0), v_c=np.where(ok, v_c, 1.0), valid=ok)


def reconstruct_natural(
    method: Method,
    prior: GaussianNatural,
    sites: SiteParams | None = None,
    upsilon: FloatArray | None = None,
    theta: GaussianNatural | None = None,
) -> GaussianNatural:
    """Natural parameters of q from the prior and the likelihood factors.

    EP adds every site along its projection. SEP adds the global factor.
    ADF adds ``theta`` to ``prior``, where the caller passes the current q as
    ``prior`` and the new sites' summed naturals as ``theta``.
    """
    method = Method(method)
    if method == Method.EP:
        if sites is None or upsilon is None:
            raise ValueError("EP reconstruction needs sites and their projections")
        if np.atleast_2d(upsilon).shape[0] == 0:
            return prior.copy()
        return prior + site_naturals(sites, upsilon)
    if theta is None:
        return prior.copy()
    return prior + theta


def reconstruct(
    method: Method,
    prior: GaussianNatural,
    sites: SiteParams | None = None,
    upsilon: FloatArray | None = None,
    theta: GaussianNatural | None = None,
) -> GaussianMoments:
    """Moments of q; see :func:`reconstruct_natural`."""
    return moments(reconstruct_natural(method, prior, sites, upsilon, theta))
