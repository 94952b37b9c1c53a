"""Probit tilted moments and the moment-matching site projection."""

import numpy as np
from scipy.special import log_ndtr

from .types import FloatArray, SiteParams, TiltedResult

HALF_LOG_2PI = 0.5 * float(np.log(2.0 * np.pi))

# Below this z the pdf/cdf ratio uses its asymptotic series.
TAIL_Z = -30.0


def _scalar_or_array(x: FloatArray) -> FloatArray:
    return float(x) if np.ndim(x) == 0 else x  # type: ignore[return-value]


def log_probit(z: FloatArray) -> FloatArray:
    """log Phi(z), accurate far into the lower tail."""
    return _scalar_or_array(log_ndtr(np.asarray(z, dtype=np.float64)))


def inverse_mills(z: FloatArray) -> FloatArray:
    """N(z) / Phi(z) for the standard normal."""
    z = np.asarray(z, dtype=np.float64)
    tail = z < TAIL_Z
    zt = np.where(tail, z, TAIL_Z)
    z2 = zt * zt
    series = -zt / (1.0 - 1.0 / z2 + 3.0 / z2**2 - 15.0 / z2**3)
    zb = np.where(tail, 0.0, z)
    direct = np.exp(-0.5 * zb * zb - HALF_LOG_2PI - log_ndtr(zb))
    return np.where(tail, series, direct)


def tilted_moments(
    y: FloatArray, m_c: FloatArray, v_c: FloatArray, s: FloatArray
) -> TiltedResult:
    """Normalizer and moments of Phi(y a / sqrt(s + 1)) N(a; m_c, v_c).

    Works elementwise on scalars or aligned arrays.
    """
    y = np.asarray(y, dtype=np.float64)
    m_c = np.asarray(m_c, dtype=np.float64)
    v_c = np.asarray(v_c, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)

    c = v_c + s + 1.0
    sqrt_c = np.sqrt(c)
    z = y * m_c / sqrt_c
    ratio = inverse_mills(z)

    alpha = y * ratio / sqrt_c
    beta = -ratio * (z + ratio) / c
    return TiltedResult(
        log_Z=_scalar_or_array(log_ndtr(z)),
        alpha=_scalar_or_array(alpha),
        beta=_scalar_or_array(beta),
        mu_hat=_scalar_or_array(m_c + v_c * alpha),
        v_hat=_scalar_or_array(v_c + v_c * v_c * beta),
    )


def site_targets(
    m_c: FloatArray, v_c: FloatArray, tr: TiltedResult
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    """Undamped site parameters that make the site times the cavity match the tilted moments.

    Written in terms of alpha and beta so that tiny cavity variances do not
    cancel catastrophically. The normalizer satisfies
    integral(site * cavity) = Z.

    Returns:
        (nu, mu_t, log_s, ok) where ``ok`` flags finite, admissible targets.
    """
    m_c = np.asarray(m_c, dtype=np.float64)
    v_c = np.asarray(v_c, dtype=np.float64)
    alpha = np.asarray(tr.alpha, dtype=np.float64)
    beta = np.asarray(tr.beta, dtype=np.float64)
    log_Z = np.asarray(tr.log_Z, dtype=np.float64)

    # r = v_hat / v_c = 1 / (1 + nu v_c)
    r = 1.0 + v_c * beta
    ok = r > 0.0
    r_safe = np.where(ok, r, 1.0)
    nu = -beta / r_safe
    mu_t = (alpha - m_c * beta) / r_safe
    log_s = (
        log_Z
        - 0.5 * np.log(r_safe)
        + (m_c * m_c * beta - 2.0 * m_c * alpha - v_c * alpha * alpha) / (2.0 * r_safe)
    )
    ok &= np.isfinite(nu) & np.isfinite(mu_t) & np.isfinite(log_s)
    return nu, mu_t, log_s, ok


def site_update(
    m_c: FloatArray,
    v_c: FloatArray,
    tr: TiltedResult,
    old: SiteParams,
    rho: float,
) -> SiteParams:
    """Damped projection: new = (1 - rho) * old + rho * target.

    Sites whose target is inadmissible keep their old parameters.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"Damping must be in (0, 1], got {rho}")
    nu_t, mu_t, log_s_t, ok = site_targets(m_c, v_c, tr)
    old_nu = np.asarray(old.nu, dtype=np.float64)
    old_mu = np.asarray(old.mu_t, dtype=np.float64)
    old_log_s = np.asarray(old.log_s, dtype=np.float64)
    return SiteParams(
        nu=_scalar_or_array(np.where(ok, (1 - rho) * old_nu + rho * nu_t, old_nu)),
        mu_t=_scalar_or_array(np.where(ok, (1 - rho) * old_mu + rho * mu_t, old_mu)),
        log_s=_scalar_or_array(np.where(ok, (1 - rho) * old_log_s + rho * log_s_t, old_log_s)),
    )
