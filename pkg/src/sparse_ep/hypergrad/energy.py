"""EP energy (approximate log evidence) with the likelihood factors held fixed.

Freezing stores the m-dimensional natural parameters of the likelihood
factors at the current hyperparameters. The energy is then a smooth
function of the kernel parameters and inducing inputs alone, and
:mod:`sparse_ep.hypergrad.gradient` returns its exact derivative.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..data.dataset import Dataset
from ..inference.state import KernelCache, ModelState
from ..model.gaussian import (
    LOG_2PI,
    MIN_VARIANCE,
    log_partition,
    log_partition_1d,
    moments,
    site_naturals,
)
from ..model.sites import tilted_moments
from ..model.types import (
    FloatArray,
    GaussianMoments,
    GaussianNatural,
    GramResult,
    HyperParams,
    Method,
    NumericalError,
)

logger = logging.getLogger("sparse-ep.hypergrad")


@dataclass
class FrozenFactors:
    """Likelihood-factor naturals captured at one hyperparameter setting.

    ``theta`` is the summed factor (EP: sum of sites along their reference
    projections; SEP: the global factor; ADF: q minus the prior).
    ``ref_index`` is set when ``upsilon_ref`` holds only the rows of one
    minibatch; such factors can only be evaluated on that minibatch.
    """

    method: Method
    n: int
    theta: GaussianNatural
    nu: FloatArray | None = None
    mu_t: FloatArray | None = None
    log_s: FloatArray | None = None
    upsilon_ref: FloatArray | None = None
    ref_index: FloatArray | None = None

    @property
    def cavity_fraction(self) -> float:
        """Share of ``theta`` that stays in the SEP/ADF cavity."""
        if self.method == Method.SEP and self.n > 0:
            return 1.0 - 1.0 / self.n
        return 1.0


def freeze_factors(
    state: ModelState, cache: KernelCache, index: FloatArray | None = None
) -> FrozenFactors:
    """Capture the current factors of ``state`` for energy and gradient evaluation.

    With ``index``, EP keeps the reference projections of those rows only,
    taken from the cache, and reads the summed sites off q.
    """
    if state.method == Method.EP:
        assert state.sites is not None
        if index is None:
            upsilon = cache.full()[0].upsilon.copy()
            theta = site_naturals(state.sites, upsilon)
        else:
            upsilon = cache.rows(index)[0].upsilon.copy()
            theta = state.q_nat - cache.prior
        return FrozenFactors(
            method=Method.EP,
            n=state.n,
            theta=theta,
            nu=np.array(state.sites.nu, dtype=np.float64),
            mu_t=np.array(state.sites.mu_t, dtype=np.float64),
            log_s=np.array(state.sites.log_s, dtype=np.float64),
            upsilon_ref=upsilon,
            ref_index=None if index is None else np.array(index, dtype=np.intp),
        )
    if state.method == Method.SEP:
        assert state.theta is not None
        return FrozenFactors(method=Method.SEP, n=state.n, theta=state.theta.copy())
    return FrozenFactors(method=Method.ADF, n=state.n, theta=state.q_nat - cache.prior)


def prior_log_partition(gramres: GramResult) -> float:
    """g of the prior (h = 0, Lambda = K^-1) from the Cholesky factor of K."""
    return float(np.sum(np.log(np.diag(gramres.chol)))) + 0.5 * gramres.m * LOG_2PI


@dataclass
class SiteTerms:
    """Per-site cavity, tilted quantities and chain-rule heads for a batch.

    ``cav_cov_u`` holds the rows Sigma_cav upsilon_i and ``cav_mean`` the
    cavity means (one row per site for EP, a single row for SEP/ADF).
    """

    valid: FloatArray
    m_c: FloatArray
    v_c: FloatArray
    log_Z: FloatArray
    alpha: FloatArray
    gamma: FloatArray
    cav_cov_u: FloatArray
    cav_mean: FloatArray
    D: FloatArray
    # EP only: q marginals along the reference projections and their cavity
    W: FloatArray | None = None
    m_a: FloatArray | None = None
    v_a: FloatArray | None = None
    m_cr: FloatArray | None = None
    v_cr: FloatArray | None = None
    cav: GaussianMoments | None = None
    cav_nat: GaussianNatural | None = None


def _tilted_heads(
    y: FloatArray, m_c: FloatArray, v_c: FloatArray, s: FloatArray, valid: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    tr = tilted_moments(y, m_c, v_c, s)
    alpha = np.where(valid, tr.alpha, 0.0)
    gamma = np.where(valid, -tr.alpha * m_c / (2.0 * (v_c + s + 1.0)), 0.0)
    log_Z = np.where(valid, tr.log_Z, 0.0)
    return log_Z, alpha, gamma


def _ref_rows(frozen: FrozenFactors, index: FloatArray) -> FloatArray:
    if frozen.ref_index is None:
        return index
    if not np.array_equal(index, frozen.ref_index):
        raise ValueError("Frozen factors hold reference projections for another minibatch")
    return np.arange(len(index))


def site_terms(
    frozen: FrozenFactors,
    q: GaussianMoments,
    q_nat: GaussianNatural,
    upsilon: FloatArray,
    s: FloatArray,
    y: FloatArray,
    index: FloatArray,
) -> SiteTerms:
    """Evaluate the sites in ``index`` against q built from ``frozen``."""
    U = np.atleast_2d(upsilon)
    Q, mu = q.Sigma, q.mu

    if frozen.method == Method.EP:
        assert frozen.upsilon_ref is not None and frozen.nu is not None
        assert frozen.mu_t is not None
        U_ref = frozen.upsilon_ref[_ref_rows(frozen, index)]
        nu, mu_t = frozen.nu[index], frozen.mu_t[index]

        W = U_ref @ Q
        m_a = U_ref @ mu
        v_a = np.einsum("ij,ij->i", W, U_ref)
        one_minus = 1.0 - nu * v_a
        valid = (v_a > MIN_VARIANCE) & (one_minus > 0.0)
        om = np.where(valid, one_minus, 1.0)
        va = np.where(valid, v_a, 1.0)

        UQ = U @ Q
        uw = np.einsum("ij,ij->i", U, W)
        v_c = np.einsum("ij,ij->i", UQ, U) + nu * uw * uw / om
        tau = (nu * m_a - mu_t) / om
        m_c = U @ mu + uw * tau
        valid &= v_c > MIN_VARIANCE
        v_c = np.where(valid, v_c, 1.0)

        lam_a, h_a = 1.0 / va, m_a / va
        lam_c, h_c = om / va, h_a - mu_t
        D = np.where(valid, log_partition_1d(h_c, lam_c) - log_partition_1d(h_a, lam_a), 0.0)

        log_Z, alpha, gamma = _tilted_heads(y, m_c, v_c, s, valid)
        return SiteTerms(
            valid=valid,
            m_c=m_c,
            v_c=v_c,
            log_Z=log_Z,
            alpha=alpha,
            gamma=gamma,
            cav_cov_u=UQ + (nu * uw / om)[:, None] * W,
            cav_mean=mu[None, :] + tau[:, None] * W,
            D=D,
            W=W,
            m_a=m_a,
            v_a=va,
            m_cr=h_c / lam_c,
            v_cr=1.0 / lam_c,
        )

    f = frozen.cavity_fraction
    cav_nat = q_nat if f == 1.0 else q_nat - frozen.theta.scaled(1.0 - f)
    cav = moments(cav_nat)
    Wc = U @ cav.Sigma
    m_c = U @ cav.mu
    v_c = np.einsum("ij,ij->i", Wc, U)
    valid = v_c > MIN_VARIANCE
    v_c = np.where(valid, v_c, 1.0)
    log_Z, alpha, gamma = _tilted_heads(y, m_c, v_c, s, valid)
    return SiteTerms(
        valid=valid,
        m_c=m_c,
        v_c=v_c,
        log_Z=log_Z,
        alpha=alpha,
        gamma=gamma,
        cav_cov_u=Wc,
        cav_mean=cav.mu[None, :],
        D=np.zeros(len(index)),
        cav=cav,
        cav_nat=cav_nat,
    )


def factor_energy(
    hypers: HyperParams,
    frozen: FrozenFactors,
    data: Dataset,
    cache: KernelCache | None = None,
) -> float:
    """log Z_q at ``hypers`` with the likelihood factors fixed to ``frozen``."""
    if data.n != frozen.n:
        raise ValueError(f"Frozen factors cover {frozen.n} instances, data has {data.n}")
    if cache is None or cache.hypers is not hypers:
        cache = KernelCache.build(hypers, data.X)

    q_nat = cache.prior + frozen.theta
    energy = log_partition(q_nat) - prior_log_partition(cache.gramres)
    if frozen.n == 0:
        return energy

    q = moments(q_nat)
    geometry, _ = cache.full()
    index = np.arange(frozen.n)
    terms = site_terms(frozen, q, q_nat, geometry.upsilon, geometry.s, data.y, index)

    skipped = int(np.count_nonzero(~terms.valid))
    if skipped:
        logger.debug(f"Energy: {skipped} sites with invalid cavities left out")

    energy += float(np.sum(terms.log_Z) + np.sum(terms.D))
    if frozen.method == Method.SEP:
        assert terms.cav_nat is not None
        energy += frozen.n * (log_partition(terms.cav_nat) - log_partition(q_nat))
    return energy


def ep_energy(state: ModelState, data: Dataset) -> float:
    """EP approximation to the log marginal likelihood at the current state."""
    cache = state.kernel_cache(data.X)
    return factor_energy(state.hypers, freeze_factors(state, cache), data, cache)


def site_energy(state: ModelState, data: Dataset) -> float:
    """g(q) - g(prior) + sum of log site normalizers (EP only).

    Equals :func:`ep_energy` at an EP fixed point.
    """
    if state.method != Method.EP or state.sites is None:
        raise ValueError("site_energy is defined for EP states only")
    cache = state.kernel_cache(data.X)
    value = log_partition(state.q_nat) - prior_log_partition(cache.gramres)
    if not np.all(np.isfinite(state.sites.log_s)):
        raise NumericalError("Site normalizers are not finite")
    return value + float(np.sum(state.sites.log_s))
