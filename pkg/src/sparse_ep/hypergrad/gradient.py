"""Gradient of the EP energy with respect to kernel parameters and inducing inputs.

The prior contributes 1/2 tr[K^-1 (Sigma + mu mu' - K) K^-1 dK]. Each site
contributes through its cavity marginal (m_c, v_c), its conditional
variance s_i and its projection upsilon_i, with alpha = dlogZ/dm_c and
gamma = dlogZ/dv_c = dlogZ/ds as chain-rule heads. Everything is first
collected as a gradient with respect to the covariance blocks and then
contracted against dK/dxi for all parameters at once.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..data.dataset import Dataset
from ..inference.state import KernelCache, ModelState, as_index
from ..model.gaussian import moments
from ..model.kernel import contract_kernel_grad
from ..model.types import FloatArray, HyperParams, Method
from .energy import FrozenFactors, freeze_factors, site_terms

logger = logging.getLogger("sparse-ep.hypergrad")


@dataclass
class HyperGradient:
    """d log Z_q / d xi, laid out like :meth:`HyperParams.to_vector`."""

    values: FloatArray
    batch_size: int
    n: int

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def named(self, hypers: HyperParams) -> dict[str, float]:
        return {hypers.index_name(j): float(v) for j, v in enumerate(self.values)}


def _sym(A: FloatArray) -> FloatArray:
    return 0.5 * (A + A.T)


def frozen_gradient(
    hypers: HyperParams,
    frozen: FrozenFactors,
    data: Dataset,
    batch: FloatArray | list[int] | None = None,
    cache: KernelCache | None = None,
) -> HyperGradient:
    """Exact (``batch=None``) or unbiased minibatch gradient of the frozen-factor energy.

    The minibatch estimator keeps the prior term whole and scales the
    summed site terms by n / |batch|.
    """
    if cache is None or cache.hypers is not hypers:
        cache = KernelCache.build(hypers, data.X)
    n = frozen.n
    index = as_index(batch, n)
    b = len(index)

    P = cache.prior.Lambda
    K = cache.gramres.gram
    q_nat = cache.prior + frozen.theta
    q = moments(q_nat)
    Sigma, mu = q.Sigma, q.mu

    # Gradient with respect to the prior precision P = K^-1.
    G_P = 0.5 * (K - Sigma - np.outer(mu, mu))

    if b == 0:
        G_gram = -P @ G_P @ P
        values = contract_kernel_grad(
            hypers, data.X[:0], G_gram, np.zeros((0, hypers.m)), np.zeros(0), cache.gramres
        )
        return HyperGradient(values=values, batch_size=0, n=n)

    scale = n / b
    geometry, s_raw = cache.rows(index)
    U = geometry.upsilon
    terms = site_terms(frozen, q, q_nat, U, geometry.s, data.y[index], index)

    alpha = scale * terms.alpha
    gamma = scale * terms.gamma
    Scu = terms.cav_cov_u

    # Through the cavity: dv_c = -(S u)' dP (S u), dm_c = -(S u)' dP mu_c.
    G_P -= Scu.T @ (gamma[:, None] * Scu)
    if frozen.method == Method.EP:
        G_P -= _sym(Scu.T @ (alpha[:, None] * terms.cav_mean))
    else:
        G_P -= _sym(np.outer(Scu.T @ alpha, terms.cav_mean[0]))

    if frozen.method == Method.EP:
        assert terms.W is not None and terms.m_a is not None and terms.v_a is not None
        assert terms.m_cr is not None and terms.v_cr is not None
        # Log-partition difference between cavity and q along each reference projection.
        m_a, v_a, W = terms.m_a, terms.v_a, terms.W
        dD_dh = terms.m_cr - m_a
        dD_dlam = -0.5 * (terms.m_cr**2 + terms.v_cr) + 0.5 * (m_a**2 + v_a)
        g_m = np.where(terms.valid, scale * dD_dh / v_a, 0.0)
        g_v = np.where(terms.valid, scale * (-dD_dh * m_a - dD_dlam) / v_a**2, 0.0)
        G_P -= W.T @ (g_v[:, None] * W)
        G_P -= _sym(np.outer(W.T @ g_m, mu))
    elif frozen.method == Method.SEP:
        assert terms.cav is not None
        cav = terms.cav
        G_P += n * (
            -0.5 * (cav.Sigma + np.outer(cav.mu, cav.mu)) + 0.5 * (Sigma + np.outer(mu, mu))
        )

    # Through upsilon_i = K^-1 k_i: d logZ / d upsilon_i.
    G_U = alpha[:, None] * terms.cav_mean + 2.0 * gamma[:, None] * Scu

    # Through s_i = k_ii - k_i' K^-1 k_i; clamped entries do not move.
    gamma_s = np.where(s_raw >= 0.0, gamma, 0.0)

    G_gram = -P @ G_P @ P - _sym(U.T @ G_U @ P) + U.T @ (gamma_s[:, None] * U)
    G_cross = G_U @ P - 2.0 * gamma_s[:, None] * U
    values = contract_kernel_grad(
        hypers, data.X[index], G_gram, G_cross, gamma_s, cache.gramres
    )
    return HyperGradient(values=values, batch_size=b, n=n)


def grad_hyper(
    state: ModelState,
    batch: FloatArray | list[int] | None,
    data: Dataset,
    frozen: FrozenFactors | None = None,
) -> HyperGradient:
    """Hyper-gradient at the current state with the factors held fixed.

    ``batch=None`` uses every instance; an index set gives the minibatch estimator
    and freezes only the projections of that minibatch.
    """
    cache = state.kernel_cache(data.X)
    if frozen is None:
        index = None if batch is None else as_index(batch, state.n)
        frozen = freeze_factors(state, cache, index)
    grad = frozen_gradient(state.hypers, frozen, data, batch, cache)
    if not grad.is_finite:
        logger.warning("Hyper-gradient has non-finite components")
    return grad
