"""ARD squared-exponential covariance and its hyperparameter derivatives."""

import logging

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from .types import FloatArray, GramResult, HyperParams, NumericalError

logger = logging.getLogger("sparse-ep.kernel")

# Jitter escalation ceiling relative to the amplitude, and the growth factor.
MAX_JITTER_FACTOR = 1e-2
JITTER_GROWTH = 10.0


def _scaled_sqdist(A: FloatArray, B: FloatArray, lengthscales: FloatArray) -> FloatArray:
    """Per-dimension squared differences divided by the squared length-scales.

    Returns an array of shape (len(A), len(B), d).
    """
    diff = (A[:, None, :] - B[None, :, :]) / lengthscales
    return diff * diff


def covariance(A: FloatArray, B: FloatArray, h: HyperParams) -> FloatArray:
    """k(a, b) for every pair of rows of A and B."""
    sq = _scaled_sqdist(A, B, h.lengthscales).sum(axis=-1)
    return h.amplitude * np.exp(-0.5 * sq)


def gram(
    h: HyperParams,
    max_jitter_factor: float = MAX_JITTER_FACTOR,
    growth: float = JITTER_GROWTH,
) -> GramResult:
    """Covariance among the inducing values, plus jitter, and its Cholesky factor.

    Jitter starts at ``h.jitter * amplitude`` and grows by ``growth`` on
    Cholesky failure until it would exceed ``max_jitter_factor * amplitude``.
    The returned ``jitter`` is the absolute value added to the diagonal.
    """
    base = covariance(h.inducing_points, h.inducing_points, h)
    base = 0.5 * (base + base.T)
    start = h.jitter * h.amplitude
    ceiling = max(max_jitter_factor, h.jitter) * h.amplitude
    identity = np.eye(h.m)

    jitter = start
    while True:
        K = base + jitter * identity
        try:
            L = cholesky(K, lower=True, check_finite=True)
            if jitter != start:
                logger.warning(f"Inducing Gram needed jitter {jitter:.3g} (base {start:.3g})")
            return GramResult(gram=K, chol=L, jitter=jitter)
        except (LinAlgError, ValueError):
            if jitter * growth > ceiling * (1 + 1e-12):
                break
            jitter *= growth

    raise NumericalError(
        f"Cholesky of the inducing Gram failed with jitter up to {jitter:.3g}",
        hint="The inducing set is ill-conditioned; reduce m or re-initialize inducing points.",
    )


def cross_and_diag(X: FloatArray, h: HyperParams) -> tuple[FloatArray, FloatArray]:
    """Cross-covariance to the inducing points and prior variances of the data.

    Returns:
        (K_cross of shape (n, m), K_diag of shape (n,)); no jitter on K_diag.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != h.d:
        raise ValueError(f"X has {X.shape[1]} columns, expected {h.d}")
    K_cross = covariance(X, h.inducing_points, h)
    K_diag = np.full(X.shape[0], h.amplitude)
    return K_cross, K_diag


def kernel_grad(
    h: HyperParams, j: int, X: FloatArray, gramres: GramResult | None = None
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Partial derivatives of (gram, cross, diag) with respect to trainable index ``j``.

    The jitter scales with the amplitude and is constant in every other parameter.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d, m = h.d, h.m
    if not 0 <= j < h.size:
        raise ValueError(f"Invalid hyperparameter index {j} (size {h.size})")

    if gramres is None:
        gramres = gram(h)
    K = gramres.gram - gramres.jitter * np.eye(m)
    K_cross, K_diag = cross_and_diag(X, h)
    ell2 = h.lengthscales**2

    if j < d:
        dGram = K * (h.inducing_points[:, None, j] - h.inducing_points[None, :, j]) ** 2 / ell2[j]
        dCross = K_cross * (X[:, None, j] - h.inducing_points[None, :, j]) ** 2 / ell2[j]
        return dGram, dCross, np.zeros(X.shape[0])

    if j == d:
        return gramres.gram.copy(), K_cross.copy(), K_diag.copy()

    a, k = divmod(j - d - 1, d)
    Z = h.inducing_points
    row = K[a] * (Z[:, k] - Z[a, k]) / ell2[k]
    dGram = np.zeros((m, m))
    dGram[a, :] = row
    dGram[:, a] = row
    dGram[a, a] = 0.0
    dCross = np.zeros_like(K_cross)
    dCross[:, a] = K_cross[:, a] * (X[:, k] - Z[a, k]) / ell2[k]
    return dGram, dCross, np.zeros(X.shape[0])


def contract_kernel_grad(
    h: HyperParams,
    X: FloatArray,
    G_gram: FloatArray,
    G_cross: FloatArray,
    G_diag: FloatArray,
    gramres: GramResult | None = None,
) -> FloatArray:
    """Sum of <G, dK/dxi_j> over the three covariance blocks, for every j at once.

    ``G_gram`` (m, m), ``G_cross`` (n, m) and ``G_diag`` (n,) are the gradients
    of a scalar with respect to each covariance entry. The result is laid out
    like :meth:`HyperParams.to_vector`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d, m = h.d, h.m
    Z = h.inducing_points
    ell2 = h.lengthscales**2

    if gramres is None:
        gramres = gram(h)
    K = gramres.gram - gramres.jitter * np.eye(m)
    K_cross, K_diag = cross_and_diag(X, h)

    out = np.zeros(h.size)

    # Length-scales: dK = K * (x_k - x'_k)^2 / l_k^2.
    WG = G_gram * K
    WC = G_cross * K_cross
    sq_gram = (Z[:, None, :] - Z[None, :, :]) ** 2
    out[:d] = np.einsum("ab,abk->k", WG, sq_gram) / ell2
    if X.shape[0]:
        sq_cross = (X[:, None, :] - Z[None, :, :]) ** 2
        out[:d] += np.einsum("ia,iak->k", WC, sq_cross) / ell2

    # Amplitude: dK = K, jitter included on the Gram.
    out[d] = float(np.sum(G_gram * gramres.gram)) + WC.sum() + float(G_diag @ K_diag)

    # Inducing coordinates: only row/column a of the Gram and column a of the cross block move.
    Ws = (G_gram + G_gram.T) * K
    grad_Z = (Ws @ Z - Ws.sum(axis=1)[:, None] * Z) / ell2
    if X.shape[0]:
        grad_Z += (WC.T @ X - WC.sum(axis=0)[:, None] * Z) / ell2
    out[d + 1 :] = grad_Z.ravel()
    return out
