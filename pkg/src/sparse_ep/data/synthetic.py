"""Labelled draws from a GP prior with probit label noise."""

import logging

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from ..model.kernel import covariance
from ..model.types import HyperParams, NumericalError
from .dataset import Dataset

logger = logging.getLogger("sparse-ep.data")

MAX_DENSE_N = 5000


def synthetic_gp(n: int, d: int, hypers: HyperParams, seed: int) -> Dataset:
    """Sample X ~ N(0, I), f ~ GP(0, k) at X, and y = sign(f + eps) with eps ~ N(0, 1).

    Only the kernel parameters and jitter of ``hypers`` are used; the sampled
    latent values are kept on the returned dataset.
    """
    if n < 0 or n > MAX_DENSE_N:
        raise ValueError(f"n must be in [0, {MAX_DENSE_N}] for dense sampling, got {n}")
    if d != hypers.d:
        raise ValueError(f"Hyperparameters have {hypers.d} length-scales, expected {d}")

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    if n == 0:
        return Dataset(X=X, y=np.zeros(0), latent=np.zeros(0), name="synthetic")

    K = covariance(X, X, hypers)
    K = 0.5 * (K + K.T) + hypers.jitter * hypers.amplitude * np.eye(n)
    try:
        L = cholesky(K, lower=True)
    except LinAlgError as e:
        raise NumericalError(
            f"Cholesky of the {n}x{n} data covariance failed",
            hint="Increase the jitter or the length-scale of the generating kernel.",
        ) from e

    f = L @ rng.standard_normal(n)
    noisy = f + rng.standard_normal(n)
    y = np.where(noisy >= 0.0, 1.0, -1.0)
    logger.debug(f"Sampled synthetic data: n={n}, d={d}, positive rate {np.mean(y > 0):.3f}")
    return Dataset(
        X=X,
        y=y,
        label_mapping={"-1": -1, "1": 1},
        latent=f,
        name="synthetic",
    )
