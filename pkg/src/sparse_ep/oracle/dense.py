"""Dense, explicit-inverse references for small problems."""

import math

import numpy as np

from ..model.types import FloatArray
from .quadrature import std_normal_cdf


def scalar_kernel(
    x: FloatArray, x_prime: FloatArray, lengthscales: FloatArray, amplitude: float
) -> float:
    """ARD squared exponential for one pair of points, written out per dimension."""
    total = 0.0
    for k in range(len(x)):
        diff = (float(x[k]) - float(x_prime[k])) / float(lengthscales[k])
        total += diff * diff
    return amplitude * math.exp(-0.5 * total)


def brute_covariance(
    A: FloatArray, B: FloatArray, lengthscales: FloatArray, amplitude: float
) -> FloatArray:
    out = np.empty((len(A), len(B)))
    for i in range(len(A)):
        for j in range(len(B)):
            out[i, j] = scalar_kernel(A[i], B[j], lengthscales, amplitude)
    return out


def dense_conditional_variance(gram: FloatArray, k_row: FloatArray, k_diag: float) -> float:
    """k_ii - k_i' K^-1 k_i by explicit inversion."""
    return float(k_diag - k_row @ np.linalg.inv(gram) @ k_row)


def dense_posterior(
    gram: FloatArray, nu: FloatArray, mu_t: FloatArray, upsilon: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """(mean, covariance) of the prior times rank-one sites, by explicit inversion."""
    U = np.atleast_2d(upsilon)
    Lambda = np.linalg.inv(gram)
    h = np.zeros(gram.shape[0])
    for i in range(U.shape[0]):
        Lambda = Lambda + nu[i] * np.outer(U[i], U[i])
        h = h + mu_t[i] * U[i]
    Sigma = np.linalg.inv(Lambda)
    return Sigma @ h, Sigma


def dense_log_partition(h: FloatArray, Lambda: FloatArray) -> float:
    """log integral exp(h'x - x'Lambda x / 2) dx via slogdet and a linear solve."""
    sign, logdet = np.linalg.slogdet(Lambda)
    if sign <= 0:
        raise ValueError("Lambda is not positive definite")
    m = len(h)
    return 0.5 * float(h @ np.linalg.solve(Lambda, h)) - 0.5 * logdet + 0.5 * m * math.log(
        2.0 * math.pi
    )


def mc_evidence(
    gram: FloatArray,
    upsilon: FloatArray,
    s: FloatArray,
    y: FloatArray,
    samples: int = 200_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte-Carlo estimate of log integral prod_i Phi(y_i u_i'f / sqrt(s_i + 1)) N(f; 0, K) df.

    Samples come from the prior. Returns (log estimate, standard error of the log).
    """
    rng = np.random.default_rng(seed)
    vals, vecs = np.linalg.eigh(gram)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    F = rng.standard_normal((samples, gram.shape[0])) @ root.T
    A = F @ np.atleast_2d(upsilon).T
    lik = std_normal_cdf(y[None, :] * A / np.sqrt(s[None, :] + 1.0))
    weights = np.prod(lik, axis=1)
    mean = float(weights.mean())
    stderr = float(weights.std(ddof=1) / math.sqrt(samples))
    return math.log(mean), stderr / mean
