"""Gauss-Hermite quadrature for probit-tilted Gaussian moments."""

import math
from functools import lru_cache

import numpy as np

from ..model.types import FloatArray, NumericalError

SQRT_PI = math.sqrt(math.pi)

_erfc = np.vectorize(math.erfc, otypes=[np.float64])


def std_normal_cdf(t: FloatArray) -> FloatArray:
    return 0.5 * _erfc(-np.asarray(t, dtype=np.float64) / math.sqrt(2.0))


def std_normal_pdf(t: FloatArray) -> FloatArray:
    t = np.asarray(t, dtype=np.float64)
    return np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


@lru_cache(maxsize=16)
def _hermite_cached(nodes: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    k = np.arange(1, nodes)
    off = np.sqrt(k / 2.0)
    jacobi = np.diag(off, 1) + np.diag(off, -1)
    x, vecs = np.linalg.eigh(jacobi)
    w = SQRT_PI * vecs[0, :] ** 2
    return tuple(x.tolist()), tuple(w.tolist())


def hermite_nodes(nodes: int) -> tuple[FloatArray, FloatArray]:
    """Nodes and weights for integral exp(-x^2) g(x) dx (Golub-Welsch).

    Raises:
        NumericalError: if the weights fail to integrate the Gaussian to one.
    """
    if nodes < 1:
        raise ValueError(f"nodes must be positive, got {nodes}")
    x, w = (np.array(v) for v in _hermite_cached(nodes))
    if abs(w.sum() / SQRT_PI - 1.0) > 1e-12:
        raise NumericalError(f"Gauss-Hermite weights for {nodes} nodes do not integrate to one")
    return x, w


def quad_tilted(
    y: float, m_c: float, v_c: float, s: float, nodes: int = 100
) -> tuple[float, float, float]:
    """(log Z, mean, variance) of Phi(y a / sqrt(s + 1)) N(a; m_c, v_c) by quadrature.

    When v_c / (s + 1) > 1 the probit is written as the probability that
    y (a + eps) > 0 with eps ~ N(0, s + 1); the inner integral over a is then
    closed form and the quadrature runs over eps, which keeps the integrand
    smooth relative to the node spacing.
    """
    if nodes < 50:
        raise ValueError(f"At least 50 nodes are required, got {nodes}")
    if v_c <= 0:
        raise ValueError(f"Cavity variance must be positive, got {v_c}")

    x, w = hermite_nodes(nodes)
    w = w / SQRT_PI
    noise = s + 1.0

    if v_c <= noise:
        a = m_c + math.sqrt(2.0 * v_c) * x
        lik = std_normal_cdf(y * a / math.sqrt(noise))
        Z = float(w @ lik)
        first = float(w @ (lik * a)) / Z
        second = float(w @ (lik * a * a)) / Z
    else:
        eps = math.sqrt(2.0 * noise) * x
        sd = math.sqrt(v_c)
        t = y * (m_c + eps) / sd
        P = std_normal_cdf(t)
        pdf = std_normal_pdf(t)
        Z = float(w @ P)
        first = float(w @ (m_c * P + y * sd * pdf)) / Z
        second = float(w @ (m_c**2 * P + 2.0 * m_c * sd * y * pdf + v_c * (P - t * pdf))) / Z

    return math.log(Z), first, second - first * first
