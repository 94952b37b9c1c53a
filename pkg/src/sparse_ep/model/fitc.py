"""FITC projection geometry and the predictive distribution."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import log_ndtr, ndtr

from .kernel import cross_and_diag, gram
from .types import FloatArray, GaussianMoments, GramResult, HyperParams, SiteGeometry

# Open interval for class probabilities; ndtr rounds to 0 or 1 past about 8.3 sigma.
P_MIN = float(np.finfo(np.float64).tiny)
P_MAX = 1.0 - float(np.finfo(np.float64).epsneg)


def site_geometry(gramres: GramResult, K_cross_row: FloatArray, k_diag: float) -> SiteGeometry:
    """Projection weights and conditional variance for one instance."""
    K_cross_row = np.asarray(K_cross_row, dtype=np.float64)
    upsilon = cho_solve((gramres.chol, True), K_cross_row)
    s = float(k_diag - K_cross_row @ upsilon)
    return SiteGeometry(upsilon=upsilon, s=np.float64(max(s, 0.0)))


def batch_geometry(
    gramres: GramResult, K_cross: FloatArray, K_diag: FloatArray
) -> tuple[SiteGeometry, FloatArray]:
    """Vectorized :func:`site_geometry` over the rows of ``K_cross``.

    Returns:
        (geometry with upsilon (n, m) and clamped s (n,), unclamped s)
    """
    if K_cross.shape[0] == 0:
        empty = np.zeros((0, gramres.m))
        return SiteGeometry(upsilon=empty, s=np.zeros(0)), np.zeros(0)
    upsilon = cho_solve((gramres.chol, True), K_cross.T).T
    s_raw = K_diag - np.einsum("ij,ij->i", K_cross, upsilon)
    return SiteGeometry(upsilon=upsilon, s=np.maximum(s_raw, 0.0)), s_raw


def data_geometry(
    X: FloatArray, h: HyperParams, gramres: GramResult | None = None
) -> tuple[SiteGeometry, FloatArray]:
    """FITC geometry of every row of ``X`` under ``h``."""
    if gramres is None:
        gramres = gram(h)
    K_cross, K_diag = cross_and_diag(X, h)
    return batch_geometry(gramres, K_cross, K_diag)


@dataclass
class Prediction:
    """Latent predictive moments and class probabilities for a set of inputs."""

    mean: FloatArray
    var: FloatArray
    p_pos: FloatArray

    @property
    def labels(self) -> FloatArray:
        """Hard labels; p = 0.5 goes to +1."""
        return np.where(self.p_pos >= 0.5, 1.0, -1.0)


def predict_batch(
    q_moments: GaussianMoments,
    Xstar: FloatArray,
    h: HyperParams,
    gramres: GramResult | None = None,
) -> Prediction:
    """Predictive latent moments and P(y=+1) for each row of ``Xstar``.

    Probabilities stay inside the open unit interval. Use :func:`log_predictive`
    for log probabilities in the tails.
    """
    geometry, _ = data_geometry(Xstar, h, gramres)
    U = geometry.upsilon
    mean = U @ q_moments.mu
    quad = np.einsum("ij,ij->i", U @ q_moments.Sigma, U)
    var = geometry.s + np.maximum(quad, 0.0)
    p_pos = np.clip(ndtr(mean / np.sqrt(var + 1.0)), P_MIN, P_MAX)
    return Prediction(mean=mean, var=var, p_pos=p_pos)


def predict(
    q_moments: GaussianMoments, xstar: FloatArray, h: HyperParams
) -> tuple[float, float, float]:
    """Predictive (mean, variance, P(y=+1)) at a single input."""
    xstar = np.asarray(xstar, dtype=np.float64).reshape(1, -1)
    pred = predict_batch(q_moments, xstar, h)
    return float(pred.mean[0]), float(pred.var[0]), float(pred.p_pos[0])


def log_predictive(pred: Prediction, y: FloatArray) -> FloatArray:
    """log p(y* | x*) for each test point."""
    return log_ndtr(y * pred.mean / np.sqrt(pred.var + 1.0))


def evaluate(
    q_moments: GaussianMoments,
    X: FloatArray,
    y: FloatArray,
    h: HyperParams,
    gramres: GramResult | None = None,
) -> tuple[float, float]:
    """Mean negative test log likelihood and error rate on a labelled set."""
    if X.shape[0] == 0:
        return float("nan"), float("nan")
    pred = predict_batch(q_moments, X, h, gramres)
    nll = float(-np.mean(log_predictive(pred, y)))
    err = float(np.mean(pred.labels != y))
    return nll, err
