"""Domain types shared by the model modules."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]


class NumericalError(Exception):
    """Raised when a linear-algebra step cannot produce a valid Gaussian."""

    def __init__(self, message: str, hint: str | None = None):
        super().__init__(message)
        self.hint = hint


class Method(str, Enum):
    """Factor-update scheme used to fit the posterior."""

    EP = "ep"
    SEP = "sep"
    ADF = "adf"


@dataclass
class HyperParams:
    """Trainable kernel parameters and inducing inputs.

    The trainable vector is laid out as
    ``[log_lengthscales (d), log_amplitude (1), inducing_points.ravel() (m*d)]``.
    ``jitter`` is relative to the amplitude: the Gram diagonal gets ``jitter * amplitude``.
    """

    log_lengthscales: FloatArray
    log_amplitude: float
    inducing_points: FloatArray
    jitter: float = 1e-6

    def __post_init__(self) -> None:
        self.log_lengthscales = np.asarray(self.log_lengthscales, dtype=np.float64).reshape(-1)
        self.inducing_points = np.atleast_2d(np.asarray(self.inducing_points, dtype=np.float64))
        self.log_amplitude = float(self.log_amplitude)
        self.jitter = float(self.jitter)

        d = self.log_lengthscales.shape[0]
        if d < 1:
            raise ValueError("At least one input dimension is required")
        if self.inducing_points.shape[0] < 1:
            raise ValueError("At least one inducing point is required")
        if self.inducing_points.shape[1] != d:
            raise ValueError(
                f"Inducing points have {self.inducing_points.shape[1]} columns, expected {d}"
            )
        if self.jitter <= 0:
            raise ValueError(f"jitter must be positive, got {self.jitter}")
        if not (
            np.all(np.isfinite(self.log_lengthscales))
            and np.isfinite(self.log_amplitude)
            and np.all(np.isfinite(self.inducing_points))
        ):
            raise ValueError("Hyperparameters must be finite")

    @property
    def d(self) -> int:
        return int(self.log_lengthscales.shape[0])

    @property
    def m(self) -> int:
        return int(self.inducing_points.shape[0])

    @property
    def lengthscales(self) -> FloatArray:
        return np.exp(self.log_lengthscales)

    @property
    def amplitude(self) -> float:
        return float(np.exp(self.log_amplitude))

    @property
    def size(self) -> int:
        """Number of trainable scalars (d + 1 + m*d)."""
        return self.d + 1 + self.m * self.d

    def to_vector(self) -> FloatArray:
        return np.concatenate(
            [self.log_lengthscales, [self.log_amplitude], self.inducing_points.ravel()]
        )

    def with_vector(self, vector: FloatArray) -> "HyperParams":
        """Return a copy whose trainable values are taken from ``vector``."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise ValueError(f"Expected a vector of length {self.size}, got {vector.shape}")
        d = self.d
        return HyperParams(
            log_lengthscales=vector[:d].copy(),
            log_amplitude=float(vector[d]),
            inducing_points=vector[d + 1 :].reshape(self.m, d).copy(),
            jitter=self.jitter,
        )

    def index_name(self, j: int) -> str:
        """Human-readable name of trainable index ``j``."""
        d = self.d
        if 0 <= j < d:
            return f"log_lengthscale[{j}]"
        if j == d:
            return "log_amplitude"
        if d < j < self.size:
            a, k = divmod(j - d - 1, d)
            return f"inducing[{a},{k}]"
        raise ValueError(f"Invalid hyperparameter index {j} (size {self.size})")


@dataclass
class GramResult:
    """Inducing-point covariance with its lower Cholesky factor."""

    gram: FloatArray
    chol: FloatArray
    jitter: float

    @property
    def m(self) -> int:
        return int(self.gram.shape[0])


@dataclass
class SiteGeometry:
    """FITC projection of one or many instances onto the inducing values.

    ``upsilon`` is (m,) for a single instance or (n, m) for a batch;
    ``s`` is the matching scalar or (n,) vector of conditional variances.
    """

    upsilon: FloatArray
    s: FloatArray


@dataclass
class GaussianMoments:
    """Gaussian in moment form."""

    mu: FloatArray
    Sigma: FloatArray

    @property
    def m(self) -> int:
        return int(self.mu.shape[0])


@dataclass
class GaussianNatural:
    """Gaussian in natural form, density proportional to exp(h'x - x'Lambda x / 2).

    The lower Cholesky factor of ``Lambda`` is cached on first use and must be
    dropped with :meth:`invalidate` if ``Lambda`` is edited in place.
    """

    h: FloatArray
    Lambda: FloatArray
    _chol: FloatArray | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def m(self) -> int:
        return int(self.h.shape[0])

    @classmethod
    def zeros(cls, m: int) -> "GaussianNatural":
        return cls(h=np.zeros(m), Lambda=np.zeros((m, m)))

    def copy(self) -> "GaussianNatural":
        return GaussianNatural(h=self.h.copy(), Lambda=self.Lambda.copy())

    def invalidate(self) -> None:
        self._chol = None

    def __add__(self, other: "GaussianNatural") -> "GaussianNatural":
        return GaussianNatural(h=self.h + other.h, Lambda=self.Lambda + other.Lambda)

    def __sub__(self, other: "GaussianNatural") -> "GaussianNatural":
        return GaussianNatural(h=self.h - other.h, Lambda=self.Lambda - other.Lambda)

    def scaled(self, factor: float) -> "GaussianNatural":
        return GaussianNatural(h=self.h * factor, Lambda=self.Lambda * factor)


@dataclass
class SiteParams:
    """Rank-one site parameters along the projection direction.

    The factor is ``exp(log_s - nu * a**2 / 2 + mu_t * a)`` with ``a = upsilon' f``.
    Fields hold a scalar for one site or aligned (n,) arrays for many.
    """

    nu: FloatArray
    mu_t: FloatArray
    log_s: FloatArray

    @classmethod
    def uniform(cls, n: int) -> "SiteParams":
        return cls(nu=np.zeros(n), mu_t=np.zeros(n), log_s=np.zeros(n))

    def copy(self) -> "SiteParams":
        return SiteParams(
            nu=np.array(self.nu, dtype=np.float64, copy=True),
            mu_t=np.array(self.mu_t, dtype=np.float64, copy=True),
            log_s=np.array(self.log_s, dtype=np.float64, copy=True),
        )


@dataclass
class TiltedResult:
    """Moments of the probit-tilted cavity along one projection."""

    log_Z: FloatArray
    alpha: FloatArray
    beta: FloatArray
    mu_hat: FloatArray
    v_hat: FloatArray
