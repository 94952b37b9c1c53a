"""Training configuration, model state and the progress trace."""

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..hypergrad.optimizer import AdamState
from ..model.fitc import batch_geometry
from ..model.gaussian import prior_natural
from ..model.kernel import JITTER_GROWTH, MAX_JITTER_FACTOR, cross_and_diag, gram
from ..model.types import (
    FloatArray,
    GaussianNatural,
    GramResult,
    HyperParams,
    Method,
    SiteGeometry,
    SiteParams,
)


class TrainConfig(BaseModel):
    """Validated options for one training run."""

    method: Method = Method.EP
    m: int = Field(default=200, ge=1)
    minibatch_size: int | None = Field(default=None, ge=1)
    iterations: int = Field(default=250, ge=0)
    epochs: int = Field(default=10, ge=0)
    damping: float | None = None
    learn_hypers: bool = True
    learning_rate: float = Field(default=0.01, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    seed: int = 0
    jitter: float = Field(default=1e-6, gt=0)
    max_jitter_factor: float = Field(default=MAX_JITTER_FACTOR, gt=0)
    jitter_growth: float = Field(default=JITTER_GROWTH, gt=1)
    initial_lengthscale: float | None = Field(default=None, gt=0)
    initial_amplitude: float = Field(default=1.0, gt=0)
    cache_upsilon: bool = False
    trace_every: int = Field(default=25, ge=1)
    repair_halvings: int = Field(default=30, ge=0)

    @field_validator("damping")
    @classmethod
    def _check_damping(cls, value: float | None) -> float | None:
        if value is not None and not 0.0 < value <= 1.0:
            raise ValueError(f"damping must be in (0, 1], got {value}")
        return value

    @property
    def is_batch(self) -> bool:
        return self.minibatch_size is None

    @property
    def effective_damping(self) -> float:
        """Configured damping, else 0.8 for batch passes and 1.0 for minibatches."""
        if self.damping is not None:
            return self.damping
        return 0.8 if self.is_batch else 1.0


@dataclass
class KernelCache:
    """Everything that depends on the current hyperparameters.

    Projections of the training inputs are kept only when ``keep_full``;
    otherwise they are recomputed for each minibatch.
    """

    hypers: HyperParams
    gramres: GramResult
    prior: GaussianNatural
    X: FloatArray
    keep_full: bool = False
    _full: tuple[SiteGeometry, FloatArray] | None = field(default=None, repr=False)

    @classmethod
    def build(
        cls,
        hypers: HyperParams,
        X: FloatArray,
        keep_full: bool = False,
        max_jitter_factor: float = MAX_JITTER_FACTOR,
        jitter_growth: float = JITTER_GROWTH,
    ) -> "KernelCache":
        gramres = gram(hypers, max_jitter_factor, jitter_growth)
        return cls(
            hypers=hypers,
            gramres=gramres,
            prior=prior_natural(gramres),
            X=X,
            keep_full=keep_full,
        )

    def full(self) -> tuple[SiteGeometry, FloatArray]:
        """Geometry of every training input and the unclamped conditional variances."""
        if self._full is not None:
            return self._full
        K_cross, K_diag = cross_and_diag(self.X, self.hypers)
        result = batch_geometry(self.gramres, K_cross, K_diag)
        if self.keep_full:
            self._full = result
        return result

    def rows(self, index: FloatArray) -> tuple[SiteGeometry, FloatArray]:
        """Geometry of the training inputs in ``index``."""
        if self._full is not None:
            geometry, s_raw = self._full
            return SiteGeometry(upsilon=geometry.upsilon[index], s=geometry.s[index]), s_raw[index]
        K_cross, K_diag = cross_and_diag(self.X[index], self.hypers)
        return batch_geometry(self.gramres, K_cross, K_diag)


@dataclass
class ModelState:
    """Hyperparameters, posterior and method-specific factor state.

    EP keeps one :class:`SiteParams` entry per instance in ``sites``; SEP keeps
    the global factor in ``theta``; ADF keeps neither.
    """

    method: Method
    n: int
    hypers: HyperParams
    q_nat: GaussianNatural
    sites: SiteParams | None = None
    theta: GaussianNatural | None = None
    step: int = 0
    passes: int = 0
    opt: AdamState = field(default_factory=AdamState)
    cache_upsilon: bool = False
    cache: KernelCache | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.method = Method(self.method)
        if self.method == Method.EP and (self.sites is None or self.theta is not None):
            raise ValueError("EP state holds per-site parameters and no global factor")
        if self.method == Method.SEP and (self.theta is None or self.sites is not None):
            raise ValueError("SEP state holds a global factor and no per-site parameters")
        if self.method == Method.ADF and (self.sites is not None or self.theta is not None):
            raise ValueError("ADF state holds no factor parameters")

    @property
    def m(self) -> int:
        return self.hypers.m

    def kernel_cache(self, X: FloatArray, config: TrainConfig | None = None) -> KernelCache:
        """Current hyperparameter-dependent cache, rebuilt when missing."""
        if self.cache is None or self.cache.hypers is not self.hypers or self.cache.X is not X:
            kwargs: dict[str, Any] = {}
            if config is not None:
                kwargs = {
                    "max_jitter_factor": config.max_jitter_factor,
                    "jitter_growth": config.jitter_growth,
                }
            self.cache = KernelCache.build(self.hypers, X, self.cache_upsilon, **kwargs)
        return self.cache


@dataclass
class TraceRecord:
    """One checkpoint of a training run."""

    step: int
    wall_time_s: float
    test_nll: float | None = None
    test_err: float | None = None
    passes: int = 0
    factor_params: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "wall_time_s": self.wall_time_s,
            "test_nll": self.test_nll,
            "test_err": self.test_err,
        }


@dataclass
class TraceLog:
    """Ordered checkpoints of a run."""

    records: list[TraceRecord] = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    @property
    def last(self) -> TraceRecord | None:
        return self.records[-1] if self.records else None

    def __len__(self) -> int:
        return len(self.records)

    def to_rows(self) -> list[dict[str, Any]]:
        return [r.to_dict() for r in self.records]


@dataclass
class MemoryFootprint:
    """Stored scalar counts by component."""

    site_params: int
    upsilon_cache: int
    factor_params: int
    posterior_params: int
    hyper_params: int

    @property
    def total(self) -> int:
        return self.factor_params + self.posterior_params + self.hyper_params

    def to_dict(self) -> dict[str, int]:
        return {
            "site_params": self.site_params,
            "upsilon_cache": self.upsilon_cache,
            "factor_params": self.factor_params,
            "posterior_params": self.posterior_params,
            "hyper_params": self.hyper_params,
            "total": self.total,
        }


def gaussian_param_count(m: int) -> int:
    """Scalars in a symmetric m x m matrix plus an m-vector."""
    return m * (m + 1) // 2 + m


def memory_footprint(state: ModelState) -> MemoryFootprint:
    """Exact counts of the parameters a run keeps in memory."""
    m, n = state.m, state.n
    site_params = 0
    upsilon_cache = 0
    if state.method == Method.EP:
        site_params = 3 * n
        if state.cache_upsilon:
            upsilon_cache = n * m
        factor_params = site_params + upsilon_cache
    elif state.method == Method.SEP:
        factor_params = gaussian_param_count(m)
    else:
        factor_params = 0
    return MemoryFootprint(
        site_params=site_params,
        upsilon_cache=upsilon_cache,
        factor_params=factor_params,
        posterior_params=gaussian_param_count(m),
        hyper_params=state.hypers.size,
    )


def as_index(index: FloatArray | list[int] | None, n: int) -> FloatArray:
    """Index array for a minibatch, or every instance when ``index`` is None."""
    if index is None:
        return np.arange(n)
    return np.asarray(index, dtype=np.intp)
