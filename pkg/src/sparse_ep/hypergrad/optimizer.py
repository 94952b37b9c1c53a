"""Adaptive-moment gradient ascent on the trainable hyperparameter vector."""

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..model.types import FloatArray, HyperParams

logger = logging.getLogger("sparse-ep.hypergrad")


@dataclass
class AdamState:
    """First/second moment accumulators with the shared step counter."""

    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: FloatArray | None = None
    v: FloatArray | None = None
    skipped: int = field(default=0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "t": self.t,
            "m": None if self.m is None else self.m.tolist(),
            "v": None if self.v is None else self.v.tolist(),
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AdamState":
        m = data.get("m")
        v = data.get("v")
        return cls(
            learning_rate=float(data.get("learning_rate", 0.01)),
            beta1=float(data.get("beta1", 0.9)),
            beta2=float(data.get("beta2", 0.999)),
            eps=float(data.get("eps", 1e-8)),
            t=int(data.get("t", 0)),
            m=None if m is None else np.asarray(m, dtype=np.float64),
            v=None if v is None else np.asarray(v, dtype=np.float64),
            skipped=int(data.get("skipped", 0)),
        )


def opt_step(
    opt_state: AdamState, grad: FloatArray, hypers: HyperParams
) -> tuple[AdamState, HyperParams]:
    """One ascent step on log Z_q.

    A non-finite gradient or update leaves ``hypers`` untouched but still
    advances the step counter.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != (hypers.size,):
        raise ValueError(f"Gradient has shape {grad.shape}, expected ({hypers.size},)")

    m = opt_state.m if opt_state.m is not None else np.zeros(hypers.size)
    v = opt_state.v if opt_state.v is not None else np.zeros(hypers.size)
    t = opt_state.t + 1

    if not np.all(np.isfinite(grad)):
        logger.warning(f"Non-finite hyper-gradient at step {t}; update skipped")
        return _advance(opt_state, t, m, v, skipped=True), hypers

    b1, b2 = opt_state.beta1, opt_state.beta2
    m_new = b1 * m + (1 - b1) * grad
    v_new = b2 * v + (1 - b2) * grad * grad
    m_hat = m_new / (1 - b1**t)
    v_hat = v_new / (1 - b2**t)
    update = opt_state.learning_rate * m_hat / (np.sqrt(v_hat) + opt_state.eps)

    vector = hypers.to_vector() + update
    if not np.all(np.isfinite(vector)):
        logger.warning(f"Non-finite hyperparameter update at step {t}; update skipped")
        return _advance(opt_state, t, m, v, skipped=True), hypers

    return _advance(opt_state, t, m_new, v_new), hypers.with_vector(vector)


def _advance(
    opt_state: AdamState, t: int, m: FloatArray, v: FloatArray, skipped: bool = False
) -> AdamState:
    return AdamState(
        learning_rate=opt_state.learning_rate,
        beta1=opt_state.beta1,
        beta2=opt_state.beta2,
        eps=opt_state.eps,
        t=t,
        m=m,
        v=v,
        skipped=opt_state.skipped + int(skipped),
    )
