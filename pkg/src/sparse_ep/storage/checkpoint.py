"""Model checkpoints as versioned JSON with round-trip exact floats."""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from ..hypergrad.optimizer import AdamState
from ..inference.state import ModelState
from ..model.types import FloatArray, GaussianNatural, HyperParams, Method, SiteParams
from .validator import CHECKPOINT_FORMAT_VERSION, CheckpointValidator

logger = logging.getLogger("sparse-ep.storage")


class CheckpointError(Exception):
    """Raised when a checkpoint file is missing, malformed or unsupported."""


def _natural_to_dict(nat: GaussianNatural) -> dict[str, Any]:
    return {"h": nat.h.tolist(), "Lambda": nat.Lambda.tolist()}


def _natural_from_dict(data: dict[str, Any]) -> GaussianNatural:
    return GaussianNatural(
        h=np.asarray(data["h"], dtype=np.float64),
        Lambda=np.asarray(data["Lambda"], dtype=np.float64),
    )


def serialize_state(
    state: ModelState, standardization: tuple[FloatArray, FloatArray] | None = None
) -> dict[str, Any]:
    """JSON-compatible dictionary for ``state``.

    ``standardization`` holds the training feature (mean, scale) so that new
    inputs can be mapped into the space the model was fitted in.
    """
    factors: dict[str, Any] = {}
    if state.method == Method.EP and state.sites is not None:
        factors = {
            "nu": np.asarray(state.sites.nu).tolist(),
            "mu_t": np.asarray(state.sites.mu_t).tolist(),
            "log_s": np.asarray(state.sites.log_s).tolist(),
        }
    elif state.method == Method.SEP and state.theta is not None:
        factors = {"theta": _natural_to_dict(state.theta)}

    h = state.hypers
    data: dict[str, Any] = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "method": state.method.value,
        "n": state.n,
        "hypers": {
            "log_lengthscales": h.log_lengthscales.tolist(),
            "log_amplitude": h.log_amplitude,
            "inducing_points": h.inducing_points.tolist(),
            "jitter": h.jitter,
        },
        "q": _natural_to_dict(state.q_nat),
        "factors": factors,
        "step": state.step,
        "passes": state.passes,
        "cache_upsilon": state.cache_upsilon,
        "optimizer": state.opt.to_dict(),
    }
    if standardization is not None:
        mean, scale = standardization
        data["standardization"] = {
            "mean": np.asarray(mean).tolist(),
            "scale": np.asarray(scale).tolist(),
        }
    return data


def deserialize_state(data: dict[str, Any]) -> ModelState:
    """Inverse of :func:`serialize_state`; validates first.

    Raises:
        CheckpointError: if the data fails validation.
    """
    is_valid, errors = CheckpointValidator().validate(data)
    if not is_valid:
        raise CheckpointError("Invalid checkpoint: " + "; ".join(errors))

    method = Method(data["method"])
    hyper_data = data["hypers"]
    hypers = HyperParams(
        log_lengthscales=np.asarray(hyper_data["log_lengthscales"], dtype=np.float64),
        log_amplitude=float(hyper_data["log_amplitude"]),
        inducing_points=np.asarray(hyper_data["inducing_points"], dtype=np.float64),
        jitter=float(hyper_data["jitter"]),
    )

    factors = data["factors"]
    sites = None
    theta = None
    if method == Method.EP:
        sites = SiteParams(
            nu=np.asarray(factors["nu"], dtype=np.float64),
            mu_t=np.asarray(factors["mu_t"], dtype=np.float64),
            log_s=np.asarray(factors["log_s"], dtype=np.float64),
        )
    elif method == Method.SEP:
        theta = _natural_from_dict(factors["theta"])

    return ModelState(
        method=method,
        n=data["n"],
        hypers=hypers,
        q_nat=_natural_from_dict(data["q"]),
        sites=sites,
        theta=theta,
        step=int(data.get("step", 0)),
        passes=int(data.get("passes", 0)),
        opt=AdamState.from_dict(data.get("optimizer", {})),
        cache_upsilon=bool(data.get("cache_upsilon", False)),
    )


def save_checkpoint(
    state: ModelState,
    path: Path,
    standardization: tuple[FloatArray, FloatArray] | None = None,
) -> Path:
    """Write ``state`` to ``path`` (parents created)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(serialize_state(state, standardization), indent=1))
    logger.info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Path) -> ModelState:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: missing file, invalid JSON or failed validation.
    """
    return deserialize_state(_read_json(path))


def _read_json(path: Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Checkpoint {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise CheckpointError(f"Checkpoint {path} must hold a JSON object")
    return data


def load_standardization(path: Path) -> tuple[FloatArray, FloatArray] | None:
    """Training feature (mean, scale) stored with a checkpoint, if any."""
    block = _read_json(path).get("standardization")
    if block is None:
        return None
    return np.asarray(block["mean"], dtype=np.float64), np.asarray(block["scale"], dtype=np.float64)
