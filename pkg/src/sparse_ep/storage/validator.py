"""Checkpoint validation: structure checks plus custom consistency rules."""

from collections.abc import Callable
from typing import Any

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1

REQUIRED_FIELDS = ["format_version", "method", "n", "hypers", "q", "factors"]
HYPER_FIELDS = ["log_lengthscales", "log_amplitude", "inducing_points", "jitter"]


def _matrix_shape(value: Any) -> tuple[int, ...] | None:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        return None
    return tuple(arr.shape)


def _all_finite(value: Any) -> bool:
    try:
        return bool(np.all(np.isfinite(np.asarray(value, dtype=np.float64))))
    except (TypeError, ValueError):
        return False


class CheckpointValidator:
    """Validates checkpoint dictionaries against the format and custom rules."""

    def __init__(self) -> None:
        self._custom_rules: list[Callable[[dict[str, Any]], list[str]]] = []
        self._register_default_rules()

    def _register_default_rules(self) -> None:
        self._custom_rules.append(self._check_dimensions)
        self._custom_rules.append(self._check_finite)
        self._custom_rules.append(self._check_method_factors)

    def add_rule(self, rule: Callable[[dict[str, Any]], list[str]]) -> None:
        self._custom_rules.append(rule)

    def validate(self, data: dict[str, Any]) -> tuple[bool, list[str]]:
        """
        Validate checkpoint data.

        Args:
            data: Checkpoint dictionary to validate

        Returns:
            Tuple of (is_valid, list of error messages)
        """
        errors = self._validate_structure(data)
        if errors:
            return False, errors

        for rule in self._custom_rules:
            errors.extend(rule(data))

        return len(errors) == 0, errors

    def _validate_structure(self, data: dict[str, Any]) -> list[str]:
        if not isinstance(data, dict):
            return ["Checkpoint must be a dictionary"]

        errors = [f"Missing '{name}' field" for name in REQUIRED_FIELDS if name not in data]
        if errors:
            return errors

        if data["format_version"] != CHECKPOINT_FORMAT_VERSION:
            errors.append(
                f"Unsupported format_version {data['format_version']!r} "
                f"(expected {CHECKPOINT_FORMAT_VERSION})"
            )
        if data["method"] not in ("ep", "sep", "adf"):
            errors.append(f"method: must be one of ['ep', 'sep', 'adf'], got {data['method']!r}")
        if not isinstance(data["n"], int) or data["n"] < 0:
            errors.append("n: must be a non-negative integer")

        hypers = data["hypers"]
        if not isinstance(hypers, dict):
            errors.append("hypers: must be an object")
        else:
            errors.extend(f"hypers: missing '{f}'" for f in HYPER_FIELDS if f not in hypers)

        q = data["q"]
        if not isinstance(q, dict) or "h" not in q or "Lambda" not in q:
            errors.append("q: must be an object with 'h' and 'Lambda'")

        if not isinstance(data["factors"], dict):
            errors.append("factors: must be an object")
        return errors

    def _check_dimensions(self, data: dict[str, Any]) -> list[str]:
        errors: list[str] = []
        hypers = data["hypers"]
        d_shape = _matrix_shape(hypers["log_lengthscales"])
        z_shape = _matrix_shape(hypers["inducing_points"])
        if d_shape is None or len(d_shape) != 1 or d_shape[0] < 1:
            return ["hypers.log_lengthscales: must be a non-empty list of numbers"]
        if z_shape is None or len(z_shape) != 2 or z_shape[1] != d_shape[0] or z_shape[0] < 1:
            return [f"hypers.inducing_points: must be an m x {d_shape[0]} matrix"]

        m = z_shape[0]
        if _matrix_shape(data["q"]["h"]) != (m,):
            errors.append(f"q.h: must have length {m}")
        if _matrix_shape(data["q"]["Lambda"]) != (m, m):
            errors.append(f"q.Lambda: must be {m} x {m}")

        standardization = data.get("standardization")
        if standardization is not None and not isinstance(standardization, dict):
            errors.append("standardization: must be an object with 'mean' and 'scale'")
        elif standardization is not None:
            for name in ("mean", "scale"):
                if _matrix_shape(standardization.get(name)) != (d_shape[0],):
                    errors.append(f"standardization.{name}: must have length {d_shape[0]}")
        return errors

    def _check_finite(self, data: dict[str, Any]) -> list[str]:
        errors: list[str] = []
        for name in HYPER_FIELDS:
            if not _all_finite(data["hypers"][name]):
                errors.append(f"hypers.{name}: contains non-finite values")
        if data["hypers"]["jitter"] is not None and _all_finite(data["hypers"]["jitter"]):
            if float(data["hypers"]["jitter"]) <= 0:
                errors.append("hypers.jitter: must be positive")
        for name in ("h", "Lambda"):
            if not _all_finite(data["q"][name]):
                errors.append(f"q.{name}: contains non-finite values")
        return errors

    def _check_method_factors(self, data: dict[str, Any]) -> list[str]:
        errors: list[str] = []
        factors = data["factors"]
        method = data["method"]
        n = data["n"]
        if method == "ep":
            for name in ("nu", "mu_t", "log_s"):
                if name not in factors:
                    errors.append(f"factors: EP checkpoint missing '{name}'")
                elif _matrix_shape(factors[name]) != (n,):
                    errors.append(f"factors.{name}: must have length {n}")
                elif not _all_finite(factors[name]):
                    errors.append(f"factors.{name}: contains non-finite values")
        elif method == "sep":
            theta = factors.get("theta")
            if not isinstance(theta, dict) or "h" not in theta or "Lambda" not in theta:
                errors.append("factors: SEP checkpoint needs theta with 'h' and 'Lambda'")
            elif _matrix_shape(theta["Lambda"]) != _matrix_shape(data["q"]["Lambda"]):
                errors.append("factors.theta.Lambda: must match q.Lambda in shape")
        elif method == "adf" and factors:
            errors.append("factors: ADF checkpoint stores no factor parameters")
        return errors
