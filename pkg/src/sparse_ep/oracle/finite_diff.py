"""Central finite differences in the unconstrained hyperparameter vector."""

from collections.abc import Callable

import numpy as np

from ..model.types import FloatArray, HyperParams, NumericalError


def fd_gradient(
    fn: Callable[[HyperParams], float], hypers: HyperParams, step: float = 1e-5
) -> FloatArray:
    """Central-difference gradient of ``fn`` over :meth:`HyperParams.to_vector`.

    Raises:
        NumericalError: if ``fn`` returns a non-finite value.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    base = hypers.to_vector()
    grad = np.zeros_like(base)
    for j in range(base.size):
        plus = base.copy()
        minus = base.copy()
        plus[j] += step
        minus[j] -= step
        f_plus = fn(hypers.with_vector(plus))
        f_minus = fn(hypers.with_vector(minus))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(f"Non-finite function value at {hypers.index_name(j)}")
        grad[j] = (f_plus - f_minus) / (2.0 * step)
    return grad


def fd_sweep(
    fn: Callable[[HyperParams], float],
    hypers: HyperParams,
    steps: tuple[float, ...] = (1e-4, 1e-5, 1e-6),
) -> dict[float, FloatArray]:
    """Finite-difference gradients at several step sizes, to inspect the plateau."""
    return {step: fd_gradient(fn, hypers, step) for step in steps}


def relative_errors(analytic: FloatArray, numeric: FloatArray, floor: float = 1e-3) -> FloatArray:
    """|analytic - numeric| / max(|numeric|, floor), componentwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)
