"""Self-checks comparing the model path against the brute-force references."""

import copy
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from ..data.dataset import Dataset, init_inducing
from ..data.synthetic import synthetic_gp
from ..hypergrad.energy import factor_energy, freeze_factors
from ..hypergrad.gradient import frozen_gradient
from ..inference.methods import project_sites
from ..inference.state import ModelState, TrainConfig
from ..inference.trainer import batch_pass, init_state, minibatch_step
from ..model.gaussian import moments, reconstruct, reconstruct_natural, site_naturals
from ..model.sites import tilted_moments
from ..model.types import HyperParams, Method, SiteParams
from .finite_diff import fd_gradient, relative_errors
from .quadrature import quad_tilted

logger = logging.getLogger("sparse-ep.oracle")

TILTED_GRID = {
    "y": (-1.0, 1.0),
    "m_c": (-4.0, -1.0, 0.0, 1.0, 4.0),
    "v_c": (0.1, 1.0, 10.0),
    "s": (0.0, 1.0, 5.0),
}


@dataclass
class CheckResult:
    """Outcome of one verification check."""

    name: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""


def check_tilted_moments(tolerance: float = 1e-8, nodes: int = 100) -> CheckResult:
    """Closed-form tilted moments against quadrature over the standard grid."""
    worst = 0.0
    where = ""
    for y, m_c, v_c, s in itertools.product(*TILTED_GRID.values()):
        tr = tilted_moments(y, m_c, v_c, s)
        log_Z, mean, var = quad_tilted(y, m_c, v_c, s, nodes)
        err = max(abs(tr.log_Z - log_Z), abs(tr.mu_hat - mean), abs(tr.v_hat - var))
        if err > worst:
            worst, where = err, f"y={y:+.0f} m_c={m_c} v_c={v_c} s={s}"
    return CheckResult("tilted-moments", worst < tolerance, worst, tolerance, where)


def gradient_problem(
    n: int = 20, m: int = 5, d: int = 2, seed: int = 0
) -> tuple[Dataset, HyperParams]:
    """Small synthetic problem with inducing inputs drawn from the data."""
    generating = HyperParams(
        log_lengthscales=np.zeros(d), log_amplitude=0.0, inducing_points=np.zeros((1, d))
    )
    data = synthetic_gp(n, d, generating, seed)
    rng = np.random.default_rng(seed + 1)
    hypers = HyperParams(
        log_lengthscales=np.log(rng.uniform(0.7, 1.5, d)),
        log_amplitude=float(np.log(rng.uniform(0.8, 1.5))),
        inducing_points=init_inducing(data.X, m, seed),
    )
    return data, hypers


def random_factor_state(
    method: Method, data: Dataset, hypers: HyperParams, seed: int = 0
) -> ModelState:
    """State with random, non-converged positive-precision factors."""
    rng = np.random.default_rng(seed)
    state = init_state(TrainConfig(method=method, m=hypers.m), data, hypers)
    cache = state.kernel_cache(data.X)
    sites = SiteParams(
        nu=rng.uniform(0.0, 0.5, data.n),
        mu_t=rng.normal(0.0, 0.5, data.n),
        log_s=rng.normal(0.0, 0.1, data.n),
    )
    upsilon = cache.full()[0].upsilon
    if method == Method.EP:
        state.sites = sites
        state.q_nat = reconstruct_natural(Method.EP, cache.prior, sites, upsilon)
    elif method == Method.SEP:
        state.theta = site_naturals(sites, upsilon)
        state.q_nat = reconstruct_natural(Method.SEP, cache.prior, theta=state.theta)
    else:
        state.q_nat = reconstruct_natural(
            Method.ADF, cache.prior, theta=site_naturals(sites, upsilon)
        )
    return state


def check_gradient(method: Method, tolerance: float = 1e-4, seed: int = 0) -> CheckResult:
    """Analytic hyper-gradient against central differences of the frozen-factor energy."""
    data, hypers = gradient_problem(seed=seed)
    state = random_factor_state(method, data, hypers, seed)
    frozen = freeze_factors(state, state.kernel_cache(data.X))

    analytic = frozen_gradient(hypers, frozen, data).values
    numeric = fd_gradient(lambda h: factor_energy(h, frozen, data), hypers, step=1e-5)
    errors = relative_errors(analytic, numeric)
    j = int(np.argmax(errors))
    return CheckResult(
        f"gradient-{method.value}",
        bool(errors.max() < tolerance),
        float(errors.max()),
        tolerance,
        f"worst at {hypers.index_name(j)}",
    )


def check_reconstruction(tolerance: float = 1e-10, seed: int = 0) -> CheckResult:
    """EP reconstruction from sites equals SEP reconstruction from their summed naturals."""
    data, hypers = gradient_problem(seed=seed)
    state = random_factor_state(Method.EP, data, hypers, seed)
    assert state.sites is not None
    cache = state.kernel_cache(data.X)
    upsilon = cache.full()[0].upsilon
    ep = reconstruct(Method.EP, cache.prior, state.sites, upsilon)
    sep = reconstruct(Method.SEP, cache.prior, theta=site_naturals(state.sites, upsilon))
    err = max(
        float(np.max(np.abs(ep.mu - sep.mu)) / max(np.max(np.abs(ep.mu)), 1.0)),
        float(np.max(np.abs(ep.Sigma - sep.Sigma)) / np.max(np.abs(ep.Sigma))),
    )
    return CheckResult("ep-sep-reconstruct", err < tolerance, err, tolerance)


def check_sep_accumulation(tolerance: float = 1e-10, seed: int = 0) -> CheckResult:
    """A SEP batch pass leaves theta equal to the sum of its per-site contributions."""
    data, hypers = gradient_problem(seed=seed)
    config = TrainConfig(method=Method.SEP, m=hypers.m, learn_hypers=False)
    state = random_factor_state(Method.SEP, data, hypers, seed)
    assert state.theta is not None
    rho = config.effective_damping
    cache = state.kernel_cache(data.X)
    geometry = cache.full()[0]
    proj = project_sites(
        Method.SEP,
        moments(state.q_nat),
        geometry,
        data.y,
        theta=state.theta,
        n=data.n,
        q_nat=state.q_nat,
    )
    expected_h = np.zeros(hypers.m)
    expected_L = np.zeros((hypers.m, hypers.m))
    for i in np.flatnonzero(proj.ok):
        u = geometry.upsilon[i]
        expected_h += (1 - rho) * state.theta.h / data.n + rho * proj.mu_t[i] * u
        expected_L += (1 - rho) * state.theta.Lambda / data.n + rho * proj.nu[i] * np.outer(u, u)

    batch_pass(state, data, config)
    assert state.theta is not None
    err = max(
        float(np.max(np.abs(state.theta.h - expected_h))),
        float(np.max(np.abs(state.theta.Lambda - expected_L))),
    ) / max(float(np.max(np.abs(expected_L))), 1.0)
    return CheckResult("sep-accumulation", err < tolerance, err, tolerance)


def check_sep_minibatch(tolerance: float = 1e-10, seed: int = 0) -> CheckResult:
    """SEP minibatch with s = n matches a SEP batch pass."""
    data, hypers = gradient_problem(seed=seed)
    state = random_factor_state(Method.SEP, data, hypers, seed)
    other = copy.deepcopy(state)
    other.cache = None
    batch_config = TrainConfig(method=Method.SEP, m=hypers.m, learn_hypers=False, damping=1.0)
    mini_config = batch_config.model_copy(update={"minibatch_size": data.n})

    batch_pass(state, data, batch_config)
    minibatch_step(other, np.random.default_rng(seed).permutation(data.n), data, mini_config)
    assert state.theta is not None and other.theta is not None
    err = max(
        float(np.max(np.abs(state.theta.h - other.theta.h))),
        float(np.max(np.abs(state.theta.Lambda - other.theta.Lambda))),
    ) / max(float(np.max(np.abs(state.theta.Lambda))), 1.0)
    return CheckResult("sep-minibatch-equals-batch", err < tolerance, err, tolerance)


def run_verification(seed: int = 0) -> list[CheckResult]:
    """Run every self-check; failures are logged, not raised."""
    results = [check_tilted_moments()]
    results.extend(check_gradient(method, seed=seed) for method in Method)
    results.append(check_reconstruction(seed=seed))
    results.append(check_sep_accumulation(seed=seed))
    results.append(check_sep_minibatch(seed=seed))
    for r in results:
        if r.passed:
            logger.info(f"verify {r.name}: ok (max error {r.max_error:.2e})")
        else:
            logger.error(f"verify {r.name}: FAILED (max error {r.max_error:.2e}) {r.detail}")
    return results
