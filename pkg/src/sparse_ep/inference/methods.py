"""Factor-update schemes: parallel EP, stochastic EP and assumed density filtering."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..model.gaussian import (
    cavity,
    is_positive_definite,
    moments,
    reconstruct_natural,
    site_naturals,
)
from ..model.sites import site_targets, tilted_moments
from ..model.types import (
    FloatArray,
    GaussianMoments,
    GaussianNatural,
    Method,
    NumericalError,
    SiteGeometry,
    SiteParams,
)
from .state import KernelCache, ModelState

logger = logging.getLogger("sparse-ep.inference")

# Fraction of skipped sites in one update above which a warning is logged.
SKIP_WARN_FRACTION = 0.1


@dataclass
class SiteProjection:
    """Undamped site targets for a set of instances and which of them are usable."""

    nu: FloatArray
    mu_t: FloatArray
    log_s: FloatArray
    ok: FloatArray

    @property
    def skipped(self) -> int:
        return int(np.count_nonzero(~self.ok))


@dataclass
class UpdateStats:
    """Outcome of one factor update."""

    updated: int
    skipped: int
    repairs: int = 0


def project_sites(
    method: Method,
    q: GaussianMoments,
    geometry: SiteGeometry,
    y: FloatArray,
    old: SiteParams | None = None,
    theta: GaussianNatural | None = None,
    n: int = 0,
    q_nat: GaussianNatural | None = None,
) -> SiteProjection:
    """Cavity, tilted moments and moment-matched targets for a batch of sites."""
    cav = cavity(method, q, geometry.upsilon, site=old, theta=theta, n=n, q_nat=q_nat)
    tr = tilted_moments(y, cav.m_c, cav.v_c, geometry.s)
    nu, mu_t, log_s, ok = site_targets(cav.m_c, cav.v_c, tr)
    return SiteProjection(nu=nu, mu_t=mu_t, log_s=log_s, ok=ok & cav.valid)


def _log_skips(method: Method, stats: UpdateStats) -> None:
    total = stats.updated + stats.skipped
    if not stats.skipped:
        return
    logger.debug(f"{method.value}: skipped {stats.skipped}/{total} sites")
    if stats.skipped > SKIP_WARN_FRACTION * total:
        logger.warning(f"{method.value}: {stats.skipped} of {total} site updates skipped")


class FactorMethod(ABC):
    """One factor-update scheme."""

    method: Method

    def __init__(self, repair_halvings: int = 30):
        self.repair_halvings = repair_halvings

    @abstractmethod
    def init_factors(self, n: int, m: int) -> tuple[SiteParams | None, GaussianNatural | None]:
        """Initial (sites, theta) before any data is seen."""

    @abstractmethod
    def update(
        self,
        state: ModelState,
        cache: KernelCache,
        index: FloatArray,
        y: FloatArray,
        rho: float,
        full_pass: bool,
    ) -> UpdateStats:
        """Refine the factors of ``index`` and refresh ``state.q_nat`` in place."""

    @abstractmethod
    def rebuild(self, state: ModelState, old: KernelCache, new: KernelCache) -> int:
        """Recompute q for new hyperparameters, keeping the learned factors.

        Returns the number of repair halvings applied.
        """

    def check(self, q_nat: GaussianNatural) -> bool:
        return is_positive_definite(q_nat)

    def _finish(self, stats: UpdateStats) -> UpdateStats:
        _log_skips(self.method, stats)
        if stats.repairs:
            logger.warning(
                f"{self.method.value}: posterior repaired with {stats.repairs} halvings"
            )
        return stats


class EPMethod(FactorMethod):
    """Parallel EP with one rank-one site per instance."""

    method = Method.EP

    def init_factors(self, n: int, m: int) -> tuple[SiteParams | None, GaussianNatural | None]:
        return SiteParams.uniform(n), None

    def update(
        self,
        state: ModelState,
        cache: KernelCache,
        index: FloatArray,
        y: FloatArray,
        rho: float,
        full_pass: bool,
    ) -> UpdateStats:
        sites = state.sites
        assert sites is not None
        if len(index) == 0:
            return UpdateStats(updated=0, skipped=0)

        geometry, _ = cache.full() if full_pass else cache.rows(index)
        if full_pass:
            geometry = SiteGeometry(upsilon=geometry.upsilon[index], s=geometry.s[index])
        old = SiteParams(nu=sites.nu[index], mu_t=sites.mu_t[index], log_s=sites.log_s[index])
        proj = project_sites(Method.EP, moments(state.q_nat), geometry, y, old=old)

        ok = proj.ok
        new_nu = np.where(ok, (1 - rho) * old.nu + rho * proj.nu, old.nu)
        new_mu = np.where(ok, (1 - rho) * old.mu_t + rho * proj.mu_t, old.mu_t)
        new_log_s = np.where(ok, (1 - rho) * old.log_s + rho * proj.log_s, old.log_s)
        sites.nu[index] = new_nu
        sites.mu_t[index] = new_mu
        sites.log_s[index] = new_log_s

        if full_pass:
            state.q_nat = reconstruct_natural(
                Method.EP, cache.prior, sites, cache.full()[0].upsilon
            )
        else:
            delta = SiteParams(nu=new_nu - old.nu, mu_t=new_mu - old.mu_t, log_s=new_log_s)
            state.q_nat = state.q_nat + site_naturals(delta, geometry.upsilon)

        repairs = 0 if self.check(state.q_nat) else self._repair(state, cache)
        return self._finish(
            UpdateStats(updated=int(ok.sum()), skipped=proj.skipped, repairs=repairs)
        )

    def rebuild(self, state: ModelState, old: KernelCache, new: KernelCache) -> int:
        assert state.sites is not None
        state.q_nat = reconstruct_natural(Method.EP, new.prior, state.sites, new.full()[0].upsilon)
        return 0 if self.check(state.q_nat) else self._repair(state, new)

    def _repair(self, state: ModelState, cache: KernelCache) -> int:
        """Halve negative-precision sites until q is positive definite."""
        sites = state.sites
        assert sites is not None
        upsilon = cache.full()[0].upsilon
        for k in range(1, self.repair_halvings + 1):
            negative = sites.nu < 0
            if not np.any(negative):
                break
            sites.nu[negative] *= 0.5
            sites.mu_t[negative] *= 0.5
            state.q_nat = reconstruct_natural(Method.EP, cache.prior, sites, upsilon)
            if self.check(state.q_nat):
                return k

        negative = sites.nu < 0
        sites.nu[negative] = 0.0
        sites.mu_t[negative] = 0.0
        state.q_nat = reconstruct_natural(Method.EP, cache.prior, sites, upsilon)
        if not self.check(state.q_nat):
            raise NumericalError(
                "EP posterior is not positive definite after site repair",
                hint="Lower the damping factor or increase the jitter.",
            )
        return self.repair_halvings + 1


class SEPMethod(FactorMethod):
    """Stochastic EP with a single global factor shared by all instances.

    Each processed instance contributes ``(1 - rho) * theta / n + rho * theta_i``;
    the unprocessed share ``theta * (n - s) / n`` is carried over.
    """

    method = Method.SEP

    def init_factors(self, n: int, m: int) -> tuple[SiteParams | None, GaussianNatural | None]:
        return None, GaussianNatural.zeros(m)

    def update(
        self,
        state: ModelState,
        cache: KernelCache,
        index: FloatArray,
        y: FloatArray,
        rho: float,
        full_pass: bool,
    ) -> UpdateStats:
        theta = state.theta
        assert theta is not None
        n, s = state.n, len(index)
        if n == 0:
            state.theta = GaussianNatural.zeros(state.m)
            state.q_nat = cache.prior.copy()
            return UpdateStats(updated=0, skipped=0)

        geometry, _ = cache.rows(index)
        proj = project_sites(
            Method.SEP, moments(state.q_nat), geometry, y, theta=theta, n=n, q_nat=state.q_nat
        )
        ok = proj.ok
        accepted = SiteParams(nu=proj.nu[ok], mu_t=proj.mu_t[ok], log_s=proj.log_s[ok])
        contributions = site_naturals(accepted, geometry.upsilon[ok])

        carried = (n - s) / n + (1.0 - rho) * int(ok.sum()) / n
        state.theta = theta.scaled(carried) + contributions.scaled(rho)
        state.q_nat = reconstruct_natural(Method.SEP, cache.prior, theta=state.theta)

        repairs = 0 if self.check(state.q_nat) else self._repair(state, cache)
        return self._finish(
            UpdateStats(updated=int(ok.sum()), skipped=proj.skipped, repairs=repairs)
        )

    def rebuild(self, state: ModelState, old: KernelCache, new: KernelCache) -> int:
        state.q_nat = reconstruct_natural(Method.SEP, new.prior, theta=state.theta)
        return 0 if self.check(state.q_nat) else self._repair(state, new)

    def _repair(self, state: ModelState, cache: KernelCache) -> int:
        """Halve the global factor until q is positive definite."""
        assert state.theta is not None
        for k in range(1, self.repair_halvings + 1):
            state.theta = state.theta.scaled(0.5)
            state.q_nat = reconstruct_natural(Method.SEP, cache.prior, theta=state.theta)
            if self.check(state.q_nat):
                return k
        state.theta = GaussianNatural.zeros(state.m)
        state.q_nat = cache.prior.copy()
        return self.repair_halvings + 1


class ADFMethod(FactorMethod):
    """Assumed density filtering: every site's cavity is q itself."""

    method = Method.ADF

    def init_factors(self, n: int, m: int) -> tuple[SiteParams | None, GaussianNatural | None]:
        return None, None

    def update(
        self,
        state: ModelState,
        cache: KernelCache,
        index: FloatArray,
        y: FloatArray,
        rho: float,
        full_pass: bool,
    ) -> UpdateStats:
        if len(index) == 0:
            return UpdateStats(updated=0, skipped=0)

        geometry, _ = cache.rows(index)
        proj = project_sites(Method.ADF, moments(state.q_nat), geometry, y)
        ok = proj.ok
        nu = np.where(ok, rho * proj.nu, 0.0)
        mu_t = np.where(ok, rho * proj.mu_t, 0.0)

        previous = state.q_nat
        repairs = 0
        for k in range(self.repair_halvings + 2):
            added = site_naturals(
                SiteParams(nu=nu, mu_t=mu_t, log_s=np.zeros_like(nu)), geometry.upsilon
            )
            state.q_nat = reconstruct_natural(Method.ADF, previous, theta=added)
            if self.check(state.q_nat):
                break
            negative = nu < 0
            if k >= self.repair_halvings or not np.any(negative):
                nu, mu_t = np.where(negative, 0.0, nu), np.where(negative, 0.0, mu_t)
            else:
                nu, mu_t = np.where(negative, 0.5 * nu, nu), np.where(negative, 0.5 * mu_t, mu_t)
            repairs = k + 1
        else:
            raise NumericalError("ADF posterior is not positive definite after site repair")

        return self._finish(
            UpdateStats(updated=int(ok.sum()), skipped=proj.skipped, repairs=repairs)
        )

    def rebuild(self, state: ModelState, old: KernelCache, new: KernelCache) -> int:
        likelihood = state.q_nat - old.prior
        state.q_nat = reconstruct_natural(Method.ADF, new.prior, theta=likelihood)
        if self.check(state.q_nat):
            return 0
        for k in range(1, self.repair_halvings + 1):
            likelihood = likelihood.scaled(0.5)
            state.q_nat = reconstruct_natural(Method.ADF, new.prior, theta=likelihood)
            if self.check(state.q_nat):
                return k
        state.q_nat = new.prior.copy()
        return self.repair_halvings + 1


class MethodFactory:
    """Factory for factor-update schemes keyed by method name."""

    _methods: dict[str, type[FactorMethod]] = {
        Method.EP.value: EPMethod,
        Method.SEP.value: SEPMethod,
        Method.ADF.value: ADFMethod,
    }

    @classmethod
    def create(cls, method: Method | str, repair_halvings: int = 30) -> FactorMethod:
        """
        Create a factor-update scheme.

        Args:
            method: Method name (ep, sep, adf)
            repair_halvings: Halving budget for posterior repair

        Returns:
            FactorMethod instance
        """
        name = method.value if isinstance(method, Method) else str(method).lower()
        if name not in cls._methods:
            raise ValueError(f"Unknown method: {name}. Available: {list(cls._methods.keys())}")
        return cls._methods[name](repair_halvings=repair_halvings)

    @classmethod
    def register(cls, name: str, method_class: type[FactorMethod]) -> None:
        """Register a new factor-update scheme."""
        cls._methods[name] = method_class

    @classmethod
    def available_methods(cls) -> list[str]:
        """Return list of available method names."""
        return list(cls._methods.keys())
