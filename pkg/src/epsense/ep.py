"""Finite-temperature Expectation Propagation with rank-one cavity updates.

Each sweep factorizes the precision beta F^T F + D once, reads the diagonal
of the covariance and the posterior mean, and then updates every site
(a_n, d_n) against that same covariance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from epsense.errors import NumericalError, ParameterError
from epsense.prior import CavityMarginal, PriorParams, TiltedMoments, tilted_moments
from epsense.problem import SensingProblem

log = logging.getLogger(__name__)

RHO_INIT = 0.5


@dataclass
class EPConfig:
    beta: float = 1e9
    max_sweeps: int = 2000
    tol: float = 1e-6
    damping: float = 0.0
    d_min: float = 1e-11
    d_max: float = 1e11
    learn_rho: bool = False
    eta: float = 5e-4
    rho_init: Optional[float] = None
    rho_newton: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if self.max_sweeps < 1:
            raise ParameterError(f"max_sweeps must be positive, got {self.max_sweeps}")
        if not self.tol > 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if not 0.0 <= self.damping < 1.0:
            raise ParameterError(f"damping must lie in [0, 1), got {self.damping}")
        if not 0 < self.d_min < self.d_max:
            raise ParameterError("need 0 < d_min < d_max")
        if self.learn_rho and not self.eta > 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if self.rho_init is not None and not 0.0 < self.rho_init < 1.0:
            raise ParameterError(f"rho_init must lie in (0, 1), got {self.rho_init}")


@dataclass
class EPState:
    a: np.ndarray
    d: np.ndarray
    sigma: Optional[np.ndarray] = None
    wbar: Optional[np.ndarray] = None
    sweep: int = 0
    eps: float = np.inf


@dataclass
class EPResult:
    mean: np.ndarray
    variance: np.ndarray
    converged: bool
    sweeps_used: int
    final_eps: float
    rho_learned: Optional[float] = None
    a: Optional[np.ndarray] = field(default=None, repr=False)
    d: Optional[np.ndarray] = field(default=None, repr=False)
    rho: Optional[float] = None


JITTER_LEVELS = (1e-14, 1e-13, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


def _factor(P: np.ndarray):
    """Cholesky factor of a precision matrix.

    Flat sites (d near d_max) next to beta F^T F make P indefinite in floating
    point; a diagonal jitter relative to max(diag P) is then added, escalating
    through JITTER_LEVELS before giving up.
    """
    if not np.all(np.isfinite(P)):
        raise NumericalError("precision matrix has non-finite entries")
    try:
        return scipy.linalg.cho_factor(P, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        first = exc
    scale = float(np.max(np.diag(P)))
    for level in JITTER_LEVELS:
        Pj = P.copy()
        Pj[np.diag_indices_from(Pj)] += level * scale
        try:
            cf = scipy.linalg.cho_factor(Pj, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        log.debug("Cholesky needed a relative jitter of %g", level)
        return cf
    try:
        cond = float(np.linalg.cond(P))
    except np.linalg.LinAlgError:
        cond = float("inf")
    raise NumericalError(
        f"Cholesky of {P.shape[0]}x{P.shape[0]} precision failed (cond ~ {cond:.3g})"
    ) from first


def _posterior_from_gram(FtF, Fty, a, d, beta):
    P = beta * FtF
    P[np.diag_indices_from(P)] += 1.0 / d
    cf = _factor(P)
    sigma = scipy.linalg.cho_solve(cf, np.eye(P.shape[0]))
    sigma = 0.5 * (sigma + sigma.T)
    wbar = scipy.linalg.cho_solve(cf, beta * Fty + a / d)
    return sigma, wbar


def posterior_params(F, y, a, d, beta: float):
    """Covariance (beta F^T F + D)^-1 and mean Sigma (beta F^T y + D a), D = diag(1/d)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ParameterError("site variances must be positive")
    return _posterior_from_gram(F.T @ F, F.T @ np.asarray(y, dtype=float),
                                np.asarray(a, dtype=float), d, beta)


def cavity_params(sigma_nn, wbar_n, a_n, d_n) -> CavityMarginal:
    """Marginal with site n's Gaussian factor divided out (rank-one update).

    Nonpositive or non-finite variances are returned as they are; callers treat
    them as negative-cavity events.
    """
    sigma_nn, wbar_n = np.asarray(sigma_nn, dtype=float), np.asarray(wbar_n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = sigma_nn / (1.0 - sigma_nn / d_n)
        mean = var * (wbar_n / sigma_nn - a_n / d_n)
    return CavityMarginal(mean, var)


def moment_match_site(tilted: TiltedMoments, cavity: CavityMarginal, d_min: float = 1e-11,
                      d_max: float = 1e11, prev=None, damping: float = 0.0):
    """New site parameters (a, d) making the Gaussian posterior match the tilted moments.

    Returns ``(a_new, d_new, updated)``. Sites with a negative cavity or a
    nonpositive tilted variance are not updated: they keep ``prev`` values
    (or NaN when ``prev`` is None) and are False in ``updated``.
    """
    m1 = np.asarray(tilted.m1, dtype=float)
    tvar = np.asarray(tilted.var, dtype=float)
    cvar = np.asarray(cavity.variance, dtype=float)
    cmean = np.asarray(cavity.mean, dtype=float)
    updated = np.isfinite(cvar) & (cvar > 0) & (tvar > 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        site_prec = 1.0 / tvar - 1.0 / cvar
        d_new = np.where(site_prec > 1.0 / d_max, 1.0 / site_prec, d_max)
        d_new = np.clip(d_new, d_min, d_max)
        a_new = m1 + d_new / cvar * (m1 - cmean)

    if prev is not None:
        a_old, d_old = prev
        if damping > 0:
            a_new = (1.0 - damping) * a_new + damping * a_old
            d_new = (1.0 - damping) * d_new + damping * d_old
        a_new = np.where(updated, a_new, a_old)
        d_new = np.where(updated, d_new, d_old)
    else:
        a_new = np.where(updated, a_new, np.nan)
        d_new = np.where(updated, d_new, np.nan)
    return a_new, d_new, updated


def sweep_error(tilted_now: TiltedMoments, tilted_prev: TiltedMoments) -> float:
    """max_n |m1 change| + |m2 change| between consecutive sweeps."""
    if np.shape(tilted_now.m1) != np.shape(tilted_prev.m1):
        raise ParameterError("moment vectors differ in length")
    if np.size(tilted_now.m1) == 0:
        return 0.0
    err = np.abs(tilted_now.m1 - tilted_prev.m1) + np.abs(tilted_now.m2 - tilted_prev.m2)
    return float(np.max(err))


Marginals = Callable[[np.ndarray, np.ndarray], tuple]


def iterate(marginals: Marginals, N: int, prior: PriorParams, config: EPConfig,
            a0: Optional[np.ndarray] = None, d0: Optional[np.ndarray] = None) -> EPResult:
    """Generic EP sweep loop.

    ``marginals(a, d)`` must return ``(wbar, sigma_diag)`` for the Gaussian
    approximation built from site parameters (a, d). Both solvers share this
    loop and differ only in how they compute those marginals.
    """
    from epsense.learning import dfep_drho_cavity, rho_newton, rho_step

    a = np.zeros(N) if a0 is None else np.array(a0, dtype=float)
    d = np.full(N, prior.lam) if d0 is None else np.array(d0, dtype=float)
    d = np.clip(d, config.d_min, config.d_max)
    rho = prior.rho
    if config.learn_rho:
        rho = RHO_INIT if config.rho_init is None else config.rho_init

    prev = None
    eps = np.inf
    converged = False
    sweep = 0
    for sweep in range(1, config.max_sweeps + 1):
        current = PriorParams(rho, prior.lam)
        wbar, sdiag = marginals(a, d)
        cav = cavity_params(sdiag, wbar, a, d)
        good = np.isfinite(cav.variance) & (cav.variance > 0)
        safe = CavityMarginal(np.where(good, cav.mean, wbar),
                              np.where(good, cav.variance, np.maximum(sdiag, 0.0) + 1e-300))
        tilted = tilted_moments(safe, current)
        a, d, updated = moment_match_site(tilted, cav, config.d_min, config.d_max,
                                          prev=(a, d), damping=config.damping)

        if config.learn_rho and np.any(updated):
            cm, cv = cav.mean[updated], cav.variance[updated]
            if config.rho_newton:
                rho = rho_newton(rho, cm, cv, prior.lam)
            else:
                rho = rho_step(rho, dfep_drho_cavity(cm, cv, current), config.eta)

        if prev is not None:
            eps = sweep_error(tilted, prev)
        prev = tilted
        if eps < config.tol:
            converged = True
            break

    log.debug("EP finished after %d sweeps, eps=%.3g, converged=%s", sweep, eps, converged)
    return EPResult(
        mean=prev.m1.copy(),
        variance=np.maximum(prev.var, 0.0),
        converged=converged,
        sweeps_used=sweep,
        final_eps=float(eps),
        rho_learned=float(rho) if config.learn_rho else None,
        a=a,
        d=d,
        rho=float(rho),
    )


def run_ep(problem: SensingProblem, prior: PriorParams,
           config: Optional[EPConfig] = None) -> EPResult:
    """Reconstruct the signal of ``problem`` with finite-temperature EP."""
    config = config or EPConfig()
    F, y = problem.F, np.asarray(problem.y, dtype=float)
    if y.shape[0] != F.shape[0]:
        raise ParameterError(f"y has length {y.shape[0]}, F has {F.shape[0]} rows")
    FtF = F.T @ F
    Fty = F.T @ y

    def marginals(a, d):
        sigma, wbar = _posterior_from_gram(FtF, Fty, a, d, config.beta)
        return wbar, np.diag(sigma).copy()

    return iterate(marginals, F.shape[1], prior, config)
