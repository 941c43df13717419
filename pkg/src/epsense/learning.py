"""EP free energy and gradient-based learning of the prior density rho.

With Z_Q the normalization of the Gaussian approximation and Z_Q(n) that of
the n-th tilted distribution,

    F_EP = (N - 1) log Z_Q - sum_n log Z_Q(n),

and rho enters only through the tilted terms, so dF_EP/drho is a sum of
one-dimensional contributions evaluated at the cavity marginals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from epsense.errors import NumericalError, ParameterError
from epsense.prior import LOG_2PI, CavityMarginal, PriorParams, log_normal_pdf, tilted_moments

RHO_MIN = 1e-6


@dataclass
class FreeEnergyTerms:
    log_zq: float
    log_zqn: np.ndarray
    f_ep: float


def _cavities(sigma_diag, wbar, a, d):
    from epsense.ep import cavity_params

    cav = cavity_params(sigma_diag, wbar, a, d)
    if np.any(~(cav.variance > 0)) or not np.all(np.isfinite(cav.variance)):
        raise NumericalError("negative cavity variance: state is not a valid EP state")
    return cav


def free_energy_at(a, d, prior: PriorParams, beta: float, F, y) -> FreeEnergyTerms:
    """F_EP for site parameters (a, d), recomputing the Gaussian approximation."""
    from epsense.ep import _factor

    F = np.atleast_2d(np.asarray(F, dtype=float))
    y = np.asarray(y, dtype=float)
    a, d = np.asarray(a, dtype=float), np.asarray(d, dtype=float)
    M, N = F.shape

    P = beta * (F.T @ F)
    P[np.diag_indices(N)] += 1.0 / d
    cf = _factor(P)
    L = cf[0]
    wbar = scipy.linalg.cho_solve(cf, beta * (F.T @ y) + a / d)
    sigma = scipy.linalg.cho_solve(cf, np.eye(N))
    logdet_sigma = -2.0 * np.sum(np.log(np.diag(L)))

    resid = y - F @ wbar
    energy = 0.5 * beta * resid @ resid + 0.5 * np.sum((wbar - a) ** 2 / d)
    log_zq = (0.5 * M * np.log(beta) - 0.5 * M * LOG_2PI
              + 0.5 * N * LOG_2PI + 0.5 * logdet_sigma - energy
              - 0.5 * np.sum(LOG_2PI + np.log(d)))

    cav = _cavities(np.diag(sigma), wbar, a, d)
    tilted = tilted_moments(cav, prior)
    # Z_Q(n) = Z_Q * Z_tilted(n) / N(cavity mean; a_n, cavity var + d_n)
    log_zqn = log_zq + tilted.log_z - log_normal_pdf(cav.mean, a, cav.variance + d)
    f_ep = (N - 1) * log_zq - np.sum(log_zqn)
    return FreeEnergyTerms(float(log_zq), log_zqn, float(f_ep))


def ep_free_energy(state, prior: PriorParams, beta: float, F, y) -> FreeEnergyTerms:
    return free_energy_at(state.a, state.d, prior, beta, F, y)


def _gradient_terms(mean, var, prior: PriorParams):
    log_spike0 = log_normal_pdf(0.0, mean, var)
    log_slab0 = log_normal_pdf(0.0, mean, prior.lam + var)
    with np.errstate(divide="ignore"):
        log_z = np.logaddexp(np.log1p(-prior.rho) + log_spike0, np.log(prior.rho) + log_slab0)
    return np.exp(log_spike0 - log_z) - np.exp(log_slab0 - log_z)


def dfep_drho_cavity(mean, var, prior: PriorParams) -> float:
    """dF_EP/drho from cavity means and variances."""
    return float(np.sum(_gradient_terms(np.asarray(mean), np.asarray(var), prior)))


def d2fep_drho2_cavity(mean, var, prior: PriorParams) -> float:
    return float(np.sum(_gradient_terms(np.asarray(mean), np.asarray(var), prior) ** 2))


def dfep_drho(state, prior: PriorParams) -> float:
    if state.sigma is None or state.wbar is None:
        raise ParameterError("state needs sigma and wbar to evaluate the rho gradient")
    cav = _cavities(np.diag(state.sigma), state.wbar, state.a, state.d)
    return dfep_drho_cavity(cav.mean, cav.variance, prior)


def rho_step(rho: float, grad: float, eta: float) -> float:
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    return float(np.clip(rho - eta * grad, RHO_MIN, 1.0 - RHO_MIN))


def rho_newton(rho: float, mean, var, lam: float, tol: float = 1e-12,
               max_iter: int = 100) -> float:
    """Minimize the convex F_EP(rho) at fixed cavities (bracketed Newton)."""
    lo, hi = RHO_MIN, 1.0 - RHO_MIN

    def grad(r):
        return dfep_drho_cavity(mean, var, PriorParams(r, lam))

    if grad(lo) >= 0:
        return lo
    if grad(hi) <= 0:
        return hi
    r = float(np.clip(rho, lo, hi))
    for _ in range(max_iter):
        g = grad(r)
        if g > 0:
            hi = r
        else:
            lo = r
        h = d2fep_drho2_cavity(mean, var, PriorParams(r, lam))
        step = g / h if h > 0 else np.inf
        r_new = r - step
        if not lo < r_new < hi:
            r_new = 0.5 * (lo + hi)
        if abs(r_new - r) < tol:
            return float(r_new)
        r = r_new
    return float(r)


def fep_of_rho(rho: float, cavity: CavityMarginal, lam: float) -> float:
    """The rho-dependent part of F_EP at fixed cavities, -sum_n log Z_tilted(n)."""
    return float(-np.sum(tilted_moments(cavity, PriorParams(rho, lam)).log_z))
