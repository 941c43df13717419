"""Spike-and-slab prior and the moments of its one-dimensional tilted marginal.

The tilted marginal of site n is the Gaussian cavity N(w; m', v') multiplied by
the prior (1 - rho) delta(w) + rho N(w; 0, lam). Everything is evaluated
vectorized over sites, with the two mixture weights handled in log domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from epsense.errors import ParameterError

LOG_2PI = np.log(2.0 * np.pi)
MIN_CAVITY_VARIANCE = 1e-12


@dataclass(frozen=True)
class PriorParams:
    rho: float
    lam: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.lam > 0.0:
            raise ParameterError(f"lambda must be positive, got {self.lam}")


@dataclass
class CavityMarginal:
    mean: np.ndarray
    variance: np.ndarray


@dataclass
class TiltedMoments:
    log_z: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    # m2 - m1**2 computed without cancellation
    var: np.ndarray


def log_normal_pdf(x, mean, var):
    x, mean, var = np.asarray(x), np.asarray(mean), np.asarray(var)
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def _log(p: float) -> float:
    return np.log(p) if p > 0 else -np.inf


def mixture_log_weights(mean, var, prior: PriorParams):
    """Unnormalized log weights of the spike and slab components of the tilted marginal."""
    log_spike = _log(1.0 - prior.rho) + log_normal_pdf(0.0, mean, var)
    log_slab = _log(prior.rho) + log_normal_pdf(0.0, mean, prior.lam + var)
    return log_spike, log_slab


def tilted_moments(cavity: CavityMarginal, prior: PriorParams) -> TiltedMoments:
    """Partition function and first two moments of N(w; m', v') psi(w).

    Works elementwise on arrays. Cavity variances below 1e-12 are clamped;
    nonpositive ones are rejected.
    """
    mean = np.asarray(cavity.mean, dtype=float)
    var = np.asarray(cavity.variance, dtype=float)
    if np.any(~(var > 0)):
        raise ParameterError("cavity variance must be positive")
    var = np.maximum(var, MIN_CAVITY_VARIANCE)
    lam = prior.lam

    log_spike, log_slab = mixture_log_weights(mean, var, prior)
    log_z = np.logaddexp(log_spike, log_slab)
    with np.errstate(invalid="ignore"):
        p_slab = np.exp(log_slab - log_z)
        p_spike = np.exp(log_spike - log_z)

    # slab component of the tilted marginal is Gaussian
    mu_s = lam * mean / (lam + var)
    v_s = lam * var / (lam + var)
    m1 = p_slab * mu_s
    m2 = p_slab * (v_s + mu_s ** 2)
    tvar = p_slab * v_s + p_slab * p_spike * mu_s ** 2
    return TiltedMoments(log_z, m1, m2, tvar)


def prior_density_pointwise(w: float, prior: PriorParams) -> tuple[float, float]:
    """(spike weight, slab density at w); the spike is a point mass at 0."""
    slab = prior.rho * np.exp(log_normal_pdf(w, 0.0, prior.lam))
    return 1.0 - prior.rho, float(slab)
