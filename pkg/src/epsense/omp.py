"""Orthogonal Matching Pursuit baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from epsense.errors import ParameterError
from epsense.problem import SensingProblem, n_nonzero

_SINGULAR_RCOND = 1e-12


@dataclass
class OMPConfig:
    max_atoms: Optional[int] = None
    residual_tol: float = 1e-9

    def atoms_for(self, problem: SensingProblem, rho: Optional[float] = None) -> int:
        if self.max_atoms is not None:
            if self.max_atoms > problem.M:
                raise ParameterError(f"max_atoms={self.max_atoms} exceeds M={problem.M}")
            return self.max_atoms
        if rho is not None:
            # below the counting bound round(rho N) > M; cap at what M rows can identify
            return min(n_nonzero(rho, problem.N), problem.M)
        return problem.M


@dataclass
class OMPTrace:
    support: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    stopped_singular: bool = False


def omp_reconstruct(problem: SensingProblem, config: Optional[OMPConfig] = None,
                    rho: Optional[float] = None, trace: Optional[OMPTrace] = None) -> np.ndarray:
    """Greedy support selection on normalized columns with least-squares refits.

    ``rho`` sets the default atom budget round(rho N) when ``config.max_atoms``
    is unset; otherwise the budget is M.
    """
    config = config or OMPConfig()
    F, y = problem.F, np.asarray(problem.y, dtype=float)
    norms = np.linalg.norm(F, axis=0)
    if np.any(norms == 0):
        raise ParameterError("F has a zero column")
    Fn = F / norms
    max_atoms = config.atoms_for(problem, rho)
    trace = trace if trace is not None else OMPTrace()

    support: list[int] = []
    coef = np.zeros(0)
    residual = y.copy()
    ynorm = max(np.linalg.norm(y), np.finfo(float).tiny)
    trace.residual_norms.append(float(np.linalg.norm(residual)))
    while len(support) < max_atoms and np.linalg.norm(residual) > config.residual_tol * ynorm:
        scores = np.abs(Fn.T @ residual)
        scores[support] = -np.inf
        j = int(np.argmax(scores))
        active = Fn[:, support + [j]]
        sv = np.linalg.svd(active, compute_uv=False)
        if sv[-1] <= _SINGULAR_RCOND * sv[0]:
            trace.stopped_singular = True
            break
        support.append(j)
        coef = np.linalg.lstsq(active, y, rcond=None)[0]
        residual = y - active @ coef
        trace.residual_norms.append(float(np.linalg.norm(residual)))

    trace.support = list(support)
    w_hat = np.zeros(F.shape[1])
    if support:
        w_hat[support] = coef / norms[support]
    return w_hat
