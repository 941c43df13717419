"""Zero-temperature EP: the constraint y = F w is imposed exactly.

F is brought to reduced row echelon form [I | G] (with column pivoting), so
the first M permuted variables are fixed by the last N - M:

    w_dep = y' - G w_ind.

Only the (N - M) x (N - M) precision of the independent block is ever
factorized; the dependent block's moments follow from it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from epsense.ep import EPConfig, EPResult, _factor, iterate
from epsense.errors import InfeasibleSystemError, ParameterError
from epsense.prior import PriorParams
from epsense.problem import SensingProblem

PIVOT_RTOL = 1e-10
# keep the natural column unless its best pivot is this much smaller than the best overall
COLUMN_SWAP_RATIO = 1e-3


@dataclass
class EchelonSystem:
    G: np.ndarray
    y_prime: np.ndarray
    col_perm: np.ndarray  # echelon column j holds original variable col_perm[j]
    dropped_rows: int = 0

    @property
    def M(self) -> int:
        return self.G.shape[0]

    @property
    def N(self) -> int:
        return self.col_perm.shape[0]

    def to_original(self, v_perm: np.ndarray) -> np.ndarray:
        out = np.empty_like(v_perm)
        out[self.col_perm] = v_perm
        return out

    def to_echelon(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[self.col_perm]


@dataclass
class SplitState:
    a_d: np.ndarray
    d_d: np.ndarray
    a_i: np.ndarray
    d_i: np.ndarray
    sigma_i: np.ndarray
    wbar_i: np.ndarray
    wbar_d: np.ndarray
    sigma_d_diag: np.ndarray


def row_echelon(F, y, rtol: float = PIVOT_RTOL) -> EchelonSystem:
    """Gauss-Jordan elimination to [I | G] w_perm = y'.

    Rows are pivoted partially; a column is swapped out only when its best
    pivot is small next to the largest remaining entry, so an F that already
    has the form [I | G] keeps the identity permutation.

    Rows that turn out linearly dependent are dropped when their right-hand
    side is consistent, otherwise InfeasibleSystemError is raised.
    """
    A = np.array(F, dtype=float, ndmin=2)
    b = np.array(y, dtype=float).reshape(-1)
    M, N = A.shape
    if b.shape[0] != M:
        raise ParameterError(f"y has length {b.shape[0]}, F has {M} rows")
    perm = np.arange(N)
    tol = rtol * max(np.linalg.norm(A, 2), np.finfo(float).tiny)

    rank = 0
    for r in range(min(M, N)):
        sub = np.abs(A[r:, r:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= tol:
            break
        i_nat = int(np.argmax(sub[:, 0]))
        if sub[i_nat, 0] >= COLUMN_SWAP_RATIO * sub[i, j]:
            i, j = i_nat, 0
        i += r
        j += r
        if i != r:
            A[[r, i]] = A[[i, r]]
            b[[r, i]] = b[[i, r]]
        if j != r:
            A[:, [r, j]] = A[:, [j, r]]
            perm[[r, j]] = perm[[j, r]]
        piv = A[r, r]
        A[r] /= piv
        b[r] /= piv
        others = np.arange(M) != r
        factors = A[others, r].copy()
        A[others] -= np.outer(factors, A[r])
        b[others] -= factors * b[r]
        A[others, r] = 0.0
        A[r, r] = 1.0
        rank += 1

    if rank < M:
        leftover = np.abs(b[rank:])
        if np.any(leftover > 1e-8 * max(1.0, np.max(np.abs(y)))):
            raise InfeasibleSystemError(
                f"F has rank {rank} < {M} and the dependent rows carry inconsistent data")
    G = A[:rank, rank:].copy()
    return EchelonSystem(G, b[:rank].copy(), perm, M - rank)


def zero_t_posterior(ech: EchelonSystem, a, d) -> SplitState:
    """Moments of the constrained Gaussian approximation.

    ``a`` and ``d`` are site parameters in echelon order (dependent block first).
    """
    a, d = np.asarray(a, dtype=float), np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ParameterError("site variances must be positive")
    M = ech.M
    G = ech.G
    a_d, d_d, a_i, d_i = a[:M], d[:M], a[M:], d[M:]

    if G.shape[1] == 0:
        empty = np.zeros((0, 0))
        return SplitState(a_d, d_d, a_i, d_i, empty, np.zeros(0), ech.y_prime.copy(), np.zeros(M))

    GtDd = G.T / d_d
    P = GtDd @ G
    P[np.diag_indices_from(P)] += 1.0 / d_i
    cf = _factor(P)
    sigma_i = scipy.linalg.cho_solve(cf, np.eye(P.shape[0]))
    sigma_i = 0.5 * (sigma_i + sigma_i.T)
    wbar_i = scipy.linalg.cho_solve(cf, a_i / d_i + GtDd @ (ech.y_prime - a_d))
    wbar_d = ech.y_prime - G @ wbar_i
    sigma_d_diag = np.einsum("ij,ij->i", G @ sigma_i, G)
    return SplitState(a_d, d_d, a_i, d_i, sigma_i, wbar_i, wbar_d, sigma_d_diag)


def run_ep_zero_t(problem: SensingProblem, prior: PriorParams,
                  config: Optional[EPConfig] = None) -> EPResult:
    """EP in the beta -> infinity limit; config.beta is ignored."""
    config = config or EPConfig()
    if problem.noise_variance > 0:
        raise ParameterError("zero-temperature EP needs noiseless measurements")
    ech = row_echelon(problem.F, problem.y)

    def marginals(a, d):
        st = zero_t_posterior(ech, a, d)
        return (np.concatenate([st.wbar_d, st.wbar_i]),
                np.concatenate([st.sigma_d_diag, np.diag(st.sigma_i)]))

    res = iterate(marginals, ech.N, prior, config)
    res.mean = ech.to_original(res.mean)
    res.variance = ech.to_original(res.variance)
    res.a = ech.to_original(res.a)
    res.d = ech.to_original(res.d)
    return res
