"""Synthetic compressed sensing instances: sparse signals, i.i.d. and
correlated Gaussian sensing matrices, and (optionally noisy) measurements."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg

from epsense.errors import NumericalError, ParameterError

Seed = Union[int, np.random.SeedSequence]

RANK_RTOL = 1e-10
DELTA_FLOOR = 1e-6
_MAX_RANK_RETRIES = 10


def _seed_seq(seed: Seed, attempt: int = 0) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        if int(seed) < 0:
            raise ParameterError(f"seed must be nonnegative, got {seed}")
        ss = np.random.SeedSequence(int(seed))
    if attempt:
        ss = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (attempt,))
    return ss


def _rng(seed: Seed, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(_seed_seq(seed, attempt))


def n_nonzero(rho: float, N: int) -> int:
    """K = round(rho * N), half-way cases rounded up."""
    return int(np.floor(rho * N + 0.5))


@dataclass
class SparseSignal:
    values: np.ndarray
    support: np.ndarray
    rho_true: float
    lambda_true: float

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def K(self) -> int:
        return self.support.shape[0]


@dataclass
class SensingMatrix:
    entries: np.ndarray
    kind: str = "iid"  # "iid" or "correlated"
    k: Optional[int] = None
    row_covariance: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def label(self) -> str:
        return "IID" if self.kind == "iid" else f"CORRELATED({self.k})"


@dataclass
class SensingProblem:
    matrix: SensingMatrix
    y: np.ndarray
    truth: Optional[SparseSignal] = None
    noise_variance: float = 0.0
    seed: Optional[int] = None

    @property
    def F(self) -> np.ndarray:
        return self.matrix.entries

    @property
    def M(self) -> int:
        return self.matrix.entries.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.entries.shape[1]

    @classmethod
    def from_arrays(cls, F, y, w=None, noise_variance: float = 0.0) -> "SensingProblem":
        """Wrap raw arrays; ``w`` (if given) becomes the ground truth."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape[0] != F.shape[0]:
            raise ParameterError(f"y has length {y.shape[0]}, F has {F.shape[0]} rows")
        truth = None
        if w is not None:
            w = np.asarray(w, dtype=float).reshape(-1)
            if w.shape[0] != F.shape[1]:
                raise ParameterError(f"w has length {w.shape[0]}, F has {F.shape[1]} columns")
            support = np.flatnonzero(w)
            truth = SparseSignal(w, support, support.size / w.size, 1.0)
        return cls(SensingMatrix(F), y, truth, noise_variance)


def gen_sparse_signal(N: int, rho: float, lam: float = 1.0, seed: Seed = 0) -> SparseSignal:
    """Signal with exactly round(rho*N) N(0, lam) entries on a uniform random support."""
    if N < 1:
        raise ParameterError(f"N must be positive, got {N}")
    if not 0.0 < rho <= 1.0:
        raise ParameterError(f"rho must lie in (0, 1], got {rho}")
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    K = n_nonzero(rho, N)
    if K < 1:
        raise ParameterError(f"round(rho*N) = 0 for rho={rho}, N={N}")
    rng = _rng(seed)
    support = np.sort(rng.choice(N, size=K, replace=False))
    values = np.zeros(N)
    values[support] = rng.normal(0.0, np.sqrt(lam), size=K)
    # a Gaussian draw of exactly 0.0 would break the support invariant
    values[support] = np.where(values[support] == 0.0, np.sqrt(lam), values[support])
    return SparseSignal(values, support, float(rho), float(lam))


def matrix_rank(F: np.ndarray) -> int:
    """Numerical rank from column-pivoted QR."""
    if F.size == 0:
        return 0
    R = scipy.linalg.qr(F, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    tol = RANK_RTOL * np.linalg.norm(F, 2)
    return int(np.sum(diag > tol))


def _check_dims(M: int, N: int) -> None:
    if M < 1 or N < 1:
        raise ParameterError(f"M and N must be positive, got M={M}, N={N}")
    if M > N:
        raise ParameterError(f"M={M} > N={N}: generators only produce undersampled systems")


def gen_iid_matrix(M: int, N: int, seed: Seed = 0) -> SensingMatrix:
    _check_dims(M, N)
    for attempt in range(_MAX_RANK_RETRIES):
        F = _rng(seed, attempt).standard_normal((M, N))
        if matrix_rank(F) == M:
            return SensingMatrix(F, "iid")
    raise NumericalError(f"could not draw a full-rank {M}x{N} matrix")


def correlated_covariance(N: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """S = Y^T Y + Delta with Y (k x N) standard normal and Delta half-normal diagonal."""
    Y = rng.standard_normal((k, N))
    delta = np.maximum(np.abs(rng.standard_normal(N)), DELTA_FLOOR)
    S = Y.T @ Y
    S = 0.5 * (S + S.T)
    S[np.diag_indices(N)] += delta
    return S


def gen_correlated_matrix(M: int, N: int, k: int, seed: Seed = 0) -> SensingMatrix:
    """Rows drawn i.i.d. from N(0, S) with the low-rank-plus-diagonal covariance S."""
    _check_dims(M, N)
    if not 0 <= k <= N:
        raise ParameterError(f"k must lie in [0, N], got k={k}")
    for attempt in range(_MAX_RANK_RETRIES):
        rng = _rng(seed, attempt)
        S = correlated_covariance(N, k, rng)
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("row covariance is not positive definite") from exc
        F = rng.standard_normal((M, N)) @ L.T
        if matrix_rank(F) == M:
            return SensingMatrix(F, "correlated", k, S)
    raise NumericalError(f"could not draw a full-rank correlated {M}x{N} matrix")


def measure(F: SensingMatrix, w: SparseSignal, noise_variance: float = 0.0,
            seed: Seed = 0) -> SensingProblem:
    """y = F w + eta with eta ~ N(0, noise_variance I)."""
    if F.entries.shape[1] != w.values.shape[0]:
        raise ParameterError(
            f"F has {F.entries.shape[1]} columns but w has length {w.values.shape[0]}")
    if noise_variance < 0:
        raise ParameterError(f"noise variance must be nonnegative, got {noise_variance}")
    y = F.entries @ w.values
    if noise_variance > 0:
        y = y + _rng(seed).normal(0.0, np.sqrt(noise_variance), size=y.shape)
    root = seed if isinstance(seed, int) else None
    return SensingProblem(F, y, w, float(noise_variance), root)


def make_problem(N: int, M: int, rho: float, lam: float = 1.0, k: Optional[int] = None,
                 noise_variance: float = 0.0, seed: int = 0) -> SensingProblem:
    """Full instance from one root seed, split into signal/matrix/noise streams."""
    s_signal, s_matrix, s_noise = _seed_seq(seed).spawn(3)
    w = gen_sparse_signal(N, rho, lam, s_signal)
    if k is None:
        F = gen_iid_matrix(M, N, s_matrix)
    else:
        F = gen_correlated_matrix(M, N, k, s_matrix)
    problem = measure(F, w, noise_variance, s_noise)
    problem.seed = int(seed)
    return problem
