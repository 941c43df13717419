"""Phase-diagram tools: the L0 and L1 reference lines, bisection for the
empirical EP transition, and (rho, alpha) grid sweeps."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.optimize
from scipy.special import erfc

from epsense.ep import EPConfig, run_ep
from epsense.ep_zero import run_ep_zero_t
from epsense.errors import NumericalError, ParameterError
from epsense.metrics import mse, mse_decomposition, pearson_r
from epsense.prior import PriorParams
from epsense.problem import make_problem, n_nonzero

log = logging.getLogger(__name__)

SOLVERS = ("finite-t", "zero-t")


def gauss_tail(x):
    """Standard normal upper tail, int_x^inf exp(-t^2/2)/sqrt(2 pi) dt."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def l0_line(rho0: float) -> float:
    if not 0.0 < rho0 <= 1.0:
        raise ParameterError(f"rho0 must lie in (0, 1], got {rho0}")
    return float(rho0)


def _alpha_of_chi(chi, rho0):
    return 2.0 * (1.0 - rho0) * gauss_tail(chi ** -0.5) + rho0


def _chi_rhs(chi, alpha, rho0):
    inner = ((chi + 1.0) * gauss_tail(chi ** -0.5)
             - np.sqrt(chi) * np.exp(-0.5 / chi) / np.sqrt(2.0 * np.pi))
    return (2.0 * (1.0 - rho0) * inner + rho0 * (chi + 1.0)) / alpha


def l1_residuals(alpha: float, chi: float, rho0: float) -> tuple[float, float]:
    """Residuals of the two equations defining the L1 line at (alpha, chi)."""
    return (float(alpha - _alpha_of_chi(chi, rho0)),
            float(chi - _chi_rhs(chi, alpha, rho0)))


@dataclass
class L1Solution:
    alpha: float
    chi: Optional[float]
    iterations: int
    method: str


def solve_l1(rho0: float, chi0: float = 1.0, theta: float = 0.5,
             max_iter: int = 100_000, rtol: float = 1e-13) -> L1Solution:
    """Damped fixed-point iteration on chi with alpha updated alongside;
    bracketed root finding when the iteration stalls."""
    if not 0.0 < rho0 <= 1.0:
        raise ParameterError(f"rho0 must lie in (0, 1], got {rho0}")
    if rho0 == 1.0:
        # the alpha equation no longer depends on chi
        return L1Solution(1.0, None, 0, "exact")

    chi = chi0
    for it in range(1, max_iter + 1):
        alpha = _alpha_of_chi(chi, rho0)
        new = (1.0 - theta) * chi + theta * _chi_rhs(chi, alpha, rho0)
        if not np.isfinite(new) or new <= 0:
            break
        if abs(new - chi) <= rtol * max(1.0, chi):
            chi = new
            return L1Solution(float(_alpha_of_chi(chi, rho0)), float(chi), it, "fixed-point")
        chi = new
        if it >= 2000 and it % 2000 == 0:
            break  # slow linear convergence: hand over to the root finder

    def resid(log_chi):
        c = np.exp(log_chi)
        return c - _chi_rhs(c, _alpha_of_chi(c, rho0), rho0)

    lo, hi = np.log(1e-6), np.log(10.0)
    while resid(lo) > 0:
        lo -= 5.0
        if lo < -200:
            raise NumericalError(f"cannot bracket the L1 solution for rho0={rho0}")
    while resid(hi) < 0:
        hi += 5.0
        if hi > 200:
            raise NumericalError(f"cannot bracket the L1 solution for rho0={rho0}")
    log_chi, info = scipy.optimize.brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                         maxiter=500, full_output=True)
    if not info.converged:
        raise NumericalError(f"L1 root finding failed for rho0={rho0}: {info.flag}")
    chi = float(np.exp(log_chi))
    return L1Solution(float(_alpha_of_chi(chi, rho0)), chi, info.iterations, "brentq")


def l1_line(rho0: float, alpha_hint: Optional[float] = None) -> float:
    """alpha on the L1-minimization recovery line at density rho0.

    ``alpha_hint`` is accepted for interface compatibility; the iteration is
    started from chi = 1 regardless.
    """
    return solve_l1(rho0).alpha


@dataclass
class BisectionSpec:
    N: int
    rho0: float
    alpha0: Optional[float] = None
    alpha1: Optional[float] = None
    delta: float = 1e-5
    dalpha_min: float = 0.005
    probes: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.alpha0 is None:
            self.alpha0 = l0_line(self.rho0)
        if self.alpha1 is None:
            self.alpha1 = l1_line(self.rho0)
        if not self.alpha0 < self.alpha1:
            raise ParameterError(f"need alpha0 < alpha1, got {self.alpha0}, {self.alpha1}")
        if self.delta <= 0 or self.dalpha_min <= 0 or self.probes < 1:
            raise ParameterError("delta, dalpha_min and probes must be positive")


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


Probe = Callable[[float, int], float]


def ep_probe(N: int, rho0: float, lam: float = 1.0, config: Optional[EPConfig] = None,
             solver: str = "finite-t") -> Probe:
    """MSE of one fresh reconstruction at measurement rate alpha, with rho = rho0 given."""
    config = config or EPConfig()
    run = _solver(solver)

    def probe(alpha: float, seed: int) -> float:
        M = int(round(alpha * N))
        if not 1 <= M <= N:
            raise ParameterError(f"alpha={alpha} gives M={M} outside [1, {N}]")
        problem = make_problem(N, M, rho0, lam, seed=seed)
        res = run(problem, PriorParams(rho0, lam), config)
        return mse(problem.truth.values, res.mean)

    return probe


def _probe_mse(probe: Probe, alpha: float, keys: tuple, probes: int,
               retries: int = 5) -> float:
    values = []
    for p in range(probes):
        errors = []
        for attempt in range(retries + 1):
            seed = derive_seed(*keys, p, attempt)
            try:
                values.append(float(probe(alpha, seed)))
                break
            except (NumericalError, np.linalg.LinAlgError) as exc:
                errors.append(f"seed {seed}: {exc}")
        else:
            raise NumericalError(f"probe at alpha={alpha:.4f} failed {retries + 1} times: "
                                 + "; ".join(errors))
    return float(np.mean(values))


def bisect_transition(spec: BisectionSpec, probe: Optional[Probe] = None,
                      config: Optional[EPConfig] = None, lam: float = 1.0,
                      solver: str = "finite-t", history: Optional[list] = None) -> float:
    """Locate the EP transition between spec.alpha0 and spec.alpha1.

    Each step reconstructs fresh instances at alpha1 and at the midpoint; if
    their MSEs differ by more than delta the midpoint becomes the new lower
    end, otherwise the new upper end. ``history`` (if given) receives
    (alpha0, alpha_mid, alpha1, mse1, mse_mid) per step.
    """
    if probe is None:
        probe = ep_probe(spec.N, spec.rho0, lam, config, solver)
    a0, a1 = float(spec.alpha0), float(spec.alpha1)
    a_star = 0.5 * (a0 + a1)
    it = 0
    while True:
        mse1 = _probe_mse(probe, a1, (spec.seed, it, 1), spec.probes)
        mse_star = _probe_mse(probe, a_star, (spec.seed, it, 0), spec.probes)
        if history is not None:
            history.append((a0, a_star, a1, mse1, mse_star))
        if abs(mse1 - mse_star) > spec.delta:
            a0 = a_star
        else:
            a1 = a_star
        a_star = 0.5 * (a0 + a1)
        it += 1
        if abs(a1 - a0) / 2.0 < spec.dalpha_min:
            return a_star


@dataclass
class PhaseGridSpec:
    N: int
    rho_grid: Sequence[float]
    alpha_grid: Sequence[float]
    trials_per_point: int = 1
    seed: int = 0
    solver: str = "finite-t"
    k: Optional[int] = None  # correlated matrices when set

    def __post_init__(self):
        self.rho_grid = [float(v) for v in self.rho_grid]
        self.alpha_grid = [float(v) for v in self.alpha_grid]
        for name, grid in (("rho_grid", self.rho_grid), ("alpha_grid", self.alpha_grid)):
            if not grid:
                raise ParameterError(f"{name} is empty")
            if any(not 0.0 < v <= 1.0 for v in grid):
                raise ParameterError(f"{name} values must lie in (0, 1]")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ParameterError(f"{name} must be strictly increasing")
        if self.trials_per_point < 1:
            raise ParameterError("trials_per_point must be positive")
        if self.solver not in SOLVERS:
            raise ParameterError(f"unknown solver {self.solver!r}")


@dataclass
class PhasePoint:
    rho: float
    alpha: float
    N: int
    trial: int
    seed: int
    converged: bool
    sweeps: int
    r: float
    mse: float
    mse_head: float
    mse_tail: float
    wall_ms: float = 0.0
    rho_learned: Optional[float] = field(default=None, repr=False)


PHASE_FIELDS = ["rho", "alpha", "N", "trial", "seed", "converged", "sweeps",
                "r", "mse", "mse_head", "mse_tail", "wall_ms"]


def _solver(name: str):
    if name == "finite-t":
        return run_ep
    if name == "zero-t":
        return run_ep_zero_t
    raise ParameterError(f"unknown solver {name!r}")


def run_trial(N: int, rho: float, alpha: float, trial: int, seed: int, lam: float,
              config: EPConfig, solver: str = "finite-t", k: Optional[int] = None,
              timing: bool = True) -> PhasePoint:
    """One reconstruction; any numerical failure is recorded as non-converged."""
    M = max(1, min(N, int(round(alpha * N))))
    t0 = time.perf_counter()
    try:
        problem = make_problem(N, M, rho, lam, k=k, seed=seed)
        res = _solver(solver)(problem, PriorParams(rho, lam), config)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        log.warning("trial rho=%g alpha=%g seed=%d failed: %s", rho, alpha, seed, exc)
        nan = float("nan")
        return PhasePoint(rho, alpha, N, trial, seed, False, 0, nan, nan, nan, nan,
                          (time.perf_counter() - t0) * 1e3 if timing else 0.0)
    wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    w = problem.truth
    try:
        r = pearson_r(w.values, res.mean)
    except ParameterError:
        r = float("nan")
    parts = mse_decomposition(w, res.mean)
    return PhasePoint(rho, alpha, N, trial, seed, res.converged, res.sweeps_used, r,
                      mse(w.values, res.mean), parts.head, parts.tail, wall, res.rho_learned)


def _run_task(task):
    return run_trial(*task)


def phase_sweep(spec: PhaseGridSpec, lam: float = 1.0, config: Optional[EPConfig] = None,
                jobs: int = 1, timing: bool = True) -> list[PhasePoint]:
    """All (rho, alpha, trial) reconstructions, sorted by (rho, alpha, trial).

    Trial seeds depend only on (spec.seed, cell index, trial index), so the
    output does not depend on ``jobs``.
    """
    config = config or EPConfig()
    tasks = []
    for i, rho in enumerate(spec.rho_grid):
        if n_nonzero(rho, spec.N) < 1:
            raise ParameterError(f"rho={rho} gives K=0 at N={spec.N}")
        for j, alpha in enumerate(spec.alpha_grid):
            cell = i * len(spec.alpha_grid) + j
            for t in range(spec.trials_per_point):
                tasks.append((spec.N, rho, alpha, t, derive_seed(spec.seed, cell, t), lam,
                              config, spec.solver, spec.k, timing))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [_run_task(t) for t in tasks]
