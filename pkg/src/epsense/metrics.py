"""Reconstruction quality measures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from epsense.errors import ParameterError
from epsense.problem import SparseSignal


@dataclass
class ReconReport:
    pearson_r: float
    mse: float
    mse_head: float
    mse_tail: float
    converged: bool
    sweeps: int


class MSEParts(NamedTuple):
    head: float
    tail: float
    # name of the part that is undefined ("head" for an empty support,
    # "tail" for a full one), reported as 0
    undefined: str | None = None


def pearson_r(w, w_hat) -> float:
    w = np.asarray(w, dtype=float)
    w_hat = np.asarray(w_hat, dtype=float)
    if w.shape != w_hat.shape or w.ndim != 1:
        raise ParameterError("pearson_r needs two vectors of equal length")
    if w.size < 2:
        raise ParameterError("pearson_r needs at least two entries")
    dw = w - w.mean()
    dh = w_hat - w_hat.mean()
    nw, nh = np.linalg.norm(dw), np.linalg.norm(dh)
    if nw == 0 or nh == 0:
        raise ParameterError("correlation is undefined for a constant vector")
    return float(np.clip(dw @ dh / (nw * nh), -1.0, 1.0))


def mse(w, w_hat) -> float:
    w = np.asarray(w, dtype=float)
    w_hat = np.asarray(w_hat, dtype=float)
    if w.shape != w_hat.shape:
        raise ParameterError("mse needs vectors of equal length")
    return float(np.mean((w - w_hat) ** 2))


def mse_decomposition(w: SparseSignal, w_hat) -> MSEParts:
    """MSE over the true support (head) and over the true zeros (tail).

    (K/N) head + ((N-K)/N) tail equals the total MSE.
    """
    w_hat = np.asarray(w_hat, dtype=float)
    if w_hat.shape != w.values.shape:
        raise ParameterError("w_hat has the wrong length")
    on = np.zeros(w.N, dtype=bool)
    on[w.support] = True
    err2 = (w.values - w_hat) ** 2
    if not on.any():
        return MSEParts(0.0, float(err2.mean()), "head")
    if on.all():
        return MSEParts(float(err2.mean()), 0.0, "tail")
    return MSEParts(float(err2[on].mean()), float(err2[~on].mean()))


def convergence_rate(results: Sequence) -> float:
    if len(results) == 0:
        raise ParameterError("convergence_rate needs at least one result")
    return sum(bool(r.converged) for r in results) / len(results)


def standard_error(values) -> float:
    """sigma / sqrt(n) with the sample standard deviation."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float("nan")
    return float(values.std(ddof=1) / np.sqrt(values.size))


def report(w: SparseSignal, result) -> ReconReport:
    parts = mse_decomposition(w, result.mean)
    try:
        r = pearson_r(w.values, result.mean)
    except ParameterError:
        r = float("nan")
    return ReconReport(r, mse(w.values, result.mean), parts.head, parts.tail,
                       bool(result.converged), int(result.sweeps_used))
