import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epsense.errors import ParameterError
from epsense.metrics import (
    convergence_rate,
    mse,
    mse_decomposition,
    pearson_r,
    report,
    standard_error,
)
from epsense.problem import SparseSignal, gen_sparse_signal

vectors = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=40)


def test_pearson_examples():
    w = np.array([1.0, 2.0, 3.0, -1.0])
    assert pearson_r(w, w) == pytest.approx(1.0)
    assert pearson_r(w, -w) == pytest.approx(-1.0)
    assert pearson_r([1, 2, 3], [1, 2, 4]) == pytest.approx(9 / math.sqrt(84), rel=1e-14)


def test_pearson_constant_vector():
    with pytest.raises(ParameterError):
        pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_pearson_length_checks():
    with pytest.raises(ParameterError):
        pearson_r([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ParameterError):
        pearson_r([1.0], [2.0])


@given(w=vectors, c=st.floats(0.01, 100), b=st.floats(-100, 100), seed=st.integers(0, 1000))
@settings(max_examples=100)
def test_pearson_affine_invariance(w, c, b, seed):
    w = np.array(w)
    h = w + np.random.default_rng(seed).normal(size=w.size)
    if np.ptp(w) < 1e-3:
        return
    r1, r2 = pearson_r(w, h), pearson_r(w, c * h + b)
    assert abs(r1 - r2) < 1e-12
    assert -1.0 <= r1 <= 1.0


def test_pearson_raw_value_in_range():
    rng = np.random.default_rng(0)
    for _ in range(200):
        w = rng.normal(size=10)
        h = w * rng.uniform(0.5, 2) + rng.normal(scale=1e-9, size=10)
        dw, dh = w - w.mean(), h - h.mean()
        raw = dw @ dh / (np.linalg.norm(dw) * np.linalg.norm(dh))
        assert abs(raw) <= 1 + 1e-12


def test_mse_examples():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse(np.zeros(5), np.ones(5)) == 1.0
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=17), rng.normal(size=17)
    assert mse(a, b) == pytest.approx(sum((x - y) ** 2 for x, y in zip(a, b)) / 17, rel=1e-14)
    with pytest.raises(ParameterError):
        mse([1.0], [1.0, 2.0])


def test_decomposition_examples():
    w = gen_sparse_signal(20, 0.25, 1.0, seed=0)
    assert tuple(mse_decomposition(w, w.values))[:2] == (0.0, 0.0)
    h = np.ones(20)
    h[w.support] = w.values[w.support]
    parts = mse_decomposition(w, h)
    assert (parts.head, parts.tail) == (0.0, 1.0)


@given(N=st.integers(2, 200), rho=st.floats(0.05, 0.95), seed=st.integers(0, 10_000))
@settings(max_examples=100)
def test_decomposition_identity(N, rho, seed):
    K = int(np.floor(rho * N + 0.5))
    if not 1 <= K < N:
        return
    w = gen_sparse_signal(N, rho, 1.0, seed=seed)
    h = w.values + np.random.default_rng(seed).normal(size=N)
    parts = mse_decomposition(w, h)
    total = (K / N) * parts.head + ((N - K) / N) * parts.tail
    assert abs(total - mse(w.values, h)) < 1e-12
    assert parts.undefined is None


def test_decomposition_degenerate_supports():
    full = gen_sparse_signal(5, 1.0, 1.0, seed=0)
    parts = mse_decomposition(full, np.zeros(5))
    assert parts.tail == 0.0 and parts.undefined == "tail"
    empty = SparseSignal(np.zeros(4), np.array([], dtype=int), 0.0, 1.0)
    parts = mse_decomposition(empty, np.ones(4))
    assert parts.head == 0.0 and parts.tail == 1.0 and parts.undefined == "head"


def test_convergence_rate():
    mk = lambda flags: [SimpleNamespace(converged=f) for f in flags]
    assert convergence_rate(mk([True] * 4)) == 1.0
    assert convergence_rate(mk([False] * 3)) == 0.0
    assert convergence_rate(mk([True] * 7 + [False] * 3)) == pytest.approx(0.7)
    with pytest.raises(ParameterError):
        convergence_rate([])


def test_standard_error():
    assert standard_error([1.0, 3.0]) == pytest.approx(math.sqrt(2) / math.sqrt(2))
    assert math.isnan(standard_error([1.0]))


def test_report():
    w = gen_sparse_signal(10, 0.3, 1.0, seed=2)
    res = SimpleNamespace(mean=w.values.copy(), converged=True, sweeps_used=7)
    rep = report(w, res)
    assert rep.pearson_r == pytest.approx(1.0) and rep.mse == 0.0 and rep.sweeps == 7
