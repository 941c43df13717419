import numpy as np
import pytest

import epsense.ep_zero as ez
from epsense.ep import EPConfig, posterior_params, run_ep
from epsense.ep_zero import row_echelon, run_ep_zero_t, zero_t_posterior
from epsense.errors import InfeasibleSystemError, ParameterError
from epsense.prior import PriorParams
from epsense.problem import SensingProblem, make_problem
from oracles import sparsest_solution


def echelon_matrix(ech):
    """[I | G] with columns returned to the original variable order."""
    A = np.hstack([np.eye(ech.M), ech.G])
    out = np.empty_like(A)
    out[:, ech.col_perm] = A
    return out


def test_identity_form_is_fixed_point():
    rng = np.random.default_rng(0)
    G0, y = rng.normal(size=(3, 4)), rng.normal(size=3)
    ech = row_echelon(np.hstack([np.eye(3), G0]), y)
    np.testing.assert_allclose(ech.G, G0, rtol=0, atol=1e-15)
    np.testing.assert_allclose(ech.y_prime, y, rtol=0, atol=1e-15)
    assert list(ech.col_perm) == list(range(7))


def test_row_scaling_invariance():
    rng = np.random.default_rng(1)
    G0, y0 = rng.normal(size=(3, 4)), rng.normal(size=3)
    ech = row_echelon(2 * np.hstack([np.eye(3), G0]), 2 * y0)
    np.testing.assert_allclose(ech.G, G0, atol=1e-14)
    np.testing.assert_allclose(ech.y_prime, y0, atol=1e-14)


def test_solution_set_equivalence():
    rng = np.random.default_rng(2)
    F, y = rng.normal(size=(3, 5)), rng.normal(size=3)
    ech = row_echelon(F, y)
    for _ in range(100):
        wi = rng.normal(scale=10, size=2)
        w_perm = np.concatenate([ech.y_prime - ech.G @ wi, wi])
        w = ech.to_original(w_perm)
        assert np.max(np.abs(F @ w - y)) < 1e-9


def test_affine_spaces_coincide():
    rng = np.random.default_rng(3)
    F, y = rng.normal(size=(6, 11)), rng.normal(size=6)
    ech = row_echelon(F, y)
    A = echelon_matrix(ech)

    def project(B, c, v):
        return v - np.linalg.pinv(B) @ (B @ v - c)

    for _ in range(20):
        v = rng.normal(size=11) * 5
        np.testing.assert_allclose(project(F, y, v), project(A, ech.y_prime, v), atol=1e-9)


def test_column_pivoting_handles_singular_leading_block():
    F = np.array([[0.0, 1.0, 2.0], [0.0, 3.0, 1.0]])
    y = np.array([1.0, 2.0])
    ech = row_echelon(F, y)
    assert 0 not in ech.col_perm[:2]
    w = ech.to_original(np.concatenate([ech.y_prime - ech.G @ [0.7], [0.7]]))
    np.testing.assert_allclose(F @ w, y, atol=1e-12)


def test_consistent_dependent_rows_dropped():
    rng = np.random.default_rng(4)
    F = rng.normal(size=(3, 6))
    F = np.vstack([F, F[0] + F[1]])
    w = rng.normal(size=6)
    ech = row_echelon(F, F @ w)
    assert ech.M == 3 and ech.dropped_rows == 1


def test_inconsistent_rows_rejected():
    F = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]])
    with pytest.raises(InfeasibleSystemError):
        row_echelon(F, np.array([1.0, 3.0]))


def test_decoupled_system():
    ech = ez.EchelonSystem(np.zeros((2, 3)), np.array([1.0, -2.0]), np.arange(5))
    a = np.array([0.3, 0.1, 0.5, -1.0, 2.0])
    d = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    st = zero_t_posterior(ech, a, d)
    np.testing.assert_array_equal(st.wbar_d, ech.y_prime)
    np.testing.assert_array_equal(st.sigma_d_diag, 0.0)
    np.testing.assert_allclose(st.sigma_i, np.diag(d[2:]), rtol=1e-15)
    np.testing.assert_allclose(st.wbar_i, a[2:], rtol=1e-15)


def test_scalar_case():
    g, y = 0.8, 1.5
    a, d = np.array([0.2, -0.4]), np.array([0.5, 2.0])
    ech = row_echelon(np.array([[1.0, g]]), np.array([y]))
    st = zero_t_posterior(ech, a, d)
    # w1 = y - g w2 and w2 ~ N(a2, d2) N(y - g w2; a1, d1)
    s = 1.0 / (1.0 / d[1] + g * g / d[0])
    m = s * (a[1] / d[1] + g * (y - a[0]) / d[0])
    assert st.sigma_i[0, 0] == pytest.approx(s, rel=1e-14)
    assert st.wbar_i[0] == pytest.approx(m, rel=1e-14)
    assert st.wbar_d[0] == pytest.approx(y - g * m, rel=1e-14)
    assert st.sigma_d_diag[0] == pytest.approx(g * g * s, rel=1e-14)


def test_beta_limit_of_finite_posterior():
    rng = np.random.default_rng(5)
    F, y = rng.normal(size=(4, 8)), rng.normal(size=4)
    a, d = rng.normal(size=8), 10 ** rng.uniform(-1, 1, 8)
    sigma, wbar = posterior_params(F, y, a, d, 1e9)
    ech = row_echelon(F, y)
    st = zero_t_posterior(ech, ech.to_echelon(a), ech.to_echelon(d))
    mean = ech.to_original(np.concatenate([st.wbar_d, st.wbar_i]))
    var = ech.to_original(np.concatenate([st.sigma_d_diag, np.diag(st.sigma_i)]))
    assert np.max(np.abs(mean - wbar)) < 1e-4 * np.max(np.abs(wbar))
    np.testing.assert_allclose(var, np.diag(sigma), rtol=1e-4)


def test_finite_temperature_gap_shrinks_like_inverse_beta():
    rng = np.random.default_rng(8)
    F, y = rng.normal(size=(4, 8)), rng.normal(size=4)
    a, d = rng.normal(size=8), 10 ** rng.uniform(-1, 1, 8)
    ech = row_echelon(F, y)
    st = zero_t_posterior(ech, ech.to_echelon(a), ech.to_echelon(d))
    mean = ech.to_original(np.concatenate([st.wbar_d, st.wbar_i]))
    gaps = []
    for beta in (1e2, 1e3, 1e4, 1e5):
        _, wbar = posterior_params(F, y, a, d, beta)
        gaps.append(np.max(np.abs(wbar - mean)))
    ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
    assert np.all((ratios > 5) & (ratios < 20))


def test_hard_constraint_every_sweep(monkeypatch):
    states = []
    real = ez.zero_t_posterior

    def spy(ech, a, d):
        st = real(ech, a, d)
        states.append((ech, st))
        return st

    monkeypatch.setattr(ez, "zero_t_posterior", spy)
    p = make_problem(40, 20, 0.3, seed=2)
    run_ep_zero_t(p, PriorParams(0.3), EPConfig(max_sweeps=50))
    assert len(states) > 1
    for ech, st in states:
        assert np.max(np.abs(st.wbar_d + ech.G @ st.wbar_i - ech.y_prime)) < 1e-10


def test_only_small_matrix_factorized(monkeypatch):
    shapes = []
    real = ez._factor

    def spy(P):
        shapes.append(P.shape)
        return real(P)

    monkeypatch.setattr(ez, "_factor", spy)
    p = make_problem(60, 25, 0.2, seed=1)
    run_ep_zero_t(p, PriorParams(0.2), EPConfig(max_sweeps=20))
    assert shapes and set(shapes) == {(35, 35)}


def test_square_system():
    rng = np.random.default_rng(6)
    F = rng.normal(size=(6, 6))
    w = np.array([0.0, 1.0, 0.0, 0.0, -2.0, 0.0])
    r = run_ep_zero_t(SensingProblem.from_arrays(F, F @ w, w), PriorParams(2 / 6))
    np.testing.assert_allclose(r.mean, np.linalg.solve(F, F @ w), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_brute_force_sparsest(seed):
    p = make_problem(8, 4, 1 / 8, seed=seed)
    (ref,) = sparsest_solution(p.F, p.y, 1)
    r = run_ep_zero_t(p, PriorParams(1 / 8))
    assert np.mean((r.mean - ref) ** 2) < 1e-6


def test_agrees_with_finite_temperature():
    for seed in range(8):
        p = make_problem(100, 30, 0.1, seed=seed)
        r0 = run_ep_zero_t(p, PriorParams(0.1))
        r1 = run_ep(p, PriorParams(0.1))
        if r0.converged and r1.converged:
            assert np.max(np.abs(r0.mean - r1.mean)) < 1e-4


def test_results_in_original_order():
    F = np.array([[0.0, 1.0, 2.0, 0.5], [0.0, 3.0, 1.0, 0.0]])
    w = np.array([0.0, 1.0, 0.0, 0.0])
    r = run_ep_zero_t(SensingProblem.from_arrays(F, F @ w, w), PriorParams(0.25))
    assert np.max(np.abs(r.mean - w)) < 1e-6


def test_noisy_problem_rejected():
    p = make_problem(20, 10, 0.2, noise_variance=0.01, seed=0)
    with pytest.raises(ParameterError):
        run_ep_zero_t(p, PriorParams(0.2))
