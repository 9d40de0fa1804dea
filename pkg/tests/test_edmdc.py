import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from koopcert.edmdc import (EDMDc, check_fisher, check_identity, check_ls_risk, check_population_gap,
                            check_ridge_bound, fit_edmdc, one_step_errors, schur_input_residual)
from koopcert.exceptions import DegenerateDesignError, UsageError
from koopcert.harness import orthonormal_design
from koopcert.lifting import Dictionary, LiftedDesign, build_design
from koopcert.standardize import standardize
from koopcert.systems import Dataset


def linear_dataset(seed, n=200, A=None, B=None):
    rng = np.random.default_rng(seed)
    A = np.array([[0.9, 0.2], [-0.1, 0.95]]) if A is None else A
    B = np.array([[0.0], [0.5]]) if B is None else B
    X = rng.uniform(-1, 1, (n, 2))
    U = rng.uniform(-1, 1, (n, 1))
    return Dataset(X, U, X @ A.T + U @ B.T), A, B


def test_copy_task_gives_identity():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    ds = Dataset(X, np.zeros((50, 1)), X)
    # the zero input column is inactive, so Kbar covers the lifted block only
    m = fit_edmdc(build_design(ds, Dictionary(2, 2)))
    assert np.allclose(m.Kbar, np.eye(5), atol=1e-8)


def test_ridge_limit_shrinks_to_zero():
    ds, _, _ = linear_dataset(1)
    m = fit_edmdc(build_design(ds, Dictionary(2, 2)), lam=1e14)
    assert np.max(np.abs(m.Kbar)) < 1e-8
    with pytest.raises(UsageError):
        fit_edmdc(build_design(ds, Dictionary(2, 2)), lam=-1.0)


def test_plant_and_recover():
    rng = np.random.default_rng(2)
    Z = standardize(rng.normal(size=(200, 10))).Zbar
    K = rng.normal(size=(10, 3))
    Y = Z @ K
    design = LiftedDesign(Psi=Z[:, :9], U=Z[:, 9:], Y=Y, dictionary=Dictionary(3, 2))
    m = fit_edmdc(design)
    G, c = m.raw_coefficients()
    assert np.max(np.abs(G - K)) <= 1e-8
    assert np.max(np.abs(c)) <= 1e-8


def test_planted_linear_one_step_errors():
    ds, A, B = linear_dataset(3)
    m = fit_edmdc(build_design(ds, Dictionary(2, 1)))
    err = one_step_errors(m, ds)
    assert err["lift_rmse"] <= 1e-8 and err["state_rmse"] <= 1e-8
    A_hat, B_hat, c = m.affine_map()
    assert np.allclose(A_hat, A, atol=1e-8) and np.allclose(B_hat, B, atol=1e-8)
    assert np.allclose(c, 0, atol=1e-8)


def test_one_step_lift_rmse_matches_explicit_residual():
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, (80, 2))
    U = rng.uniform(-1, 1, (80, 1))
    ds = Dataset(X, U, np.sin(2 * X) + 0.3 * U)
    d = Dictionary(2, 3)
    design = build_design(ds, d)
    m = fit_edmdc(design)
    # explicit least squares with an intercept in raw coordinates
    M = np.column_stack([np.ones(80), design.Phi])
    R = design.Y - M @ np.linalg.lstsq(M, design.Y, rcond=None)[0]
    expected = np.linalg.norm(R) / math.sqrt(R.size)
    assert np.isclose(one_step_errors(m, ds)["lift_rmse"], expected, rtol=1e-8)


def test_degenerate_design_flagged():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, 30)
    X = np.column_stack([x, 2 * x])
    ds = Dataset(X, rng.uniform(-1, 1, (30, 1)), X)
    m = fit_edmdc(build_design(ds, Dictionary(2, 1)))
    assert m.degenerate and np.all(np.isfinite(m.Kbar))


def test_estimator_interface():
    ds, A, B = linear_dataset(6)
    XU = np.hstack([ds.X, ds.U])
    est = EDMDc(degree=1).fit(XU, ds.X_next)
    assert np.allclose(est.predict(XU), ds.X_next, atol=1e-8)
    assert est.score(XU, ds.X_next) > 1 - 1e-10
    assert clone(est).get_params()["degree"] == 1
    states, failed = est.rollout(ds.X[0], np.zeros((5, 1)))
    assert not failed and np.allclose(states[1], A @ ds.X[0], atol=1e-8)
    with pytest.raises(UsageError):
        EDMDc(n_inputs=3).fit(XU, ds.X_next)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(12, 100), st.integers(2, 8))
def test_identity_holds_for_random_designs(seed, n, p):
    Phi = np.random.default_rng(seed).normal(size=(n, p))
    c = check_identity(Phi)
    assert c.satisfied


def test_identity_rank_deficient():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(40, 2))
    Phi = np.column_stack([a, a[:, 0] + a[:, 1]])
    c = check_identity(Phi)
    assert c.satisfied and c.lhs <= 1e-10 and c.rhs <= 1e-6
    with pytest.raises(UsageError):
        check_identity(np.ones((1, 3)))


def test_fisher_bound_is_tight():
    Z = standardize(np.random.default_rng(8).normal(size=(60, 4))).Zbar
    n = 60
    c_reg = np.linalg.eigvalsh(Z.T @ Z / n)[0]
    c = check_fisher(Z, 0.25 * np.eye(3))
    assert c.satisfied and np.isclose(c.lhs, n * c_reg / 0.25, rtol=1e-9)
    # Kronecker eigenvalues multiply, so lambda_min is lambda_min(Sigma^-1) * N C_reg and the bound is tight
    c = check_fisher(Z, np.diag([1.0, 4.0]))
    assert c.satisfied and np.isclose(c.lhs, n * c_reg / 4, rtol=1e-9)
    assert abs(c.lhs - c.rhs) <= 1e-9 * c.rhs
    with pytest.raises(UsageError):
        check_fisher(Z, np.diag([1.0, -1.0]))


def test_fisher_random_spd_sweep():
    from koopcert.harness import random_spd

    rng = np.random.default_rng(9)
    for _ in range(100):
        Z = rng.normal(size=(30, 3))
        assert check_fisher(Z, random_spd(rng, 3)).satisfied


def test_ridge_bound_examples():
    Z = orthonormal_design(40, 3, seed=0)
    K = np.array([[1.0], [-2.0], [0.5]])
    c = check_ridge_bound(Z, np.zeros((40, 1)), 0.0, K)
    assert c.lhs <= 1e-10 and c.satisfied
    lam = 5.0
    c = check_ridge_bound(Z, np.zeros((40, 1)), lam, K)
    # diagonal Gram N I: Khat = N/(N+lam) K, error lam |K| / (N + lam) which equals the bound
    expected = lam * np.linalg.norm(K) / (40 + lam)
    assert np.isclose(c.lhs, expected, rtol=1e-9) and np.isclose(c.rhs, expected, rtol=1e-9)
    assert c.satisfied
    rng = np.random.default_rng(10)
    for _ in range(100):
        Zr = rng.normal(size=(30, 4))
        assert check_ridge_bound(Zr, rng.normal(size=(30, 2)), rng.uniform(0, 3), rng.normal(size=(4, 2)),
                                 residual=rng.normal(size=(30, 2))).satisfied


def test_ls_risk_orthonormal_design_is_tight():
    Z = orthonormal_design(50, 4, seed=1)
    c = check_ls_risk(Z, sigma=0.5, q=2, trials=5000, seed=0)
    bound = 0.25 * 2 * 4 / 50
    assert np.isclose(c.rhs, bound, rtol=1e-10)
    assert np.isclose(c.extra["exact_risk"], bound, rtol=1e-10)
    assert abs(c.lhs - bound) <= 5 * c.extra["stderr"]
    assert c.satisfied


def test_ls_risk_zero_noise_and_ill_conditioned():
    Z = orthonormal_design(30, 3, seed=2)
    assert check_ls_risk(Z, sigma=0.0, q=1, trials=1000).lhs == 0.0
    rng = np.random.default_rng(11)
    a = rng.normal(size=200)
    Zi = standardize(np.column_stack([a, a + 0.063 * rng.normal(size=200), rng.normal(size=200)])).Zbar
    cr = np.linalg.eigvalsh(Zi.T @ Zi / 200)[0]
    assert cr < 1e-2
    assert check_ls_risk(Zi, sigma=1.0, q=1, trials=2000, seed=3).satisfied
    with pytest.raises(UsageError):
        check_ls_risk(Z, 1.0, 1, trials=10)


def test_population_gap_curve():
    p = 3
    big = int(math.ceil(200 * p * math.log(p)))
    small, large = check_population_gap(p, [p, big], trials=200, seed=0)
    assert large.satisfied and large.lhs >= 0.95
    assert small.lhs <= 0.5


def test_population_gap_repeated_point():
    # a single repeated regressor has rank one, so C_reg is zero every time
    xi = np.tile([[1.0, 0.0, 0.0]], (50, 1))
    assert np.linalg.eigvalsh(xi.T @ xi / 50)[0] < 1 / 6


def test_schur_independent_input():
    rng = np.random.default_rng(12)
    n = 20000
    X = rng.uniform(-1, 1, (n, 2))
    ds = Dataset(X, rng.normal(size=(n, 1)), X)
    s = schur_input_residual(build_design(ds, Dictionary(2, 2)))
    assert abs(s.beta_hat - 1) < 0.02
    assert s.alpha_hat > 0 and not s.pinv_used
    assert s.C_reg <= min(s.alpha_hat, s.beta_hat) + 1e-12


def test_schur_needs_both_blocks():
    X = np.random.default_rng(13).normal(size=(20, 2))
    ds = Dataset(X, np.zeros((20, 1)), X)
    with pytest.raises(DegenerateDesignError):
        schur_input_residual(build_design(ds, Dictionary(2, 2)))
