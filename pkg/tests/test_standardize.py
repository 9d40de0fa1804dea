import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from koopcert.exceptions import DegenerateDesignError, UsageError
from koopcert.lifting import Dictionary
from koopcert.standardize import ActiveStandardizer, active_rank, standardize

CROSS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])

designs = arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(1, 5)),
                 elements=st.floats(-100, 100, allow_nan=False, width=64))


def test_hand_column_population_convention():
    z = standardize(np.array([[1.0], [2.0], [3.0]]))
    assert np.allclose(z.Zbar[:, 0], [-math.sqrt(1.5), 0.0, math.sqrt(1.5)])
    assert np.isclose(z.scale[0], math.sqrt(2 / 3))


def test_constant_column_inactive():
    rng = np.random.default_rng(0)
    M = np.column_stack([rng.normal(size=10), np.full(10, 4.2), rng.normal(size=10)])
    z = standardize(M)
    assert list(z.active_mask) == [True, False, True]
    assert z.active_dim == 2 and z.Zbar.shape == (10, 2)


def test_invariants_on_random_design():
    rng = np.random.default_rng(1)
    z = standardize(rng.normal(size=(40, 6)) * [1, 10, 0.1, 5, 2, 3] + 7)
    assert np.all(np.abs(z.Zbar.mean(axis=0)) <= 1e-10)
    assert np.all(np.abs(z.Zbar.std(axis=0) - 1) <= 1e-8)
    assert z.active_rank <= min(40, z.active_dim)


def test_errors():
    with pytest.raises(UsageError):
        standardize(np.ones((1, 3)))
    with pytest.raises(UsageError):
        standardize(np.array([[1.0, np.inf], [2.0, 3.0]]))
    with pytest.raises(DegenerateDesignError) as info:
        standardize(np.ones((5, 3)), layer="lift")
    assert info.value.layer == "lift"


def test_cross_lifted_matrix():
    Psi = Dictionary(2, 2).lift(CROSS)
    z = standardize(Psi)
    assert list(z.active_mask) == [True, True, True, False, True]
    ev = np.linalg.eigvalsh(z.Zbar.T @ z.Zbar / 4)
    assert ev[0] <= 1e-12
    # x1^2 and x2^2 are exact mirror images after centering
    assert np.allclose(z.Zbar[:, 2], -z.Zbar[:, 3])
    assert z.active_rank == 3


def test_active_rank_examples():
    Q, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(20, 4)))
    assert active_rank(Q) == 4
    M = np.random.default_rng(3).normal(size=(20, 3))
    M = np.column_stack([M, M[:, 0]])
    z = standardize(M)
    assert z.active_dim == 4 and z.active_rank == 3


def test_rank_can_fall_below_active_dim():
    rng = np.random.default_rng(4)
    a = rng.normal(size=30)
    M = np.column_stack([a, 2 * a + 1, rng.normal(size=30)])
    z = standardize(M)
    assert z.active_dim == 3 and z.active_rank < z.active_dim


@settings(max_examples=40, deadline=None)
@given(designs)
def test_idempotence(M):
    try:
        z = standardize(M)
    except DegenerateDesignError:
        return
    again = standardize(z.Zbar)
    assert again.active_dim == z.active_dim
    assert np.allclose(again.Zbar, z.Zbar, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(designs, st.randoms(use_true_random=False))
def test_mask_stable_under_row_permutation(M, rnd):
    perm = list(range(M.shape[0]))
    rnd.shuffle(perm)
    try:
        a = standardize(M).active_mask
    except DegenerateDesignError:
        with pytest.raises(DegenerateDesignError):
            standardize(M[perm])
        return
    assert np.array_equal(a, standardize(M[perm]).active_mask)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_scaling_equivariance(seed, c):
    M = np.random.default_rng(seed).normal(size=(25, 4))
    z0 = standardize(M)
    M2 = M.copy()
    M2[:, 1] *= c
    assert np.allclose(standardize(M2).Zbar, z0.Zbar, atol=1e-10)


def test_transformer_round_trip():
    rng = np.random.default_rng(5)
    M = np.column_stack([rng.normal(size=15), np.full(15, 2.0), rng.normal(size=15) * 3])
    t = ActiveStandardizer().fit(M)
    Z = t.transform(M)
    assert Z.shape == (15, 2) and t.active_dim_ == 2
    assert np.allclose(t.inverse_transform(Z), M)
    assert t.get_params()["var_threshold"] == 1e-10
