import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from koopcert.exceptions import UsageError
from koopcert.lifting import Dictionary, PolynomialLift, build_design, default_degree, monomial_exponents
from koopcert.systems import Dataset

CROSS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def brute_force_terms(n_x, degree):
    out = [e for d in range(1, degree + 1)
           for e in itertools.product(range(d + 1), repeat=n_x) if sum(e) == d]
    return out


def test_degree2_point_value():
    assert np.array_equal(Dictionary(2, 2).lift([1.0, 0.0]), [1, 0, 1, 0, 0])


def test_graded_lex_order_2d():
    assert [tuple(t) for t in Dictionary(2, 2).terms] == [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@pytest.mark.parametrize("n_x,degree", [(1, 4), (2, 3), (3, 2), (3, 3), (4, 2)])
def test_term_count_matches_enumeration(n_x, degree):
    d = Dictionary(n_x, degree)
    assert d.d_psi == len(brute_force_terms(n_x, degree))
    assert sorted(map(tuple, d.terms)) == sorted(brute_force_terms(n_x, degree))
    degs = d.terms.sum(axis=1)
    assert np.all(np.diff(degs) >= 0)


def test_default_sizes():
    assert Dictionary(2, default_degree(2)).d_psi == 9
    assert Dictionary(3, default_degree(3)).d_psi == 9


def test_zero_state_lifts_to_zero():
    for n_x, deg in [(2, 3), (3, 2)]:
        assert np.all(Dictionary(n_x, deg).lift(np.zeros(n_x)) == 0)


def test_dimension_mismatch():
    with pytest.raises(UsageError):
        Dictionary(2, 2).lift([1.0, 2.0, 3.0])
    with pytest.raises(UsageError):
        monomial_exponents(2, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(-2, 2))
def test_homogeneity_per_term(x, c):
    d = Dictionary(3, 3)
    x = np.array(x)
    lhs = d.lift(c * x)
    rhs = d.lift(x) * c ** d.terms.sum(axis=1)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_entry_is_product_of_powers():
    rng = np.random.default_rng(3)
    d = Dictionary(3, 3)
    x = rng.normal(size=3)
    for j, e in enumerate(d.terms):
        assert np.isclose(d.lift(x)[j], np.prod(x ** e))


def test_build_design_shapes_and_contract():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 2))
    ds = Dataset(X, rng.normal(size=(50, 1)), rng.normal(size=(50, 2)))
    d = Dictionary(2, 3)
    des = build_design(ds, d)
    assert des.Phi.shape == (50, 10)
    assert np.array_equal(des.Phi[:, :9], des.Psi)
    assert np.array_equal(des.Phi[:, 9:], ds.U)
    for j, e in enumerate(d.terms):
        assert np.allclose(des.Phi[:, j], np.prod(X ** e, axis=1))
    assert np.allclose(des.Y, d.lift(ds.X_next))


def test_build_design_lorenz_origin_and_cross():
    z = Dataset(np.zeros((1, 3)), np.zeros((1, 1)), np.zeros((1, 3)))
    des = build_design(z, Dictionary(3, 2))
    assert np.all(des.Phi == 0) and np.all(des.Y == 0)
    cross = Dataset(CROSS, np.zeros((4, 1)), CROSS)
    des = build_design(cross, Dictionary(2, 2))
    assert np.all(des.Psi[:, 3] == 0)


def test_build_design_errors():
    with pytest.raises(UsageError):
        build_design(Dataset.empty(2), Dictionary(2, 2))
    bad = Dataset(np.array([[np.nan, 0.0]]), np.zeros((1, 1)), np.zeros((1, 2)))
    with pytest.raises(UsageError):
        build_design(bad, Dictionary(2, 2))


def test_polynomial_lift_estimator():
    X = np.random.default_rng(1).normal(size=(20, 2))
    t = PolynomialLift().fit(X)
    assert t.transform(X).shape == (20, 9)
    assert list(t.get_feature_names_out())[:5] == ["x1", "x2", "x1^2", "x1 x2", "x2^2"]
    assert clone(t).get_params() == {"degree": None}
    assert PolynomialLift(degree=2).fit_transform(X).shape == (20, 5)
