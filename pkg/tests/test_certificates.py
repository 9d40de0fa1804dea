import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopcert.certificates import (LAYER_ORDER, CertificateConfig, bottleneck_layer, direction_counts,
                                   directional_coverage, fit_whitener, frostman_noncluster, full_report,
                                   greedy_direction_set, isotropy, local_density, radial_coverage,
                                   whiten_states)
from koopcert.exceptions import DegenerateDesignError, UsageError
from koopcert.lifting import Dictionary
from koopcert.standardize import standardize
from koopcert.systems import Dataset

CROSS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def unit(deg):
    a = math.radians(deg)
    return np.array([math.cos(a), math.sin(a)])


def random_dataset(seed, n=60, n_x=2):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, n_x))
    return Dataset(X, rng.uniform(-1, 1, size=(n, 1)), X + 0.05 * rng.normal(size=(n, n_x)))


def test_whitening_monte_carlo():
    X = np.random.default_rng(0).standard_normal((10000, 3))
    Xw, ridged = whiten_states(X)
    assert not ridged
    assert np.allclose(np.cov(Xw.T, bias=True), np.eye(3), atol=1e-8)
    assert np.allclose(Xw.mean(axis=0), 0, atol=1e-10)
    assert np.allclose(np.cov(X.T, bias=True), np.eye(3), atol=0.05)


def test_whitening_line_is_ridged():
    t = np.linspace(-1, 1, 30)
    _, ridged = whiten_states(np.column_stack([t, 2 * t]))
    assert ridged


def test_whitening_affine_invariance():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((500, 2))
    A = np.array([[3.0, 1.0], [0.5, 2.0]])
    Y = X @ A.T + [4.0, -1.0]
    Wx, _ = whiten_states(X)
    Wy, _ = whiten_states(Y)
    # both whitened samples have identity covariance, so they differ by an orthogonal map
    Q, *_ = np.linalg.lstsq(Wx, Wy, rcond=None)
    assert np.allclose(Q.T @ Q, np.eye(2), atol=1e-8)
    assert np.allclose(Wx @ Q, Wy, atol=1e-8)


def test_direction_examples():
    dirs = np.array([unit(0), unit(90), unit(180), unit(270)])
    assert direction_counts(dirs, [math.radians(80)]) == [4]
    assert list(greedy_direction_set(dirs, math.radians(100))) == [0, 2]
    same = np.tile(unit(30), (7, 1))
    assert direction_counts(same, [math.pi / 2, math.pi / 4, math.pi / 8]) == [1, 1, 1]


def test_directional_coverage_values():
    cfg = CertificateConfig(resolutions=(math.radians(80),), target_counts=(4,))
    X = np.zeros((4, 2))
    ds = Dataset(X, np.zeros((4, 1)), np.array([unit(0), unit(90), unit(180), unit(270)]))
    # this cloud has zero mean and identity covariance, so whitening is the identity map
    ident = fit_whitener(np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]]) * math.sqrt(2))
    assert directional_coverage(ds, cfg, ident) == 1.0
    still = Dataset(X, np.zeros((4, 1)), X)
    assert directional_coverage(still, cfg) == 0.0


def test_frostman_single_point_closed_form():
    cfg = CertificateConfig(rho_max=0.3)
    # one point: ball fraction 1 at every scale, rho(r) = 1 / (r^2 + eps)
    expected = min(0.3 * (r ** 2 + cfg.eps) for r in cfg.scales)
    assert np.isclose(frostman_noncluster(np.zeros((1, 2)), cfg), min(expected, 1.0))


def test_frostman_identical_points_min_at_smallest_scale():
    cfg = CertificateConfig(rho_max=0.3)
    rho = local_density(np.zeros((10, 2)), cfg.scales, 2.0, cfg.eps)
    ratios = 0.3 / rho
    assert np.argmin(ratios) == 0


def test_frostman_grid_beats_cluster():
    cfg = CertificateConfig()
    g = np.linspace(-1, 1, 10)
    grid = np.array([[a, b] for a in g for b in g])
    cluster = np.random.default_rng(0).normal(scale=1e-3, size=(100, 2))
    # whitening removes scale, so compare in raw coordinates against the same scales
    assert frostman_noncluster(grid, cfg) > frostman_noncluster(cluster, cfg)


def test_radial_coverage_examples():
    cfg = CertificateConfig()
    ring = np.array([unit(a) for a in range(0, 360, 10)])
    assert radial_coverage(ring, cfg) == pytest.approx(0.1)
    radii = (np.arange(10) + 0.5) / 10
    pts = radii[:, None] * unit(45)
    pts = np.vstack([pts, [[0.95 * math.cos(0.7), 0.95 * math.sin(0.7)]]])
    assert radial_coverage(pts, cfg) == 1.0
    rng = np.random.default_rng(2)
    r = rng.uniform(0, 3, 1000)
    ang = rng.uniform(0, 2 * np.pi, 1000)
    assert radial_coverage(np.column_stack([r * np.cos(ang), r * np.sin(ang)]), cfg) == 1.0


def test_isotropy_examples():
    a = np.random.default_rng(0).normal(size=50)
    Z = standardize(np.column_stack([a, 3 * a]))
    assert isotropy(Z).lambda_min <= 1e-12
    big = standardize(np.random.default_rng(1).standard_normal((20000, 10)))
    assert 0.9 <= isotropy(big).lambda_min <= 1.1
    Psi = Dictionary(2, 2).lift(CROSS)
    Pc = Psi - Psi.mean(axis=0)
    assert np.linalg.eigvalsh(Pc.T @ Pc / 4)[0] <= 1e-12
    with pytest.raises(DegenerateDesignError):
        isotropy(np.zeros((5, 0)))


def test_report_on_cross_set_names_lifted_bottleneck():
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    ds = Dataset(CROSS, np.zeros((4, 1)), 0.9 * CROSS @ rot.T)
    rep = full_report(ds, Dictionary(2, 2))
    assert rep.C_lift <= 1e-12
    assert rep.lift_active_dim == 4
    assert rep.state_active_dim == 2 and rep.C_state > 0.5
    assert rep.bottleneck == "lift"


def test_report_layer_separation_for_zero_variance_feature():
    rng = np.random.default_rng(3)
    x1 = rng.uniform(-1, 1, 40)
    X = np.column_stack([x1, np.zeros(40) + 1e-3 * rng.normal(size=40)])
    X[:, 1] = 0.0
    X[:, 1] += np.linspace(-1, 1, 40)
    ds = Dataset(X, rng.uniform(-1, 1, (40, 1)), X * 0.99)
    rep = full_report(ds, Dictionary(2, 2))
    assert rep.state_active_dim == 2
    assert rep.lift_active_dim == 5


def test_report_errors():
    with pytest.raises(UsageError):
        full_report(Dataset(np.zeros((1, 2)), np.zeros((1, 1)), np.ones((1, 2))), Dictionary(2, 2))
    still = Dataset(np.ones((5, 2)), np.zeros((5, 1)), np.ones((5, 2)))
    with pytest.raises(DegenerateDesignError) as info:
        full_report(still, Dictionary(2, 2))
    assert info.value.layer == "state"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 80))
def test_identity_min_and_finiteness(seed, n):
    rep = full_report(random_dataset(seed, n), Dictionary(2, 3))
    assert abs(rep.sigma_min_bar_phi ** 2 - n * rep.C_reg) <= 1e-10 * max(n * rep.C_reg, 1e-300) + 1e-13
    terms = rep.normalized_terms()
    assert rep.C_GPE == min(terms.values())
    assert rep.C_GPE <= rep.regression_iso and rep.C_GPE <= rep.state_iso
    assert all(math.isfinite(v) for v in rep.as_row().values())
    for k in ("C_dir", "C_fr", "C_rad"):
        assert 0.0 <= getattr(rep, k) <= 1.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_invariance_except_directions(seed):
    ds = random_dataset(seed, 40)
    perm = np.random.default_rng(seed + 1).permutation(40)
    shuf = Dataset(ds.X[perm], ds.U[perm], ds.X_next[perm])
    a, b = full_report(ds, Dictionary(2, 3)), full_report(shuf, Dictionary(2, 3))
    for k in ("C_fr", "C_rad", "C_state", "C_lift", "C_reg", "regression_logdet", "sigma_min_bar_phi"):
        assert np.isclose(getattr(a, k), getattr(b, k), rtol=1e-9, atol=1e-12)


def test_screening_exact_zero_column_does_not_lower_isotropy():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(30, 3))
    with_zero = np.column_stack([M, np.zeros(30)])
    assert isotropy(standardize(with_zero)).lambda_min >= isotropy(standardize(M)).lambda_min - 1e-12


def test_bottleneck_picks_upstream_on_ties():
    terms = dict.fromkeys(LAYER_ORDER, 1.0)
    terms["lift"] = terms["regression"] = 0.0
    assert bottleneck_layer(terms) == "lift"


def test_config_round_trip():
    cfg = CertificateConfig(scales=(0.1, 0.2), tau_reg=0.1)
    assert CertificateConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(UsageError):
        CertificateConfig(resolutions=(1.0,), target_counts=(1, 2))
