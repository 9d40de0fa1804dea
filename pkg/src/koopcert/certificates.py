"""Layered data-quality certificates for EDMDc datasets.

State layer: directional coverage, Frostman-type non-clustering, radial
coverage (all on whitened states) and state isotropy. Lifted layer: isotropy
of the standardized dictionary features. Regression layer: isotropy of the
standardized ``[Psi, U]`` design, which is the quantity tied directly to the
conditioning of the least-squares problem.

Isotropies are smallest eigenvalues of ``Zbar^T Zbar / N``. They are
obtained from the singular values of ``Zbar`` (``lambda_i = s_i^2 / N``),
so ``sigma_min_bar_phi == sqrt(N * C_reg)`` holds to rounding.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import DegenerateDesignError, UsageError
from .lifting import Dictionary, build_design
from .standardize import RANK_TOL, VAR_THRESHOLD, StandardizedDesign, standardize
from .systems import Dataset

LAYER_ORDER = ("dir", "fr", "rad", "state", "lift", "regression")


@dataclass(frozen=True)
class CertificateConfig:
    """Resolutions, scales and display thresholds for the certificates.

    ``s=None`` uses the state dimension as reference dimension and
    ``rho_max=None`` calibrates the reference density on a uniform ball
    sample with identity covariance.
    """

    resolutions: tuple = (math.pi / 2, math.pi / 4, math.pi / 8)
    target_counts: tuple = (4, 8, 16)
    scales: tuple = (0.25, 0.5, 1.0)
    s: Optional[float] = None
    rho_max: Optional[float] = None
    radial_bins: int = 10
    tau_state: float = 0.20
    tau_lift: float = 0.05
    tau_reg: float = 0.05
    eps: float = 1e-9
    var_threshold: float = VAR_THRESHOLD
    rank_tol: float = RANK_TOL
    rho_ref_samples: int = 4096
    rho_ref_seed: int = 0

    def __post_init__(self):
        if not (self.resolutions and self.target_counts and self.scales):
            raise UsageError("resolutions, target_counts and scales must be nonempty")
        if len(self.resolutions) != len(self.target_counts):
            raise UsageError("one target count is needed per resolution")
        if not self.eps > 0:
            raise UsageError("eps must be positive")
        if self.radial_bins < 1:
            raise UsageError("radial_bins must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "CertificateConfig":
        d = dict(d)
        for key in ("resolutions", "target_counts", "scales"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


# -- whitening ---------------------------------------------------------------

@dataclass(frozen=True)
class Whitener:
    """Affine map ``x -> W (x - mean)`` giving identity sample covariance."""

    mean: np.ndarray
    W: np.ndarray
    ridged: bool = False

    def __call__(self, X) -> np.ndarray:
        return (np.atleast_2d(X) - self.mean) @ self.W.T

    def directions(self, dX) -> np.ndarray:
        """Whiten displacement vectors (no centering)."""
        return np.atleast_2d(dX) @ self.W.T


def fit_whitener(X, eps: float = 1e-9) -> Whitener:
    """Symmetric (ZCA) whitening; falls back to a ridged covariance when singular."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise UsageError("cannot whiten an empty sample")
    mean = X.mean(axis=0)
    C = X - mean
    cov = C.T @ C / X.shape[0]
    w, V = np.linalg.eigh(cov)
    top = max(w.max(), 0.0)
    ridged = X.shape[0] < X.shape[1] + 1 or top == 0.0 or w.min() <= eps * top
    if ridged:
        w = np.clip(w, 0.0, None) + eps * max(top, 1.0)
    W = (V / np.sqrt(w)) @ V.T
    return Whitener(mean=mean, W=W, ridged=bool(ridged))


def whiten_states(X, eps: float = 1e-9):
    """Return ``(X_whitened, ridged_flag)``."""
    wh = fit_whitener(X, eps)
    return wh(X), wh.ridged


# -- directional coverage ----------------------------------------------------

def unit_directions(D, tiny: float = 1e-12) -> np.ndarray:
    """Normalize displacement rows, dropping (near-)zero displacements."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    norms = np.linalg.norm(D, axis=1)
    keep = norms > tiny * max(norms.max(initial=0.0), 1.0)
    return D[keep] / norms[keep, None]


def greedy_direction_set(directions, delta: float) -> np.ndarray:
    """First-accept greedy scan for a ``delta``-separated set of unit vectors.

    A direction is accepted when its angle to every accepted direction is at
    least ``delta``. Returns indices of the accepted rows in scan order.
    """
    directions = np.atleast_2d(directions)
    if directions.shape[0] == 0:
        return np.empty(0, dtype=int)
    cos_delta = math.cos(delta)
    accepted = [0]
    acc = directions[:1]
    for k in range(1, directions.shape[0]):
        cos = acc @ directions[k]
        # angle >= delta  <=>  cos <= cos(delta); small slack for exact right angles
        if np.all(cos <= cos_delta + 1e-12):
            accepted.append(k)
            acc = directions[accepted]
    return np.asarray(accepted, dtype=int)


def direction_counts(directions, resolutions: Sequence[float]) -> list:
    return [len(greedy_direction_set(directions, d)) for d in resolutions]


def directional_coverage(dataset: Dataset, cfg: CertificateConfig, whitener: Whitener | None = None) -> float:
    """``min_l min(M_l / M*_l, 1)`` over whitened displacement directions."""
    if len(dataset) == 0:
        return 0.0
    if whitener is None:
        whitener = fit_whitener(dataset.X, cfg.eps)
    dirs = unit_directions(whitener.directions(dataset.X_next - dataset.X))
    if dirs.shape[0] == 0:
        return 0.0
    counts = direction_counts(dirs, cfg.resolutions)
    return float(min(min(m / t, 1.0) for m, t in zip(counts, cfg.target_counts)))


# -- Frostman-type non-clustering -------------------------------------------

def local_density(Xw, scales: Sequence[float], s: float, eps: float = 1e-9) -> np.ndarray:
    """``rho(r) = max_i (1/N) #{j : |x_j - x_i| <= r} / (r^s + eps)`` per scale."""
    Xw = np.atleast_2d(np.asarray(Xw, dtype=float))
    n = Xw.shape[0]
    tree = cKDTree(Xw)
    out = np.empty(len(scales))
    for i, r in enumerate(scales):
        counts = tree.query_ball_point(Xw, r, return_length=True)
        out[i] = counts.max() / n / (r ** s + eps)
    return out


@lru_cache(maxsize=32)
def reference_density(dim: int, scales: tuple, s: float, eps: float,
                      n_samples: int = 4096, seed: int = 0) -> float:
    """Peak ``rho(r)`` over ``scales`` for a whitened uniform ball sample."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n_samples, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = math.sqrt(dim + 2.0)  # uniform ball with unit coordinate variance
    pts = g * radius * rng.random(n_samples)[:, None] ** (1.0 / dim)
    pts, _ = whiten_states(pts, eps)
    return float(local_density(pts, scales, s, eps).max())


def _resolve_rho_max(cfg: CertificateConfig, dim: int) -> tuple:
    s = cfg.s if cfg.s is not None else float(dim)
    rho_max = cfg.rho_max
    if rho_max is None:
        rho_max = reference_density(dim, tuple(cfg.scales), s, cfg.eps,
                                    cfg.rho_ref_samples, cfg.rho_ref_seed)
    return s, rho_max


def frostman_noncluster(Xw, cfg: CertificateConfig) -> float:
    """``min_r rho_max / rho(r)``, clipped to ``[0, 1]``."""
    Xw = np.atleast_2d(np.asarray(Xw, dtype=float))
    s, rho_max = _resolve_rho_max(cfg, Xw.shape[1])
    rho = local_density(Xw, cfg.scales, s, cfg.eps)
    return float(np.clip(np.min(rho_max / rho), 0.0, 1.0))


# -- radial coverage ---------------------------------------------------------

def radial_coverage(Xw, cfg: CertificateConfig) -> float:
    """Occupied fraction of equal-width radius shells up to the 95th percentile.

    Samples beyond the 95th-percentile radius are counted in the outermost
    shell.
    """
    Xw = np.atleast_2d(np.asarray(Xw, dtype=float))
    bins = cfg.radial_bins
    r = np.linalg.norm(Xw, axis=1)
    r95 = np.percentile(r, 95)
    if r95 <= 0:
        return 1.0 / bins
    idx = np.clip(np.floor(r / r95 * bins).astype(int), 0, bins - 1)
    return len(np.unique(idx)) / bins


# -- isotropy ----------------------------------------------------------------

@dataclass(frozen=True)
class Isotropy:
    """Spectrum summary of ``Zbar^T Zbar / N``."""

    lambda_min: float
    lambda_max: float
    logdet: float
    eigenvalues: np.ndarray
    sigma_min: float

    @property
    def condition_number(self) -> float:
        return self.lambda_max / self.lambda_min if self.lambda_min > 0 else math.inf


def gram_spectrum(Zbar) -> tuple:
    """Ascending Gram eigenvalues and ``sigma_min`` from the SVD of ``Zbar``."""
    Zbar = np.atleast_2d(np.asarray(Zbar, dtype=float))
    n, p = Zbar.shape
    s = np.linalg.svd(Zbar, compute_uv=False)
    sig = np.zeros(p)
    sig[: s.size] = s
    sigma_min = float(sig[-1]) if n >= p else 0.0
    return np.sort(sig ** 2 / n), sigma_min


def logdet_floor(eigs, rel: float = 1e-16) -> float:
    eigs = np.asarray(eigs, dtype=float)
    floor = rel * max(eigs.max(initial=0.0), 1e-300)
    return float(np.sum(np.log(np.maximum(eigs, floor))))


def effective_rank(eigs) -> float:
    """``exp`` of the Shannon entropy of the normalized spectrum (0 if empty)."""
    eigs = np.clip(np.asarray(eigs, dtype=float), 0.0, None)
    total = eigs.sum()
    if eigs.size == 0 or total <= 0:
        return 0.0
    p = eigs[eigs > 0] / total
    return float(np.exp(-np.sum(p * np.log(p))))


def isotropy(Z: StandardizedDesign) -> Isotropy:
    Zbar = Z.Zbar if isinstance(Z, StandardizedDesign) else np.asarray(Z, dtype=float)
    if Zbar.ndim != 2 or Zbar.shape[1] == 0:
        raise DegenerateDesignError("no active columns")
    eigs, sigma_min = gram_spectrum(Zbar)
    return Isotropy(
        lambda_min=float(max(eigs[0], 0.0)),
        lambda_max=float(eigs[-1]),
        logdet=logdet_floor(eigs),
        eigenvalues=eigs,
        sigma_min=sigma_min,
    )


# -- full report -------------------------------------------------------------

@dataclass(frozen=True)
class CertificateReport:
    C_dir: float
    C_fr: float
    C_rad: float
    C_state: float
    C_lift: float
    C_reg: float
    state_iso: float
    lift_iso: float
    regression_iso: float
    C_GPE: float
    active_dim: int
    active_rank: int
    sigma_min_bar_phi: float
    regression_logdet: float
    regression_cond: float
    n_samples: int
    lift_active_dim: int
    state_active_dim: int
    bottleneck: str
    whitening_ridged: bool = False
    lift_eigenvalues: np.ndarray = field(default=None, repr=False, compare=False)

    def normalized_terms(self) -> dict:
        return {
            "dir": self.C_dir,
            "fr": self.C_fr,
            "rad": self.C_rad,
            "state": self.state_iso,
            "lift": self.lift_iso,
            "regression": self.regression_iso,
        }

    def as_row(self) -> dict:
        """Certificate columns under their table names."""
        return {
            "state_iso": self.state_iso,
            "lift_iso": self.lift_iso,
            "regression_iso": self.regression_iso,
            "regression_cov_z_min": self.C_reg,
            "sigma_min_bar_phi": self.sigma_min_bar_phi,
            "regression_logdet": self.regression_logdet,
            "regression_cond": self.regression_cond,
            "active_rank": self.active_rank,
            "active_dim": self.active_dim,
            "std_gpe_index": self.C_GPE,
            "C_dir": self.C_dir,
            "C_fr": self.C_fr,
            "C_rad": self.C_rad,
            "n_samples": self.n_samples,
        }


def bottleneck_layer(terms: dict) -> str:
    """Most upstream layer attaining the composite minimum."""
    low = min(terms.values())
    tol = 1e-12 + 1e-9 * abs(low)
    for name in LAYER_ORDER:
        if terms[name] <= low + tol:
            return name
    raise AssertionError("unreachable")


def full_report(dataset: Dataset, dictionary: Dictionary, cfg: CertificateConfig | None = None) -> CertificateReport:
    """Compute every certificate layer for ``dataset`` under ``dictionary``.

    Raises
    ------
    UsageError
        For empty or single-row datasets.
    DegenerateDesignError
        When a layer has no active column; ``err.layer`` names it.
    """
    cfg = cfg or CertificateConfig()
    if len(dataset) < 2:
        raise UsageError("a certificate report needs at least two transitions")
    wh = fit_whitener(dataset.X, cfg.eps)
    Xw = wh(dataset.X)
    C_dir = directional_coverage(dataset, cfg, wh)
    C_fr = frostman_noncluster(Xw, cfg)
    C_rad = radial_coverage(Xw, cfg)

    design = build_design(dataset, dictionary)
    zx = standardize(dataset.X, cfg.var_threshold, cfg.rank_tol, layer="state")
    zpsi = standardize(design.Psi, cfg.var_threshold, cfg.rank_tol, layer="lift")
    zphi = standardize(design.Phi, cfg.var_threshold, cfg.rank_tol, layer="regression")
    iso_x, iso_psi, iso_phi = isotropy(zx), isotropy(zpsi), isotropy(zphi)

    state_iso = iso_x.lambda_min / cfg.tau_state
    lift_iso = iso_psi.lambda_min / cfg.tau_lift
    reg_iso = iso_phi.lambda_min / cfg.tau_reg
    terms = {"dir": C_dir, "fr": C_fr, "rad": C_rad, "state": state_iso,
             "lift": lift_iso, "regression": reg_iso}
    cond = iso_phi.condition_number
    return CertificateReport(
        C_dir=C_dir,
        C_fr=C_fr,
        C_rad=C_rad,
        C_state=iso_x.lambda_min,
        C_lift=iso_psi.lambda_min,
        C_reg=iso_phi.lambda_min,
        state_iso=state_iso,
        lift_iso=lift_iso,
        regression_iso=reg_iso,
        C_GPE=min(terms.values()),
        active_dim=zphi.active_dim,
        active_rank=zphi.active_rank,
        sigma_min_bar_phi=iso_phi.sigma_min,
        regression_logdet=iso_phi.logdet,
        # a singular design reports the reciprocal rounding floor, not inf
        regression_cond=cond if math.isfinite(cond) else 1e16,
        n_samples=len(dataset),
        lift_active_dim=zpsi.active_dim,
        state_active_dim=zx.active_dim,
        bottleneck=bottleneck_layer(terms),
        whitening_ridged=wh.ridged,
        lift_eigenvalues=iso_psi.eigenvalues,
    )
