"""EDMDc fitting in active standardized coordinates and regression-theory checks.

The regression ``Ybar = Phibar Kbar + E`` is solved on the active columns of
the standardized design. ``lam = 0`` uses a rank-revealing least-squares
solve; rank deficiency is flagged on the model rather than hidden behind a
ridge term.

The ``check_*`` functions verify the one-step stability statements
numerically (identity between ``sigma_min`` and ``C_reg``, Fisher bound,
ridge perturbation bound, least-squares risk bound, population-to-sample
spectral bound) and return :class:`TheoryCheck` records.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DegenerateDesignError, UsageError
from .lifting import Dictionary, LiftedDesign, build_design, default_degree
from .standardize import RANK_TOL, VAR_THRESHOLD, StandardizedDesign, standardize
from .systems import Dataset


@dataclass(frozen=True)
class ColumnStats:
    mu: np.ndarray
    scale: np.ndarray
    mask: np.ndarray


def _column_stats(M, var_threshold) -> ColumnStats:
    mu = M.mean(axis=0)
    var = np.mean((M - mu) ** 2, axis=0)
    return ColumnStats(mu, np.sqrt(var), var >= var_threshold)


@dataclass(frozen=True)
class EdmdcModel:
    """Fitted EDMDc coefficients plus the data needed to leave standardized coordinates."""

    Kbar: np.ndarray
    phi_stats: ColumnStats
    y_stats: ColumnStats
    lam: float
    dictionary: Dictionary
    n_u: int
    active_rank: int
    degenerate: bool = False

    @property
    def d_psi(self) -> int:
        return self.dictionary.d_psi

    def raw_coefficients(self):
        """Return ``(G, c)`` with ``y = c + phi @ G`` in raw lifted coordinates."""
        ps, ys = self.phi_stats, self.y_stats
        p, d = ps.mu.size, ys.mu.size
        G = np.zeros((p, d))
        W = self.Kbar / ps.scale[ps.mask][:, None] * ys.scale[ys.mask][None, :]
        G[np.ix_(ps.mask, ys.mask)] = W
        c = ys.mu - ps.mu @ G
        return G, c

    def affine_map(self):
        """Lifted dynamics ``z+ = A z + B u + c`` (column-vector convention)."""
        G, c = self.raw_coefficients()
        return G[: self.d_psi].T, G[self.d_psi:].T, c

    def predict_lifted(self, Phi) -> np.ndarray:
        Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
        ps, ys = self.phi_stats, self.y_stats
        out = np.tile(ys.mu, (Phi.shape[0], 1))
        Z = (Phi[:, ps.mask] - ps.mu[ps.mask]) / ps.scale[ps.mask]
        out[:, ys.mask] += (Z @ self.Kbar) * ys.scale[ys.mask]
        return out


def fit_edmdc(design: LiftedDesign, lam: float = 0.0, var_threshold: float = VAR_THRESHOLD,
              rank_tol: float = RANK_TOL) -> EdmdcModel:
    """Ridge / least-squares EDMDc fit on active standardized coordinates."""
    if lam < 0:
        raise UsageError("ridge parameter must be nonnegative")
    zphi = standardize(design.Phi, var_threshold, rank_tol, layer="regression")
    ys = _column_stats(design.Y, var_threshold)
    Ybar = (design.Y[:, ys.mask] - ys.mu[ys.mask]) / ys.scale[ys.mask]
    Z = zphi.Zbar
    degenerate = zphi.active_rank < zphi.active_dim
    if lam == 0:
        Kbar = np.linalg.lstsq(Z, Ybar, rcond=None)[0]
    else:
        Kbar = np.linalg.solve(Z.T @ Z + lam * np.eye(Z.shape[1]), Z.T @ Ybar)
    return EdmdcModel(
        Kbar=Kbar,
        phi_stats=ColumnStats(zphi.mu, zphi.scale, zphi.active_mask),
        y_stats=ys,
        lam=float(lam),
        dictionary=design.dictionary,
        n_u=design.U.shape[1],
        active_rank=zphi.active_rank,
        degenerate=bool(degenerate),
    )


def one_step_errors(model: EdmdcModel, dataset: Dataset) -> dict:
    """Per-entry RMS of one-step residuals in lifted and state coordinates."""
    design = build_design(dataset, model.dictionary)
    pred = model.predict_lifted(design.Phi)
    n_x = dataset.n_x
    lift = float(np.sqrt(np.mean((design.Y - pred) ** 2)))
    state = float(np.sqrt(np.mean((dataset.X_next - pred[:, :n_x]) ** 2)))
    return {"lift_rmse": lift, "state_rmse": state}


class EDMDc(RegressorMixin, BaseEstimator):
    """EDMD with control as a scikit-learn regressor.

    ``X`` stacks the current state and input columns, ``[x_k, u_k]``; ``y``
    is the next state ``x_{k+1}``. Predictions go through the lifted linear
    model and read the state back from the degree-one monomials.

    Parameters
    ----------
    degree : int or None
        Dictionary degree; ``None`` picks nine monomials for 2-D/3-D states.
    n_inputs : int
        Number of trailing input columns in ``X``.
    alpha : float
        Ridge parameter in standardized coordinates (0 = least squares).
    var_threshold, rank_tol : float
        Active-column and rank tolerances.
    """

    def __init__(self, degree=None, n_inputs=1, alpha=0.0, var_threshold=VAR_THRESHOLD, rank_tol=RANK_TOL):
        self.degree = degree
        self.n_inputs = n_inputs
        self.alpha = alpha
        self.var_threshold = var_threshold
        self.rank_tol = rank_tol

    def _split(self, X):
        n_x = X.shape[1] - self.n_inputs
        if n_x < 1:
            raise UsageError("X must contain at least one state column before the inputs")
        return X[:, :n_x], X[:, n_x:]

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True)
        states, inputs = self._split(X)
        y = np.asarray(y, dtype=float).reshape(states.shape[0], -1)
        if y.shape[1] != states.shape[1]:
            raise UsageError("y must have one column per state")
        return self.fit_dataset(Dataset(states, inputs, y))

    def fit_dataset(self, dataset: Dataset):
        degree = self.degree if self.degree is not None else default_degree(dataset.n_x)
        self.dictionary_ = Dictionary(dataset.n_x, int(degree))
        self.model_ = fit_edmdc(build_design(dataset, self.dictionary_), self.alpha,
                                self.var_threshold, self.rank_tol)
        self.n_features_in_ = dataset.n_x + dataset.n_u
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        states, inputs = self._split(X)
        Phi = np.hstack([self.dictionary_.lift(states), inputs])
        return self.model_.predict_lifted(Phi)[:, : states.shape[1]]

    def rollout(self, x0, inputs, horizon=None):
        from .downstream import open_loop_predict

        check_is_fitted(self, "model_")
        return open_loop_predict(self.model_, x0, inputs, horizon)


# -- theory checks -----------------------------------------------------------

@dataclass(frozen=True)
class TheoryCheck:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    margin: float
    extra: dict = field(default_factory=dict, compare=False)


def _as_zbar(design) -> np.ndarray:
    if isinstance(design, StandardizedDesign):
        return design.Zbar
    if isinstance(design, LiftedDesign):
        return standardize(design.Phi).Zbar
    return np.asarray(design, dtype=float)


def check_identity(design) -> TheoryCheck:
    """``sigma_min(Phibar)`` from an SVD against ``sqrt(N C_reg)`` from ``eigvalsh``.

    ``design`` may be a raw design matrix or :class:`LiftedDesign` (both are
    standardized first) or a :class:`StandardizedDesign`.
    """
    if isinstance(design, StandardizedDesign):
        Z = design.Zbar
    elif isinstance(design, LiftedDesign):
        Z = standardize(design.Phi).Zbar
    else:
        Z = standardize(np.asarray(design, dtype=float)).Zbar
    n, p = Z.shape
    s = np.linalg.svd(Z, compute_uv=False)
    lhs = float(s[-1]) if n >= p else 0.0
    ev = np.linalg.eigvalsh(Z.T @ Z / n)
    c_reg = max(float(ev[0]), 0.0)
    rhs = math.sqrt(n * c_reg)
    margin = abs(lhs - rhs) / max(lhs, 1e-12)
    # near a zero eigenvalue the square root magnifies eigensolver rounding,
    # so the comparison also accepts agreement of the squares at that scale
    sq_ok = abs(lhs ** 2 - rhs ** 2) <= 1e-12 * n * max(float(ev[-1]), 1.0)
    return TheoryCheck("identity", lhs, rhs, bool(margin <= 1e-9 or sq_ok), margin,
                       {"n": n, "C_reg": c_reg})


def check_fisher(design, Sigma_e) -> TheoryCheck:
    """``lambda_min(Sigma_e^-1 kron Phibar^T Phibar) >= N C_reg / lambda_max(Sigma_e)``.

    The left side is computed from the explicit Kronecker product.
    """
    Z = _as_zbar(design)
    Sigma_e = np.atleast_2d(np.asarray(Sigma_e, dtype=float))
    if not np.allclose(Sigma_e, Sigma_e.T):
        raise UsageError("Sigma_e must be symmetric")
    sig_ev = np.linalg.eigvalsh(Sigma_e)
    if sig_ev[0] <= 0:
        raise UsageError("Sigma_e must be positive definite")
    n = Z.shape[0]
    info = np.kron(np.linalg.inv(Sigma_e), Z.T @ Z)
    lhs = float(np.linalg.eigvalsh((info + info.T) / 2)[0])
    c_reg = max(float(np.linalg.eigvalsh(Z.T @ Z / n)[0]), 0.0)
    rhs = n * c_reg / sig_ev[-1]
    margin = lhs - rhs
    scale = max(abs(rhs), 1.0)
    return TheoryCheck("fisher", lhs, rhs, bool(margin >= -1e-9 * scale), margin,
                       {"relative_gap": abs(margin) / scale})


def check_ridge_bound(design, E, lam: float, Kstar, residual=None) -> TheoryCheck:
    """Ridge error bound around the projection target ``Kstar``.

    The target is ``Ybar = Phibar Kstar + R + E`` where ``R`` (optional) is
    projected onto the orthogonal complement of the column space so that
    ``Kstar`` is the least-squares projection of the noise-free part.
    """
    Z = _as_zbar(design)
    n, p = Z.shape
    Kstar = np.asarray(Kstar, dtype=float).reshape(p, -1)
    E = np.asarray(E, dtype=float).reshape(n, -1)
    Y = Z @ Kstar + E
    if residual is not None:
        R = np.asarray(residual, dtype=float).reshape(n, -1)
        R = R - Z @ np.linalg.lstsq(Z, R, rcond=None)[0]
        Y = Y + R
    G = Z.T @ Z
    if lam == 0:
        Khat = np.linalg.lstsq(Z, Y, rcond=None)[0]
    else:
        Khat = np.linalg.solve(G + lam * np.eye(p), Z.T @ Y)
    lhs = float(np.linalg.norm(Khat - Kstar))
    denom = max(float(np.linalg.eigvalsh(G)[0]), 0.0) + lam
    num = float(np.linalg.norm(Z.T @ E)) + lam * float(np.linalg.norm(Kstar))
    rhs = num / denom if denom > 0 else math.inf
    return TheoryCheck("ridge_bound", lhs, rhs, bool(lhs <= rhs + 1e-9), rhs - lhs)


def check_ls_risk(design, sigma: float, q: int, trials: int = 5000, seed: int = 0,
                  chunk: int = 1000) -> TheoryCheck:
    """Monte Carlo mean of ``|Khat_0 - Kstar|_F^2`` against ``sigma^2 q p / (N C_reg)``."""
    if trials < 1000:
        raise UsageError("the risk check needs at least 1000 trials")
    Z = _as_zbar(design)
    n, p = Z.shape
    G = Z.T @ Z
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= 0:
        raise UsageError("the risk check needs a design of full active rank")
    H = np.linalg.solve(G, Z.T)  # Khat - Kstar = H E
    rng = np.random.default_rng(seed)
    losses = np.empty(trials)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        E = sigma * rng.standard_normal((m, n, q))
        err = np.einsum("pn,mnq->mpq", H, E)
        losses[done:done + m] = np.sum(err ** 2, axis=(1, 2))
        done += m
    mean = float(losses.mean())
    stderr = float(losses.std(ddof=1) / math.sqrt(trials))
    bound = sigma ** 2 * q * p / ev[0]  # N * C_reg == lambda_min(G)
    exact = float(sigma ** 2 * q * np.trace(np.linalg.inv(G)))
    ok = mean <= bound * (1 + 3 / math.sqrt(trials))
    return TheoryCheck("ls_risk", mean, bound, bool(ok), bound - mean,
                       {"stderr": stderr, "exact_risk": exact, "trials": trials})


def sphere_regressors(rng, n: int, p: int, scales=None) -> np.ndarray:
    """Uniform points on the unit sphere, optionally scaled per coordinate."""
    g = rng.standard_normal((n, p))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g if scales is None else g * np.asarray(scales, dtype=float)


def check_population_gap(p: int, N_list: Sequence[int], trials: int = 500, seed: int = 0,
                         scales=None, level: float = 0.95) -> list:
    """Frequency of ``C_reg >= mu / 2`` for regressors with a known population Gram.

    Regressors are uniform on the unit sphere in ``R^p`` scaled by ``scales``
    (default ones), so the population Gram is ``diag(scales^2) / p`` with
    ``mu = min(scales)^2 / p`` and ``|xi| <= max(scales) = R``. They are
    already centered at the population mean, so ``C_reg`` is the smallest
    eigenvalue of the uncentered sample Gram.
    """
    scales = np.ones(p) if scales is None else np.asarray(scales, dtype=float)
    mu = float(scales.min() ** 2 / p)
    R = float(scales.max())
    rng = np.random.default_rng(seed)
    out = []
    for N in N_list:
        hits = 0
        for _ in range(trials):
            xi = sphere_regressors(rng, int(N), p, scales)
            c = np.linalg.eigvalsh(xi.T @ xi / N)[0]
            hits += c >= mu / 2
        freq = hits / trials
        out.append(TheoryCheck("population_gap", freq, level, bool(freq >= level), freq - level,
                               {"N": int(N), "mu": mu, "R": R, "p": p, "trials": trials}))
    return out


@dataclass(frozen=True)
class SchurDiagnostics:
    """Blocks of the standardized Gram split into lifted and input parts."""

    A: np.ndarray
    S: np.ndarray
    alpha_hat: float
    beta_hat: float
    C_reg: float
    pinv_used: bool


def schur_input_residual(design, d_psi: Optional[int] = None, rank_tol: float = RANK_TOL) -> SchurDiagnostics:
    """Conditional input excitation after projecting inputs onto lifted features.

    ``alpha_hat`` is the smallest eigenvalue of the lifted block and
    ``beta_hat`` that of the Schur complement of the input block.
    """
    if isinstance(design, LiftedDesign):
        d_psi = design.d_psi
        design = standardize(design.Phi)
    if not isinstance(design, StandardizedDesign) or d_psi is None:
        raise UsageError("pass a LiftedDesign, or a StandardizedDesign with d_psi")
    mask = design.active_mask
    a = int(mask[:d_psi].sum())
    b = int(mask[d_psi:].sum())
    if a == 0 or b == 0:
        raise DegenerateDesignError("need active lifted and input columns", layer="regression")
    Z = design.Zbar
    G = Z.T @ Z / Z.shape[0]
    A, C, Bu = G[:a, :a], G[:a, a:], G[a:, a:]
    ev_a = np.linalg.eigvalsh(A)
    pinv_used = bool(ev_a[0] <= rank_tol * max(ev_a[-1], 1e-300))
    Ainv = np.linalg.pinv(A) if pinv_used else np.linalg.inv(A)
    S = Bu - C.T @ Ainv @ C
    S = (S + S.T) / 2
    return SchurDiagnostics(
        A=A,
        S=S,
        alpha_hat=float(ev_a[0]),
        beta_hat=float(np.linalg.eigvalsh(S)[0]),
        C_reg=float(np.linalg.eigvalsh(G)[0]),
        pinv_used=pinv_used,
    )


THEORY_COLUMNS = ("name", "lhs", "rhs", "margin", "satisfied")


def write_theory_checks(checks: Iterable[TheoryCheck], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(THEORY_COLUMNS)
        for c in checks:
            w.writerow([c.name, f"{c.lhs:.12g}", f"{c.rhs:.12g}", f"{c.margin:.12g}", str(bool(c.satisfied))])
