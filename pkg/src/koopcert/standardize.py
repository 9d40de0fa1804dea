"""Centering, active-column screening and scaling of design matrices.

A design ``M`` is written as ``M = 1 mu^T + Zbar D`` on its active columns,
where a column is active when its sample variance (1/N convention) is at
least ``var_threshold``. Inactive columns are never silently regularized;
they are recorded in ``active_mask`` and reported through ``active_dim``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DegenerateDesignError, UsageError

VAR_THRESHOLD = 1e-10
RANK_TOL = 1e-8


@dataclass(frozen=True)
class StandardizedDesign:
    Zbar: np.ndarray
    mu: np.ndarray
    scale: np.ndarray
    active_mask: np.ndarray
    active_rank: int
    var_threshold: float

    @property
    def active_dim(self) -> int:
        return int(self.active_mask.sum())

    @property
    def n_samples(self) -> int:
        return self.Zbar.shape[0]

    def transform(self, M) -> np.ndarray:
        """Apply the stored centering and scaling to new rows."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return (M[:, self.active_mask] - self.mu[self.active_mask]) / self.scale[self.active_mask]


def active_rank(Zbar, rank_tol: float = RANK_TOL) -> int:
    """Number of singular values above ``rank_tol`` times the largest."""
    Zbar = np.asarray(Zbar, dtype=float)
    if Zbar.size == 0:
        return 0
    s = np.linalg.svd(Zbar, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def standardize(M, var_threshold: float = VAR_THRESHOLD, rank_tol: float = RANK_TOL,
                layer: str | None = None) -> StandardizedDesign:
    """Center, screen and scale the columns of ``M``.

    Parameters
    ----------
    M : array of shape (N, p)
    var_threshold : float
        Columns whose population variance falls below this are inactive.
    rank_tol : float
        Relative singular-value tolerance for ``active_rank``.
    layer : str, optional
        Name attached to a :class:`DegenerateDesignError`.

    Raises
    ------
    UsageError
        If ``N < 2`` or ``M`` is not finite.
    DegenerateDesignError
        If every column is inactive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise UsageError("design must be a 2-D array")
    if M.shape[0] < 2:
        raise UsageError("standardization needs at least two rows")
    if not np.all(np.isfinite(M)):
        raise UsageError("design contains nonfinite entries")
    mu = M.mean(axis=0)
    centered = M - mu
    var = np.mean(centered ** 2, axis=0)
    mask = var >= var_threshold
    if not mask.any():
        raise DegenerateDesignError("all columns have variance below the threshold", layer=layer)
    scale = np.sqrt(var)
    Zbar = centered[:, mask] / scale[mask]
    return StandardizedDesign(
        Zbar=Zbar,
        mu=mu,
        scale=scale,
        active_mask=mask,
        active_rank=active_rank(Zbar, rank_tol),
        var_threshold=var_threshold,
    )


class ActiveStandardizer(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`standardize`.

    ``transform`` returns only the active columns; ``inverse_transform``
    restores all columns, filling inactive ones with their training mean.
    """

    def __init__(self, var_threshold=VAR_THRESHOLD, rank_tol=RANK_TOL):
        self.var_threshold = var_threshold
        self.rank_tol = rank_tol

    def fit(self, X, y=None):
        X = check_array(X)
        d = standardize(X, self.var_threshold, self.rank_tol)
        self.n_features_in_ = X.shape[1]
        self.mean_ = d.mu
        self.scale_ = d.scale
        self.active_mask_ = d.active_mask
        self.active_dim_ = d.active_dim
        self.active_rank_ = d.active_rank
        return self

    def transform(self, X):
        check_is_fitted(self, "active_mask_")
        X = check_array(X)
        m = self.active_mask_
        return (X[:, m] - self.mean_[m]) / self.scale_[m]

    def inverse_transform(self, Z):
        check_is_fitted(self, "active_mask_")
        Z = check_array(Z)
        out = np.tile(self.mean_, (Z.shape[0], 1))
        m = self.active_mask_
        out[:, m] = Z * self.scale_[m] + self.mean_[m]
        return out
