"""Monomial dictionaries and EDMDc design assembly.

The dictionary contains every monomial of total degree ``1..degree`` in
graded-lexicographic order, so the first ``n_x`` features are the state
coordinates themselves. The constant monomial is left out on purpose:
centering during standardization absorbs any affine offset.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations_with_replacement

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import UsageError
from .systems import Dataset


def monomial_exponents(n_x: int, degree: int) -> np.ndarray:
    """Exponent multi-indices of all monomials with ``1 <= deg <= degree``.

    Rows come in graded-lexicographic order, e.g. for two variables and
    degree 2: ``x1, x2, x1^2, x1 x2, x2^2``.
    """
    if n_x < 1 or degree < 1:
        raise UsageError("n_x and degree must be at least 1")
    rows = []
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(n_x), deg):
            e = np.zeros(n_x, dtype=int)
            for i in combo:
                e[i] += 1
            rows.append(e)
    return np.array(rows)


@dataclass(frozen=True)
class Dictionary:
    n_x: int
    degree: int

    @cached_property
    def terms(self) -> np.ndarray:
        return monomial_exponents(self.n_x, self.degree)

    @property
    def d_psi(self) -> int:
        return self.terms.shape[0]

    def lift(self, x) -> np.ndarray:
        """Evaluate the dictionary on one state or on a batch of row states."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.n_x:
            raise UsageError(f"expected states of dimension {self.n_x}, got {X.shape[1]}")
        # exact integer powers; avoids 0**0 surprises from log-domain tricks
        out = np.ones((X.shape[0], self.d_psi))
        for j, e in enumerate(self.terms):
            for i in np.nonzero(e)[0]:
                out[:, j] *= X[:, i] ** e[i]
        return out[0] if single else out

    __call__ = lift


def default_degree(n_x: int) -> int:
    """Degree giving nine monomials: cubic in 2-D, quadratic in 3-D."""
    return {1: 9, 2: 3, 3: 2}.get(n_x, 2)


@dataclass(frozen=True)
class LiftedDesign:
    """``Phi = [Psi, U]`` and the one-step target ``Y = psi(x_{k+1})``."""

    Psi: np.ndarray
    U: np.ndarray
    Y: np.ndarray
    dictionary: Dictionary

    @property
    def Phi(self) -> np.ndarray:
        return np.hstack([self.Psi, self.U])

    @property
    def n_samples(self) -> int:
        return self.Psi.shape[0]

    @property
    def d_psi(self) -> int:
        return self.Psi.shape[1]


def build_design(dataset: Dataset, dictionary: Dictionary) -> LiftedDesign:
    if len(dataset) == 0:
        raise UsageError("cannot build a design from an empty dataset")
    if not (np.all(np.isfinite(dataset.X)) and np.all(np.isfinite(dataset.X_next))):
        raise UsageError("dataset contains nonfinite states")
    return LiftedDesign(
        Psi=dictionary.lift(dataset.X),
        U=np.array(dataset.U, dtype=float),
        Y=dictionary.lift(dataset.X_next),
        dictionary=dictionary,
    )


class PolynomialLift(TransformerMixin, BaseEstimator):
    """Transformer mapping states to graded-lex monomial features.

    Parameters
    ----------
    degree : int or None
        Maximal total degree. ``None`` picks nine features for 2-D and 3-D
        states (see :func:`default_degree`).
    """

    def __init__(self, degree=None):
        self.degree = degree

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        degree = self.degree if self.degree is not None else default_degree(X.shape[1])
        self.dictionary_ = Dictionary(X.shape[1], int(degree))
        self.n_output_features_ = self.dictionary_.d_psi
        return self

    def transform(self, X):
        check_is_fitted(self, "dictionary_")
        X = check_array(X)
        return self.dictionary_.lift(X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "dictionary_")
        names = input_features if input_features is not None else [f"x{i + 1}" for i in range(self.n_features_in_)]
        out = []
        for e in self.dictionary_.terms:
            parts = [n if p == 1 else f"{n}^{p}" for n, p in zip(names, e) if p]
            out.append(" ".join(parts))
        return np.array(out, dtype=object)
