"""Ordinary least squares with explicit rank checking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ..errors import RankDeficient, ShapeError


@dataclass
class OlsModel:
    intercept: float
    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.coefficients):
            raise ShapeError(
                f"expected {len(self.coefficients)} features, got shape {X.shape}"
            )
        return self.intercept + X @ self.coefficients


def design_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {X.shape}")
    return np.hstack([np.ones((len(X), 1)), X])


def check_full_rank(design: np.ndarray) -> None:
    """Raise RankDeficient naming the first dependent column.

    Column indices refer to the feature matrix; the intercept column is
    reported as -1. Detection uses a pivoted QR so the offending column is
    the one the decomposition could not give an independent direction.
    """
    _, r, piv = linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(design.shape) * np.finfo(np.float64).eps if diag[0] > 0 else 0.0
    bad = np.nonzero(diag <= tol)[0]
    if diag[0] == 0:
        raise RankDeficient(int(piv[0]) - 1)
    if bad.size:
        raise RankDeficient(int(piv[bad[0]]) - 1)


def ols_fit(X, y) -> OlsModel:
    """Least-squares fit of intercept + one coefficient per feature.

    Requires strictly more rows than parameters and a full-rank design;
    the solve itself goes through an SVD-based least squares.
    """
    y = np.asarray(y, dtype=np.float64)
    D = design_matrix(X)
    n, p = D.shape
    if len(y) != n:
        raise ShapeError(f"{n} rows of X vs {len(y)} targets")
    if n <= p:
        raise ShapeError(f"need more rows ({n}) than parameters ({p})")
    check_full_rank(D)
    coef, *_ = np.linalg.lstsq(D, y, rcond=None)
    return OlsModel(intercept=float(coef[0]), coefficients=coef[1:])
