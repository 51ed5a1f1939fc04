"""Random-intercept linear mixed model fit by profiled REML.

The model is ``y = X beta + u[calf] + e`` with ``u ~ N(0, sigma_u^2)`` per
calf and ``e ~ N(0, sigma_e^2)``. Writing ``theta = sigma_u^2 / sigma_e^2``,
the marginal covariance is ``sigma_e^2 (I + theta Z Z')`` which is block
diagonal per calf, so GLS quantities reduce to group sums:

    (W^-1 v)_i = v_i - theta/(1 + n_j theta) * sum_j(v)      for i in calf j
    log|W|     = sum_j log(1 + n_j theta)

beta and sigma_e^2 have closed forms given theta; the remaining
one-dimensional REML objective is minimized by bounded scalar search over
log10(theta) in [-12, 12]. The fitted intercept for calf j shrinks the
calf's mean residual by n_j theta / (n_j theta + 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import FitDiverged, ShapeError, VarianceNotIdentifiable
from .ols import check_full_rank, design_matrix

_LOG10_THETA_BOUNDS = (-12.0, 12.0)


@dataclass
class LmmModel:
    beta: np.ndarray  # intercept followed by one coefficient per feature
    sigma_u2: float
    sigma_e2: float
    blup: dict[str, float] = field(default_factory=dict)
    method: str = "reml"

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)

    def predict(self, X, calf_ids=None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.beta) - 1:
            raise ShapeError(
                f"expected {len(self.beta) - 1} features, got shape {X.shape}"
            )
        fixed = self.beta[0] + X @ self.beta[1:]
        if calf_ids is None:
            return fixed
        offsets = np.array([self.blup.get(str(c), 0.0) for c in calf_ids])
        return fixed + offsets


def _group_index(calf_ids) -> tuple[np.ndarray, list[str]]:
    names = [str(c) for c in calf_ids]
    order = sorted(set(names))
    index = {name: i for i, name in enumerate(order)}
    return np.array([index[n] for n in names], dtype=np.int64), order


def _whitened(v: np.ndarray, group: np.ndarray, n_groups: int, theta: float, nj: np.ndarray):
    """W^-1 v for the block covariance W = I + theta Z Z'.

    W^-1 is the identity on the within-group-centered part of v and scales
    each group mean by 1/(1 + n_j theta); computing those parts separately
    avoids the cancellation the direct form suffers at extreme theta.
    """
    if v.ndim == 1:
        sums = np.zeros(n_groups)
        np.add.at(sums, group, v)
        means = sums / nj
        return (v - means[group]) + (means / (1.0 + nj * theta))[group]
    sums = np.zeros((n_groups, v.shape[1]))
    np.add.at(sums, group, v)
    means = sums / nj[:, None]
    return (v - means[group]) + (means / (1.0 + nj * theta)[:, None])[group]


def _profile(theta: float, D, y, group, nj):
    """(beta, sigma_e2_reml_numerator, logdet_W, logdet_XtWinvX) at fixed theta."""
    n_groups = len(nj)
    Dw = _whitened(D, group, n_groups, theta, nj)
    A = D.T @ Dw
    b = D.T @ _whitened(y, group, n_groups, theta, nj)
    beta = np.linalg.solve(A, b)
    resid = y - D @ beta
    quad = float(resid @ _whitened(resid, group, n_groups, theta, nj))
    logdet_w = float(np.sum(np.log1p(nj * theta)))
    sign, logdet_a = np.linalg.slogdet(A)
    if sign <= 0:
        raise FitDiverged("X'W^-1X is not positive definite")
    return beta, resid, quad, logdet_w, logdet_a


def lmm_fit(X, y, calf_ids, method: str = "reml", fixed_theta: float | None = None) -> LmmModel:
    """Fit the random-intercept model.

    ``method`` selects the restricted ("reml", default) or full ("ml")
    likelihood. ``fixed_theta`` skips the variance-ratio search and profiles
    at the given value (0 collapses the fit to OLS), which is mainly useful
    for diagnostics.
    """
    y = np.asarray(y, dtype=np.float64)
    D = design_matrix(X)
    n, p = D.shape
    if len(y) != n or len(calf_ids) != n:
        raise ShapeError("X, y and calf_ids must have the same length")
    if n <= p:
        raise ShapeError(f"need more rows ({n}) than parameters ({p})")
    if method not in ("reml", "ml"):
        raise ValueError(f"unknown method {method!r}")
    check_full_rank(D)
    group, names = _group_index(calf_ids)
    n_groups = len(names)
    if n_groups < 2:
        raise VarianceNotIdentifiable("at least 2 calves are required")
    nj = np.bincount(group, minlength=n_groups).astype(np.float64)
    denom = n - p if method == "reml" else n

    def neg2_loglik(log10_theta: float) -> float:
        theta = 10.0**log10_theta
        _, _, quad, logdet_w, logdet_a = _profile(theta, D, y, group, nj)
        if quad <= 0 or not np.isfinite(quad):
            raise FitDiverged("non-positive residual quadratic form")
        sigma_e2 = quad / denom
        out = denom * np.log(sigma_e2) + logdet_w
        if method == "reml":
            out += logdet_a
        if not np.isfinite(out):
            raise FitDiverged("non-finite restricted likelihood")
        return out

    if fixed_theta is not None:
        theta = float(fixed_theta)
    else:
        res = minimize_scalar(
            neg2_loglik,
            bounds=_LOG10_THETA_BOUNDS,
            method="bounded",
            options={"xatol": 1e-8},
        )
        if not res.success or not np.isfinite(res.fun):
            raise FitDiverged(f"variance search failed: {res.message}")
        theta = float(10.0**res.x)
        # the optimizer can stall on a flat shelf; compare against the edges
        for edge in _LOG10_THETA_BOUNDS:
            if neg2_loglik(edge) < res.fun:
                theta = 10.0**edge

    beta, resid, quad, _, _ = _profile(theta, D, y, group, nj)
    sigma_e2 = quad / denom
    if sigma_e2 <= 0 or not np.isfinite(sigma_e2):
        raise FitDiverged("non-positive residual variance")
    sums = np.zeros(n_groups)
    np.add.at(sums, group, resid)
    rbar = sums / nj
    shrink = nj * theta / (nj * theta + 1.0)
    blup = {name: float(s * r) for name, s, r in zip(names, shrink, rbar)}
    return LmmModel(
        beta=beta,
        sigma_u2=float(theta * sigma_e2),
        sigma_e2=float(sigma_e2),
        blup=blup,
        method=method,
    )
