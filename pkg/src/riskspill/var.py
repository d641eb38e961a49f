"""Bivariate VAR(p) prewhitening with BIC lag selection.

The VAR stage strips autocorrelation and cross-correlation from the
financial/industry return pair; its residuals feed the GARCH stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class VarFit:
    p: int
    intercept: np.ndarray  # (2,)
    coefs: np.ndarray  # (p, 2, 2); coefs[k][i, j] = eq i loading on series j, lag k+1
    residuals: np.ndarray  # (T - p, 2)
    resid_cov: np.ndarray  # (2, 2)
    bic: float


def _stack_pair(pair) -> np.ndarray:
    y = np.column_stack([np.asarray(s, dtype=float) for s in pair])
    if y.ndim != 2 or y.shape[1] != 2:
        raise ValueError("expected two aligned series")
    if not np.isfinite(y).all():
        raise ValueError("series contain non-finite values")
    return y


def _design(y: np.ndarray, p: int, t0: int) -> tuple[np.ndarray, np.ndarray]:
    """Regression design for rows t = t0..T-1 using lags 1..p."""
    T = y.shape[0]
    rows = T - t0
    X = np.empty((rows, 1 + 2 * p))
    X[:, 0] = 1.0
    for k in range(1, p + 1):
        X[:, 1 + 2 * (k - 1) : 1 + 2 * k] = y[t0 - k : T - k]
    return X, y[t0:]


def _ls_fit(X: np.ndarray, Y: np.ndarray):
    # lstsq uses an orthogonal (SVD) solve; never form X'X explicitly.
    B, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
    if rank < X.shape[1]:
        raise ValueError("singular regressor cross-product in VAR fit")
    E = Y - X @ B
    return B, E


def _bic(E: np.ndarray, n_coef: int) -> float:
    t_eff = E.shape[0]
    sigma = E.T @ E / t_eff
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise ValueError("residual covariance not positive definite")
    return float(logdet + n_coef * np.log(t_eff) / t_eff)


def fit_var(pair, p: int) -> VarFit:
    """Equation-by-equation least squares for a bivariate VAR(p)."""
    if p < 1:
        raise ValueError("lag order must be >= 1")
    y = _stack_pair(pair)
    T = y.shape[0]
    if T <= 4 * p + 10:
        raise ValueError(f"need T > 4p + 10 observations (T={T}, p={p})")
    X, Y = _design(y, p, p)
    B, E = _ls_fit(X, Y)
    coefs = np.empty((p, 2, 2))
    for k in range(p):
        coefs[k] = B[1 + 2 * k : 3 + 2 * k].T
    n_coef = B.size
    return VarFit(
        p=p,
        intercept=B[0].copy(),
        coefs=coefs,
        residuals=E,
        resid_cov=E.T @ E / E.shape[0],
        bic=_bic(E, n_coef),
    )


def select_lag_bic(pair, p_max: int = 10) -> int:
    """argmin BIC over p = 1..p_max, all candidates on the common sample
    t = p_max..T-1 (otherwise the criterion values are not comparable).
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    y = _stack_pair(pair)
    T = y.shape[0]
    if T <= 4 * p_max + 10:
        raise ValueError(f"need T > 4*p_max + 10 observations (T={T})")
    best_p, best_bic = 1, np.inf
    for p in range(1, p_max + 1):
        X, Y = _design(y, p, p_max)
        _, E = _ls_fit(X, Y)
        bic = _bic(E, 2 * (1 + 2 * p))
        if bic < best_bic:
            best_p, best_bic = p, bic
    return best_p
