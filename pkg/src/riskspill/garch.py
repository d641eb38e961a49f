"""GARCH(1,1) maximum likelihood and the spillover variance model.

The spillover model augments a sector's GARCH(1,1) variance with the
lagged squared standardized financial shock and its crisis interaction:

    s2[t] = omega + alpha*r[t-1]^2 + beta*s2[t-1]
            + g1*e_fin[t-1]^2 + g2*e_fin[t-1]^2 * crisis[t-1]

Estimation runs unconstrained quasi-Newton (L-BFGS-B) on transformed
parameters: log for omega, a softmax map of (alpha, beta) onto the
stationarity simplex, the gammas raw with a positivity penalty on the
implied variance path. Standard errors come from the inverse observed
Hessian in natural parameter space (central finite differences).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K

NORMAL = "normal"
STUDENT_T = "student_t"

_PENALTY = 1e10


class EstimationError(RuntimeError):
    """Optimizer failed to converge or produced an unusable fit."""


@dataclass
class GarchParams:
    omega: float
    alpha: float
    beta: float
    nu: Optional[float] = None  # Student-t dof, > 2

    def validate(self):
        if not (self.omega > 0):
            raise ValueError("omega must be > 0")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.alpha + self.beta >= 1:
            raise ValueError("alpha + beta must be < 1 (covariance stationarity)")
        if self.nu is not None and self.nu <= 2:
            raise ValueError("nu must be > 2")


@dataclass
class GarchFit:
    params: GarchParams
    sigma2: np.ndarray
    std_resid: np.ndarray
    loglik: float
    se: dict[str, float]
    converged: bool
    boundary: bool
    n_iter: int
    message: str = ""


@dataclass
class SpilloverParams:
    omega: float
    alpha: float
    beta: float
    gamma1: float  # unconstrained real
    gamma2: float  # unconstrained real; 0 when the crisis mask is empty
    nu: Optional[float] = None


@dataclass
class SpilloverFit:
    params: SpilloverParams
    sigma2: np.ndarray
    loglik: float
    se: dict[str, float]
    tstats: dict[str, float]
    gamma2_dropped: bool
    converged: bool
    boundary: bool
    n_iter: int
    message: str = ""

    @property
    def total_crisis_effect(self) -> float:
        return self.params.gamma1 + self.params.gamma2

    @property
    def spillover_normal(self) -> bool:
        t = self.tstats.get("gamma1", float("nan"))
        return bool(self.params.gamma1 > 0 and np.isfinite(t) and t > 1.96)

    @property
    def spillover_crisis(self) -> bool:
        t = self.tstats.get("gamma2", float("nan"))
        return bool(self.params.gamma2 > 0 and np.isfinite(t) and t > 1.96)


# ---------------------------------------------------------------------------
# filter and likelihood
# ---------------------------------------------------------------------------


def garch_filter(params: GarchParams, r, init_var: float) -> np.ndarray:
    """Conditional variance path with sigma2[0] = init_var."""
    params.validate()
    if not (init_var > 0):
        raise ValueError("init_var must be > 0")
    r = np.ascontiguousarray(r, dtype=float)
    return K.garch_path(params.omega, params.alpha, params.beta, r, init_var)


def _density_sum(r, sigma2, dist, nu) -> float:
    if dist == NORMAL:
        return K.normal_loglik(r, sigma2)
    if dist == STUDENT_T:
        if nu is None:
            raise ValueError("student_t likelihood needs nu")
        return K.student_t_loglik(r, sigma2, nu)
    raise ValueError(f"unknown distribution {dist!r}")


def garch_loglik(params: GarchParams, r, dist: str = NORMAL, init_var=None) -> float:
    """Sum of log densities under the fitted variance path.

    The Student-t density is scaled to unit variance so omega keeps the
    same interpretation under both distributions.
    """
    r = np.ascontiguousarray(r, dtype=float)
    if init_var is None:
        init_var = float(np.var(r))
    sigma2 = garch_filter(params, r, init_var)
    ll = _density_sum(r, sigma2, dist, params.nu)
    if not np.isfinite(ll):
        raise FloatingPointError("log-likelihood overflowed")
    return ll


# ---------------------------------------------------------------------------
# parameter transforms
# ---------------------------------------------------------------------------


def _ab_from_raw(u: float, v: float) -> tuple[float, float]:
    # softmax onto the open simplex {alpha, beta > 0, alpha + beta < 1}
    m = max(0.0, u, v)
    eu, ev, e0 = math.exp(u - m), math.exp(v - m), math.exp(-m)
    s = e0 + eu + ev
    return eu / s, ev / s


def _raw_from_ab(alpha: float, beta: float) -> tuple[float, float]:
    rest = max(1.0 - alpha - beta, 1e-10)
    return math.log(max(alpha, 1e-10) / rest), math.log(max(beta, 1e-10) / rest)


def _penalized(sigma2) -> Optional[float]:
    m = float(np.min(sigma2))
    if m <= 0 or not np.isfinite(m):
        return -(_PENALTY * (1.0 + abs(m)))
    return None


# ---------------------------------------------------------------------------
# numerical Hessian in natural space
# ---------------------------------------------------------------------------


def _hessian(f, x: np.ndarray, scales: np.ndarray) -> np.ndarray:
    n = x.size
    h = 1e-4 * np.maximum(np.abs(x), scales)
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
    return H


def _se_from_hessian(negll, theta: np.ndarray, scales: np.ndarray) -> np.ndarray:
    H = _hessian(negll, theta, scales)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(H)
    d = np.diag(cov).copy()
    d[d < 0] = np.nan
    return np.sqrt(d)


# ---------------------------------------------------------------------------
# GARCH(1,1) MLE
# ---------------------------------------------------------------------------


def _run_lbfgsb(fun, x0):
    res = minimize(
        fun,
        x0,
        method="L-BFGS-B",
        options={"maxiter": 2000, "maxfun": 40000, "ftol": 1e-9, "gtol": 1e-6},
    )
    return res


def fit_garch11(r, dist: str = NORMAL) -> GarchFit:
    """Constrained MLE of (omega, alpha, beta[, nu]) for a zero-mean series.

    The series is standardized to unit variance internally so the
    optimizer sees O(1) parameters whatever the input scale; omega maps
    back by the variance factor, everything else is scale-free.
    """
    r = np.ascontiguousarray(r, dtype=float)
    T = r.size
    if T < 250:
        raise ValueError(f"need at least 250 observations, got {T}")
    init_var = float(np.var(r))
    if init_var <= 0:
        raise ValueError("constant input series")
    rs = r / math.sqrt(init_var)

    est_nu = dist == STUDENT_T

    def unpack(theta):
        omega = math.exp(theta[0])
        alpha, beta = _ab_from_raw(theta[1], theta[2])
        nu = 2.0 + math.exp(theta[3]) if est_nu else None
        return omega, alpha, beta, nu

    def negll(theta):
        omega, alpha, beta, nu = unpack(theta)
        sigma2 = K.garch_path(omega, alpha, beta, rs, 1.0)
        ll = _density_sum(rs, sigma2, dist, nu)
        if not np.isfinite(ll):
            return _PENALTY
        return -ll

    x0 = [math.log(0.05), *_raw_from_ab(0.05, 0.90)]
    if est_nu:
        x0.append(math.log(8.0 - 2.0))
    res = _run_lbfgsb(negll, np.array(x0))
    grad_ok = np.max(np.abs(res.jac)) < 1e-3 if res.jac is not None else False
    if not res.success and not grad_ok:
        raise EstimationError(f"GARCH fit did not converge: {res.message}")

    omega_s, alpha, beta, nu = unpack(res.x)
    omega = omega_s * init_var
    params = GarchParams(omega, alpha, beta, nu)
    sigma2 = K.garch_path(omega, alpha, beta, r, init_var)
    loglik = _density_sum(r, sigma2, dist, nu)
    names = ["omega", "alpha", "beta"] + (["nu"] if est_nu else [])

    def negll_nat(x):
        s2 = K.garch_path(x[0], x[1], x[2], r, init_var)
        pen = _penalized(s2)
        if pen is not None:
            return -pen
        ll = _density_sum(r, s2, dist, x[3] if est_nu else None)
        return -ll if np.isfinite(ll) else _PENALTY

    theta_nat = np.array([omega, alpha, beta] + ([nu] if est_nu else []))
    scales = np.array([init_var, 1.0, 1.0] + ([10.0] if est_nu else []))
    se = _se_from_hessian(negll_nat, theta_nat, scales)

    return GarchFit(
        params=params,
        sigma2=sigma2,
        std_resid=r / np.sqrt(sigma2),
        loglik=float(loglik),
        se=dict(zip(names, se)),
        converged=True,
        boundary=alpha + beta >= 0.999,
        n_iter=int(res.nit),
        message=str(res.message),
    )


# ---------------------------------------------------------------------------
# spillover MLE
# ---------------------------------------------------------------------------


def fit_spillover(r_i, e_fin, crisis, dist: str = NORMAL) -> SpilloverFit:
    """MLE of the spillover variance model.

    e_fin must be the standardized residuals from a prior financial
    GARCH fit, aligned with r_i. When the crisis mask is all-False the
    g2 term is unidentified and is dropped from the optimization.
    """
    r = np.ascontiguousarray(r_i, dtype=float)
    e = np.ascontiguousarray(e_fin, dtype=float)
    crisis = np.asarray(crisis)
    if r.shape != e.shape or r.shape != crisis.shape:
        raise ValueError("r_i, e_fin and crisis must be aligned")
    efin2 = e * e
    cmask = np.ascontiguousarray(crisis, dtype=float)
    drop_g2 = not bool(cmask.any())
    init_var = float(np.var(r))
    if init_var <= 0:
        raise ValueError("constant input series")
    est_nu = dist == STUDENT_T

    # standardize to unit variance: omega and the gammas shrink by
    # init_var (e_fin is already unit scale), alpha/beta are untouched
    rs = r / math.sqrt(init_var)

    def unpack(theta):
        omega = math.exp(theta[0])
        alpha, beta = _ab_from_raw(theta[1], theta[2])
        g1 = theta[3]
        g2 = 0.0 if drop_g2 else theta[4]
        nu = 2.0 + math.exp(theta[-1]) if est_nu else None
        return omega, alpha, beta, g1, g2, nu

    def negll(theta):
        omega, alpha, beta, g1, g2, nu = unpack(theta)
        sigma2 = K.spillover_path(omega, alpha, beta, g1, g2, rs, efin2, cmask, 1.0)
        pen = _penalized(sigma2)
        if pen is not None:
            return -pen
        ll = _density_sum(rs, sigma2, dist, nu)
        if not np.isfinite(ll):
            return _PENALTY
        return -ll

    x0 = [math.log(0.05), *_raw_from_ab(0.05, 0.90), 0.0]
    if not drop_g2:
        x0.append(0.0)
    if est_nu:
        x0.append(math.log(8.0 - 2.0))
    res = _run_lbfgsb(negll, np.array(x0))
    grad_ok = np.max(np.abs(res.jac)) < 1e-3 if res.jac is not None else False
    if not res.success and not grad_ok:
        raise EstimationError(f"spillover fit did not converge: {res.message}")

    omega_s, alpha, beta, g1_s, g2_s, nu = unpack(res.x)
    omega, g1, g2 = omega_s * init_var, g1_s * init_var, g2_s * init_var
    params = SpilloverParams(omega, alpha, beta, g1, g2, nu)
    sigma2 = K.spillover_path(omega, alpha, beta, g1, g2, r, efin2, cmask, init_var)
    loglik = _density_sum(r, sigma2, dist, nu)

    names = ["omega", "alpha", "beta", "gamma1"]
    nat = [omega, alpha, beta, g1]
    scales = [init_var, 1.0, 1.0, init_var]
    if not drop_g2:
        names.append("gamma2")
        nat.append(g2)
        scales.append(init_var)
    if est_nu:
        names.append("nu")
        nat.append(nu)
        scales.append(10.0)

    def negll_nat(x):
        xg2 = 0.0 if drop_g2 else x[4]
        xnu = x[-1] if est_nu else None
        s2 = K.spillover_path(x[0], x[1], x[2], x[3], xg2, r, efin2, cmask, init_var)
        pen = _penalized(s2)
        if pen is not None:
            return -pen
        ll = _density_sum(r, s2, dist, xnu)
        return -ll if np.isfinite(ll) else _PENALTY

    se = _se_from_hessian(negll_nat, np.array(nat), np.array(scales))
    se_map = dict(zip(names, se))
    tstats = {}
    for name, value in zip(names, nat):
        s = se_map.get(name, np.nan)
        tstats[name] = value / s if (np.isfinite(s) and s > 0) else float("nan")
    if drop_g2:
        se_map["gamma2"] = float("nan")
        tstats["gamma2"] = float("nan")

    return SpilloverFit(
        params=params,
        sigma2=sigma2,
        loglik=float(loglik),
        se=se_map,
        tstats=tstats,
        gamma2_dropped=drop_g2,
        converged=True,
        boundary=alpha + beta >= 0.999,
        n_iter=int(res.nit),
        message=str(res.message),
    )
