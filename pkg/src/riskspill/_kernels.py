"""Hot numeric kernels: GARCH variance recursions, likelihood sums, simulators.

Every kernel exists twice: a numba-compiled version and a numpy/scipy
fallback. The public names are bound once at import time; set
``RISKSPILL_DISABLE_NUMBA=1`` in the environment to force the fallback
path. ``benchmarks/bench_kernels.py`` times both, and the test suite
checks they agree.

The recursions are first-order and data-dependent, so the fallback maps
them onto ``scipy.signal.lfilter`` (an IIR filter in C) where possible
and plain loops where not (the simulators feed the output back into the
next innovation, which no filter expresses).
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.signal import lfilter

LOG_2PI = float(np.log(2.0 * np.pi))


def numba_disabled_by_env() -> bool:
    return os.environ.get("RISKSPILL_DISABLE_NUMBA", "").strip().lower() in (
        "1",
        "true",
        "yes",
    )


# ---------------------------------------------------------------------------
# numpy / scipy fallback implementations
# ---------------------------------------------------------------------------


def garch_path_numpy(omega, alpha, beta, r, init_var):
    """sigma2[0]=init_var; sigma2[t] = omega + alpha*r[t-1]^2 + beta*sigma2[t-1]."""
    forcing = np.empty(r.shape[0])
    forcing[0] = init_var
    forcing[1:] = omega + alpha * r[:-1] ** 2
    return lfilter([1.0], [1.0, -beta], forcing)


def spillover_path_numpy(omega, alpha, beta, g1, g2, r, efin2, crisis, init_var):
    """GARCH recursion plus lagged squared financial shock terms.

    crisis is a 0/1 float array on the same calendar as r; the g2 term
    loads on efin2[t-1] only when crisis[t-1] == 1.
    """
    forcing = np.empty(r.shape[0])
    forcing[0] = init_var
    forcing[1:] = (
        omega
        + alpha * r[:-1] ** 2
        + g1 * efin2[:-1]
        + g2 * efin2[:-1] * crisis[:-1]
    )
    return lfilter([1.0], [1.0, -beta], forcing)


def normal_loglik_numpy(r, sigma2):
    return -0.5 * float(np.sum(LOG_2PI + np.log(sigma2) + r * r / sigma2))


def student_t_loglik_numpy(r, sigma2, nu):
    # Student-t scaled to unit variance (nu > 2).
    const = (
        math.lgamma((nu + 1.0) / 2.0)
        - math.lgamma(nu / 2.0)
        - 0.5 * math.log(math.pi * (nu - 2.0))
    )
    terms = (
        const
        - 0.5 * np.log(sigma2)
        - (nu + 1.0) / 2.0 * np.log1p(r * r / ((nu - 2.0) * sigma2))
    )
    return float(np.sum(terms))


def sim_garch_numpy(omega, alpha, beta, z, init_var):
    """Simulate r[t] = sqrt(sigma2[t]) * z[t] under the GARCH recursion."""
    T = z.shape[0]
    sigma2 = np.empty(T)
    r = np.empty(T)
    sigma2[0] = init_var
    r[0] = math.sqrt(init_var) * z[0]
    for t in range(1, T):
        sigma2[t] = omega + alpha * r[t - 1] ** 2 + beta * sigma2[t - 1]
        r[t] = math.sqrt(sigma2[t]) * z[t]
    return r, sigma2


def sim_spillover_numpy(omega, alpha, beta, g1, g2, z, efin2, crisis, init_var):
    T = z.shape[0]
    sigma2 = np.empty(T)
    r = np.empty(T)
    sigma2[0] = init_var
    r[0] = math.sqrt(init_var) * z[0]
    for t in range(1, T):
        sigma2[t] = (
            omega
            + alpha * r[t - 1] ** 2
            + beta * sigma2[t - 1]
            + g1 * efin2[t - 1]
            + g2 * efin2[t - 1] * crisis[t - 1]
        )
        r[t] = math.sqrt(sigma2[t]) * z[t]
    return r, sigma2


_NUMPY_IMPLS = {
    "garch_path": garch_path_numpy,
    "spillover_path": spillover_path_numpy,
    "normal_loglik": normal_loglik_numpy,
    "student_t_loglik": student_t_loglik_numpy,
    "sim_garch": sim_garch_numpy,
    "sim_spillover": sim_spillover_numpy,
}

# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_USE_NUMBA = False
_NUMBA_IMPLS = {}

if not numba_disabled_by_env():
    try:
        from numba import njit

        @njit(cache=True)
        def garch_path_numba(omega, alpha, beta, r, init_var):
            T = r.shape[0]
            sigma2 = np.empty(T)
            sigma2[0] = init_var
            for t in range(1, T):
                sigma2[t] = omega + alpha * r[t - 1] ** 2 + beta * sigma2[t - 1]
            return sigma2

        @njit(cache=True)
        def spillover_path_numba(omega, alpha, beta, g1, g2, r, efin2, crisis, init_var):
            T = r.shape[0]
            sigma2 = np.empty(T)
            sigma2[0] = init_var
            for t in range(1, T):
                sigma2[t] = (
                    omega
                    + alpha * r[t - 1] ** 2
                    + beta * sigma2[t - 1]
                    + g1 * efin2[t - 1]
                    + g2 * efin2[t - 1] * crisis[t - 1]
                )
            return sigma2

        @njit(cache=True)
        def normal_loglik_numba(r, sigma2):
            total = 0.0
            for t in range(r.shape[0]):
                total += LOG_2PI + math.log(sigma2[t]) + r[t] * r[t] / sigma2[t]
            return -0.5 * total

        @njit(cache=True)
        def student_t_loglik_numba(r, sigma2, nu):
            const = (
                math.lgamma((nu + 1.0) / 2.0)
                - math.lgamma(nu / 2.0)
                - 0.5 * math.log(math.pi * (nu - 2.0))
            )
            total = 0.0
            for t in range(r.shape[0]):
                total += (
                    const
                    - 0.5 * math.log(sigma2[t])
                    - (nu + 1.0) / 2.0 * math.log1p(r[t] * r[t] / ((nu - 2.0) * sigma2[t]))
                )
            return total

        @njit(cache=True)
        def sim_garch_numba(omega, alpha, beta, z, init_var):
            T = z.shape[0]
            sigma2 = np.empty(T)
            r = np.empty(T)
            sigma2[0] = init_var
            r[0] = math.sqrt(init_var) * z[0]
            for t in range(1, T):
                sigma2[t] = omega + alpha * r[t - 1] ** 2 + beta * sigma2[t - 1]
                r[t] = math.sqrt(sigma2[t]) * z[t]
            return r, sigma2

        @njit(cache=True)
        def sim_spillover_numba(omega, alpha, beta, g1, g2, z, efin2, crisis, init_var):
            T = z.shape[0]
            sigma2 = np.empty(T)
            r = np.empty(T)
            sigma2[0] = init_var
            r[0] = math.sqrt(init_var) * z[0]
            for t in range(1, T):
                sigma2[t] = (
                    omega
                    + alpha * r[t - 1] ** 2
                    + beta * sigma2[t - 1]
                    + g1 * efin2[t - 1]
                    + g2 * efin2[t - 1] * crisis[t - 1]
                )
                r[t] = math.sqrt(sigma2[t]) * z[t]
            return r, sigma2

        _NUMBA_IMPLS = {
            "garch_path": garch_path_numba,
            "spillover_path": spillover_path_numba,
            "normal_loglik": normal_loglik_numba,
            "student_t_loglik": student_t_loglik_numba,
            "sim_garch": sim_garch_numba,
            "sim_spillover": sim_spillover_numba,
        }
        _USE_NUMBA = True
    except ImportError:
        _USE_NUMBA = False


def using_numba() -> bool:
    """True when the bound kernels are the numba-compiled versions."""
    return _USE_NUMBA


_ACTIVE = _NUMBA_IMPLS if _USE_NUMBA else _NUMPY_IMPLS

garch_path = _ACTIVE["garch_path"]
spillover_path = _ACTIVE["spillover_path"]
normal_loglik = _ACTIVE["normal_loglik"]
student_t_loglik = _ACTIVE["student_t_loglik"]
sim_garch = _ACTIVE["sim_garch"]
sim_spillover = _ACTIVE["sim_spillover"]
