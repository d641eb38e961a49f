"""Merton structural model: forward pricing map and its inversion to
asset value / asset volatility, plus industry aggregation of firm-level
distance-to-default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy.special import ndtr


@dataclass
class MertonInputs:
    equity: float  # market value of equity
    equity_vol: float  # annualized
    debt_face: float
    rate: float  # annualized, continuous compounding
    horizon: float = 1.0  # years

    def validate(self):
        if self.equity <= 0 or self.equity_vol <= 0 or self.debt_face <= 0:
            raise ValueError("equity, equity_vol and debt_face must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


@dataclass
class MertonSolution:
    asset_value: float
    asset_vol: float
    dd: float
    converged: bool
    n_iter: int
    resid_norm: float


def merton_forward(V: float, sigma_V: float, D: float, r: float, T: float):
    """Equity value and volatility implied by asset value and volatility.

    E = V N(d1) - D e^{-rT} N(d2),  sigma_E = (V/E) N(d1) sigma_V.
    """
    if min(V, sigma_V, D, T) <= 0:
        raise ValueError("V, sigma_V, D, T must be positive")
    st = sigma_V * math.sqrt(T)
    d1 = (math.log(V / D) + (r + 0.5 * sigma_V**2) * T) / st
    d2 = d1 - st
    nd1 = float(ndtr(d1))
    E = V * nd1 - D * math.exp(-r * T) * float(ndtr(d2))
    sigma_E = (V / E) * nd1 * sigma_V
    return E, sigma_E


def solve_merton(inputs: MertonInputs, mu: Optional[float] = None) -> MertonSolution:
    """Invert the forward map by damped Newton with a numerical Jacobian.

    DD uses drift mu (default: the risk-free rate, sidestepping asset
    drift estimation):  DD = [ln(V/D) + (mu - sigma_V^2/2) T] / (sigma_V sqrt(T)).
    """
    inputs.validate()
    E, sE, D, r, T = (
        inputs.equity,
        inputs.equity_vol,
        inputs.debt_face,
        inputs.rate,
        inputs.horizon,
    )
    if mu is None:
        mu = r

    def resid(v, s):
        e_hat, se_hat = merton_forward(v, s, D, r, T)
        return np.array([(e_hat - E) / E, (se_hat - sE) / sE])

    V = E + D * math.exp(-r * T)
    s = max(sE * E / V, 1e-8)
    F = resid(V, s)
    n_iter = 0
    for n_iter in range(1, 201):
        if np.max(np.abs(F)) < 1e-12:
            break
        hv = max(1e-7 * V, 1e-12)
        hs = max(1e-7 * s, 1e-12)
        J = np.column_stack(
            [
                (resid(V + hv, s) - resid(V - hv, s)) / (2 * hv),
                (resid(V, s + hs) - resid(V, s - hs)) / (2 * hs),
            ]
        )
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        lam = 1.0
        base = float(np.linalg.norm(F))
        for _ in range(50):
            Vn = V + lam * step[0]
            sn = s + lam * step[1]
            if Vn > 0 and sn > 0:
                Fn = resid(Vn, sn)
                if float(np.linalg.norm(Fn)) < base:
                    V, s, F = Vn, sn, Fn
                    break
            lam *= 0.5
        else:
            break
    resid_norm = float(np.max(np.abs(F)))
    converged = resid_norm < 1e-8
    if not converged:
        raise RuntimeError(
            f"Merton inversion did not converge (max residual {resid_norm:.2e})"
        )
    st = s * math.sqrt(T)
    dd = (math.log(V / D) + (mu - 0.5 * s * s) * T) / st
    return MertonSolution(V, s, dd, converged, n_iter, resid_norm)


def industry_dd(firm_dd: pd.DataFrame, industry_map: dict[str, str]) -> pd.DataFrame:
    """Equal-weighted firm mean per month, then mean over a quarter's months.

    firm_dd columns: firm, month ('YYYY-MM'), dd. Returns a frame with
    columns industry, quarter, dd sorted by (industry, quarter).
    """
    required = {"firm", "month", "dd"}
    if not required.issubset(firm_dd.columns):
        raise ValueError(f"firm_dd needs columns {sorted(required)}")
    if firm_dd.empty:
        raise ValueError("empty firm DD table")
    df = firm_dd.copy()
    df["industry"] = df["firm"].map(industry_map)
    if df["industry"].isna().any():
        missing = df.loc[df["industry"].isna(), "firm"].unique()[:5]
        raise ValueError(f"firms missing from industry map: {list(missing)}")
    monthly = (
        df.groupby(["industry", "month"], as_index=False)["dd"].mean(numeric_only=True)
    )
    period = pd.PeriodIndex(monthly["month"], freq="M")
    monthly["quarter"] = [f"{p.year}Q{p.quarter}" for p in period]
    out = (
        monthly.groupby(["industry", "quarter"], as_index=False)["dd"].mean()
        .sort_values(["industry", "quarter"])
        .reset_index(drop=True)
    )
    return out
