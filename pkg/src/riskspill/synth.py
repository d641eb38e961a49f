"""Synthetic data generators with known parameters.

Every generator is a deterministic function of (spec, seed) and returns
its ground truth alongside the data, so tests never hardcode simulated
"truth" separately from the generator. Randomness comes from numpy's
Philox counter-based bit generator; the seed is the Philox key, which
gives identical streams across platforms and processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from . import _kernels as K
from .characteristics import (
    INV_REGRESSORS,
    VAL_REGRESSORS,
    derive_regression_table,
)
from .panel import (
    FirmQuarter,
    IndustryQuarterPanel,
    ReturnsPanel,
    TradingCalendar,
    int_to_quarter,
    quarter_to_int,
)


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def business_calendar(n_days: int, start: str = "2001-01-01") -> TradingCalendar:
    dates = np.busday_offset(np.datetime64(start), np.arange(n_days), roll="following")
    return TradingCalendar(dates)


def _interior_crisis(n_days: int, frac: float) -> tuple[int, int]:
    """[start, end) indices of a crisis block covering frac of the interior."""
    width = int(math.floor(frac * n_days))
    start = int(math.floor(0.4 * n_days))
    return start, start + width


# ---------------------------------------------------------------------------
# VAR-GARCH spillover returns
# ---------------------------------------------------------------------------


@dataclass
class SpilloverDgp:
    seed: int = 0
    n_days: int = 2767
    n_industries: int = 73
    fin_omega: float = 0.05
    fin_alpha: float = 0.05
    fin_beta: float = 0.90
    omega: float = 0.03
    alpha: float = 0.05
    beta: float = 0.90
    gamma1: float | np.ndarray = 0.0
    gamma2: float | np.ndarray = 0.0
    crisis_frac: float = 0.2
    burn: int = 500
    start: str = "2001-01-01"
    scale: float = 0.015  # converts unit-variance shocks to return-like magnitudes
    financial_id: str = "FIN"
    crisis_start: Optional[str] = None  # explicit dates override crisis_frac
    crisis_end: Optional[str] = None


def sim_var_garch_spillover(spec: SpilloverDgp) -> tuple[ReturnsPanel, dict]:
    """Simulate the financial sector plus spillover-loaded industries.

    The financial series is GARCH(1,1); each industry variance carries
    gamma1 * e_fin[t-1]^2 plus the crisis interaction, exactly the
    estimated model. Returns are scaled by spec.scale so magnitudes look
    like daily returns; scaling is reported in the truth block.
    """
    rng = rng_for(spec.seed)
    k = spec.n_industries
    total = spec.burn + spec.n_days
    g1 = np.broadcast_to(np.asarray(spec.gamma1, dtype=float), (k,))
    g2 = np.broadcast_to(np.asarray(spec.gamma2, dtype=float), (k,))

    cal = business_calendar(spec.n_days, spec.start)
    if spec.crisis_start is not None and spec.crisis_end is not None:
        inside = (cal.dates >= np.datetime64(spec.crisis_start)) & (
            cal.dates <= np.datetime64(spec.crisis_end)
        )
        hits = np.flatnonzero(inside)
        if hits.size == 0:
            raise ValueError("crisis dates outside the simulated calendar")
        c0, c1 = int(hits[0]), int(hits[-1]) + 1
    else:
        c0, c1 = _interior_crisis(spec.n_days, spec.crisis_frac)
    crisis_full = np.zeros(total)
    crisis_full[spec.burn + c0 : spec.burn + c1] = 1.0

    z_fin = rng.standard_normal(total)
    init_f = spec.fin_omega / (1.0 - spec.fin_alpha - spec.fin_beta)
    r_fin, _ = K.sim_garch(spec.fin_omega, spec.fin_alpha, spec.fin_beta, z_fin, init_f)
    efin2 = z_fin * z_fin

    values = np.empty((spec.n_days, k + 1))
    values[:, 0] = r_fin[spec.burn :] * spec.scale
    for j in range(k):
        z = rng.standard_normal(total)
        init = (spec.omega + g1[j]) / (1.0 - spec.alpha - spec.beta)
        r, _ = K.sim_spillover(
            spec.omega, spec.alpha, spec.beta, g1[j], g2[j], z, efin2, crisis_full, init
        )
        values[:, j + 1] = r[spec.burn :] * spec.scale

    width = len(str(k))
    sectors = [spec.financial_id] + [f"I{j + 1:0{width}d}" for j in range(k)]
    panel = ReturnsPanel(cal, sectors, values, spec.financial_id)

    truth = {
        "seed": spec.seed,
        "scale": spec.scale,
        "crisis_start": str(cal.dates[c0]),
        "crisis_end": str(cal.dates[c1 - 1]),
        "financial": {
            "omega": spec.fin_omega,
            "alpha": spec.fin_alpha,
            "beta": spec.fin_beta,
        },
        "industries": {
            sectors[j + 1]: {
                "omega": spec.omega,
                "alpha": spec.alpha,
                "beta": spec.beta,
                "gamma1": float(g1[j]),
                "gamma2": float(g2[j]),
            }
            for j in range(k)
        },
    }
    return panel, truth


# ---------------------------------------------------------------------------
# tail-dependence indicator pairs
# ---------------------------------------------------------------------------


def _joint_prob(alpha: float, lam: float) -> float:
    p11 = alpha * alpha + lam * alpha * (1.0 - alpha)
    if not (0.0 <= p11 <= alpha):
        raise ValueError(f"infeasible tail-dependence weight lambda={lam}")
    return p11


@dataclass
class TailDgp:
    seed: int = 0
    n_days: int = 2767
    alpha: float = 0.05
    lam: float = 0.0  # co-exceedance boost outside the crisis block
    lam_crisis: Optional[float] = None  # defaults to lam
    n_industries: int = 1
    crisis_frac: float = 0.2
    start: str = "2001-01-01"
    financial_id: str = "FIN"


def sim_tail_dependence(spec: TailDgp) -> tuple[ReturnsPanel, dict]:
    """Return series whose lower-tail indicators have a known joint law.

    P(joint exceedance) = alpha^2 + lam * alpha * (1 - alpha) per regime;
    the analytic likelihood triple ships in the truth block.
    """
    rng = rng_for(spec.seed)
    T = spec.n_days
    a = spec.alpha
    lam_c = spec.lam if spec.lam_crisis is None else spec.lam_crisis
    p11_n = _joint_prob(a, spec.lam)
    p11_c = _joint_prob(a, lam_c)

    c0, c1 = _interior_crisis(T, spec.crisis_frac)
    crisis = np.zeros(T, dtype=bool)
    crisis[c0:c1] = True
    p11 = np.where(crisis, p11_c, p11_n)

    fin_flag = rng.random(T) < a
    p_given1 = p11 / a
    p_given0 = (a - p11) / (1.0 - a)

    def to_returns(flags):
        u = rng.random(T)
        return np.where(flags, -1.0 - u, u)

    values = np.empty((T, spec.n_industries + 1))
    values[:, 0] = to_returns(fin_flag)
    for j in range(spec.n_industries):
        cond = np.where(fin_flag, p_given1, p_given0)
        ind_flag = rng.random(T) < cond
        values[:, j + 1] = to_returns(ind_flag)

    cal = business_calendar(T, spec.start)
    width = len(str(max(spec.n_industries, 1)))
    sectors = [spec.financial_id] + [
        f"I{j + 1:0{width}d}" for j in range(spec.n_industries)
    ]
    panel = ReturnsPanel(cal, sectors, values, spec.financial_id)
    n_crisis = int(crisis.sum())
    expected_full = (p11_c * n_crisis + p11_n * (T - n_crisis)) / T
    truth = {
        "seed": spec.seed,
        "alpha": a,
        "lambda": spec.lam,
        "lambda_crisis": lam_c,
        "expected_prob": expected_full,
        "expected_prob_crisis": p11_c,
        "expected_prob_non_crisis": p11_n,
        "crisis_start": str(cal.dates[c0]),
        "crisis_end": str(cal.dates[c1 - 1]),
    }
    return panel, truth


# ---------------------------------------------------------------------------
# Poisson count panel
# ---------------------------------------------------------------------------


@dataclass
class PoissonDgp:
    seed: int = 0
    n_industries: int = 73
    n_quarters: int = 44
    start_quarter: str = "2001Q1"
    intercept: float = 0.3
    beta: dict = field(default_factory=lambda: {"nd": 0.5, "val": -0.4, "inv": -0.3})
    controls: dict = field(
        default_factory=lambda: {"volp": 0.3, "debt_cost": 0.2, "ep": -0.2, "size": -0.2}
    )
    split: tuple = ()  # variables entering as crisis/non-crisis interactions
    beta_split: dict = field(default_factory=dict)  # e.g. {"nd_crisis": 0.8, ...}
    effect_sd: float = 0.15
    x_rho: float = 0.7
    x_sd: float = 0.5
    crisis_q: tuple[int, int] = (26, 32)  # inclusive quarter indices


def sim_poisson_panel(spec: PoissonDgp) -> tuple[IndustryQuarterPanel, dict]:
    """Counts y[i,t] ~ Poisson(exp(a + beta'X[i,t-1] + u_i + v_t)).

    Regressors follow stationary AR(1) paths (so second lags work as
    instruments) and are clipped so the exponential mean stays bounded.
    """
    rng = rng_for(spec.seed)
    N, T = spec.n_industries, spec.n_quarters
    q0 = quarter_to_int(spec.start_quarter)
    quarters = [int_to_quarter(q0 + t) for t in range(T)]
    crisis = np.zeros(T, dtype=bool)
    crisis[spec.crisis_q[0] : spec.crisis_q[1] + 1] = True

    names = sorted(set(spec.beta) | set(spec.controls))

    def ar_block():
        x = np.empty((N, T))
        x[:, 0] = rng.standard_normal(N) * spec.x_sd
        innov_sd = spec.x_sd * math.sqrt(1.0 - spec.x_rho**2)
        for t in range(1, T):
            x[:, t] = spec.x_rho * x[:, t - 1] + rng.standard_normal(N) * innov_sd
        return np.clip(x, -1.5, 1.5)

    data = {v: ar_block() for v in names}
    for v in ("lev", "ni"):
        if v not in data:
            data[v] = ar_block()

    u = np.clip(rng.standard_normal(N) * spec.effect_sd, -0.4, 0.4)
    v_t = np.clip(rng.standard_normal(T) * spec.effect_sd, -0.4, 0.4)

    eta = np.tile(spec.intercept + u[:, None], (1, T)) + v_t[None, :]
    for t in range(1, T):
        for var, b in spec.beta.items():
            x = data[var][:, t - 1]
            if var in spec.split:
                d = 1.0 if crisis[t - 1] else 0.0
                eta[:, t] += (
                    spec.beta_split.get(f"{var}_crisis", b) * x * d
                    + spec.beta_split.get(f"{var}_noncrisis", b) * x * (1.0 - d)
                )
            else:
                eta[:, t] += b * x
        for var, b in spec.controls.items():
            eta[:, t] += b * data[var][:, t - 1]

    y = rng.poisson(np.exp(eta))

    width = len(str(N))
    industries = [f"I{j + 1:0{width}d}" for j in range(N)]
    panel = IndustryQuarterPanel(
        industries=industries,
        quarters=quarters,
        ccx=y,
        data=data,
        competition=np.full((N, T), "middle", dtype=object),
    )
    truth = {
        "seed": spec.seed,
        "intercept": spec.intercept,
        "beta": dict(spec.beta),
        "beta_split": dict(spec.beta_split),
        "split": list(spec.split),
        "controls": dict(spec.controls),
        "crisis_quarters": [quarters[i] for i in range(T) if crisis[i]],
    }
    return panel, truth


# ---------------------------------------------------------------------------
# accounting panel with known valuation / investment coefficients
# ---------------------------------------------------------------------------


@dataclass
class AccountingDgp:
    seed: int = 0
    n_industries: int = 8
    firms_per_industry: int = 12
    n_quarters: int = 24  # analysis quarters
    pre_quarters: int = 17  # history for ROE lags and rolling windows
    start_quarter: str = "2001Q1"
    val_coef: tuple = (0.2, 0.8, 0.15, -0.5, 0.05, -1.5, 0.6)  # intercept + VAL_REGRESSORS
    inv_coef: tuple = (-1.0, 0.25, 0.1, -0.4, 0.03, -1.0, 0.5)  # intercept + INV_REGRESSORS
    noise_sd: float = 0.0
    window: int = 12
    with_returns: bool = True
    rf: float = 0.02
    financial_id: Optional[str] = None  # optionally add a financial industry
    industry_ids: Optional[tuple] = None  # overrides the generated N## names


def sim_accounting_panel(
    spec: AccountingDgp,
) -> tuple[list[FirmQuarter], Optional[ReturnsPanel], dict]:
    """Firm-quarter rows whose valuation and investment equations are
    linear in the derived regressors with known coefficients.

    Market equity and capital expenditure are backed out of the target
    responses after the derived regressors (including winsorized ROE and
    the rolling VOLP) are computed, so a zero-noise spec interpolates
    exactly through the whole characteristics pipeline.
    """
    rng = rng_for(spec.seed)
    q0 = quarter_to_int(spec.start_quarter) - spec.pre_quarters
    n_q = spec.pre_quarters + spec.n_quarters
    if spec.industry_ids is not None:
        inds = list(spec.industry_ids)
    else:
        inds = [f"N{j + 1:02d}" for j in range(spec.n_industries)]
    if spec.financial_id and spec.financial_id not in inds:
        inds.append(spec.financial_id)

    rows: list[FirmQuarter] = []
    firm_meta = {}
    for ind in inds:
        for f in range(spec.firms_per_industry):
            firm = f"{ind}_F{f + 1:02d}"
            base_age = float(rng.uniform(2.0, 40.0))
            at0 = float(rng.uniform(50.0, 5000.0))
            # dividend status persists but occasionally switches, so the
            # dummy varies within every industry window
            div = int(rng.random() < 0.5)
            div_path = []
            for _ in range(n_q):
                if rng.random() < 0.03:
                    div = 1 - div
                div_path.append(div)
            roe_mean = float(rng.uniform(0.0, 0.04))
            vol_phase = float(rng.uniform(0.0, 2.0 * math.pi))
            sigma_daily = float(rng.uniform(0.01, 0.03))
            firm_meta[firm] = sigma_daily

            # accounting ratios persist (AR(1) around a firm mean), so
            # lagged values carry information and second lags can serve
            # as instruments downstream
            def ar_path(lo, hi, rho=0.8):
                mean = rng.uniform(lo, hi)
                sd = (hi - lo) / 6.0
                x = mean + rng.normal(0.0, sd)
                path = []
                for _ in range(n_q):
                    x = mean + rho * (x - mean) + rng.normal(0.0, sd * math.sqrt(1 - rho**2))
                    path.append(float(np.clip(x, lo, hi)))
                return path

            be_path = ar_path(0.25, 0.75)
            lev_path = ar_path(0.05, 0.45)
            ppe_path = ar_path(0.2, 0.6)
            iss_path = ar_path(0.0, 0.05)
            red_path = ar_path(0.0, 0.04)
            shares = float(rng.uniform(1.0, 100.0))
            at = at0
            for t in range(n_q):
                qidx = q0 + t
                at *= float(np.exp(rng.normal(0.005, 0.02)))
                # time-varying ROE dispersion makes VOLP move across windows
                roe_sd = 0.05 + 0.10 * (1.0 + math.sin(0.5 * t + vol_phase)) / 2.0
                roe_draw = float(rng.normal(roe_mean, roe_sd))
                be = be_path[t] * at
                rows.append(
                    FirmQuarter(
                        firm=firm,
                        industry=ind,
                        quarter=int_to_quarter(qidx),
                        me=1.0,  # placeholder, set from the valuation equation below
                        be=be,
                        at=at,
                        ltd=lev_path[t] * at,
                        ltd_iss=iss_path[t] * at,
                        ltd_red=red_path[t] * at,
                        capx=1.0,  # placeholder, set from the investment equation below
                        ppe=ppe_path[t] * at,
                        earn=roe_draw * be,  # rescaled to the lag-4 BE below
                        div_flag=div_path[t],
                        age=base_age + t / 4.0,
                        shares=shares,
                        rf=spec.rf,
                        debt_face=(lev_path[t] * at) * float(rng.uniform(0.9, 1.3)),
                    )
                )

    # make earnings consistent with the ROE definition earn / be[t-4]
    by_key = {(r.firm, quarter_to_int(r.quarter)): r for r in rows}
    for r in rows:
        prev = by_key.get((r.firm, quarter_to_int(r.quarter) - 4))
        if prev is not None:
            r.earn = r.earn / r.be * prev.be

    table = derive_regression_table(rows, window=spec.window)
    key = list(zip(table["firm"], table["qidx"]))
    vc = np.asarray(spec.val_coef, dtype=float)
    ic = np.asarray(spec.inv_coef, dtype=float)

    # valuation response -> market equity
    reg = {c: table[c].to_numpy(float) for c in set(VAL_REGRESSORS) | set(INV_REGRESSORS) - {"tobinq"}}
    volp_used = np.nan_to_num(table["volp"].to_numpy(float))
    roe_used = np.nan_to_num(table["roe"].to_numpy(float))
    vals = {
        "inv_age": reg["inv_age"],
        "div": reg["div"],
        "lev": reg["lev"],
        "log_size": reg["log_size"],
        "volp": volp_used,
        "roe": roe_used,
    }
    log_mb = vc[0] + sum(c * vals[n] for c, n in zip(vc[1:], VAL_REGRESSORS))
    if spec.noise_sd > 0:
        log_mb = log_mb + rng.normal(0.0, spec.noise_sd, size=len(table))
    be_arr = table["be"].to_numpy(float)
    at_arr = table["at"].to_numpy(float)
    me_arr = be_arr * np.exp(log_mb)
    tobinq = (at_arr + me_arr - be_arr) / at_arr

    vals_inv = dict(vals)
    vals_inv["tobinq"] = tobinq
    log_invest = ic[0] + sum(c * vals_inv[n] for c, n in zip(ic[1:], INV_REGRESSORS))
    if spec.noise_sd > 0:
        log_invest = log_invest + rng.normal(0.0, spec.noise_sd, size=len(table))
    ppe_lag = table["ppe_lag1"].to_numpy(float)
    capx = np.where(ppe_lag > 0, ppe_lag * np.exp(log_invest), np.nan)

    for r, me, cx in zip(
        (by_key[k] for k in key), me_arr, capx
    ):
        r.me = float(me)
        r.capx = float(cx) if np.isfinite(cx) else None

    returns_panel = None
    if spec.with_returns:
        first = int_to_quarter(quarter_to_int(spec.start_quarter))
        last = int_to_quarter(quarter_to_int(spec.start_quarter) + spec.n_quarters - 1)
        n_days = spec.n_quarters * 64
        cal = business_calendar(n_days, f"{first[:4]}-01-01")
        lastq = quarter_to_int(last)
        keep = np.array([quarter_to_int(q) <= lastq for q in cal.quarters])
        cal = TradingCalendar(cal.dates[keep])
        firms = sorted(firm_meta)
        vols = np.array([firm_meta[f] for f in firms])
        values = rng.standard_normal((len(cal), len(firms))) * vols[None, :]
        returns_panel = ReturnsPanel(cal, firms, values, None)

    truth = {
        "seed": spec.seed,
        "val_coef": list(map(float, vc)),
        "inv_coef": list(map(float, ic)),
        "noise_sd": spec.noise_sd,
        "window": spec.window,
        "firm_vols": {f: firm_meta[f] for f in sorted(firm_meta)},
        "analysis_quarters": [
            int_to_quarter(quarter_to_int(spec.start_quarter) + t)
            for t in range(spec.n_quarters)
        ],
    }
    return rows, returns_panel, truth


# ---------------------------------------------------------------------------
# HHI training data
# ---------------------------------------------------------------------------


@dataclass
class HhiDgp:
    seed: int = 0
    industries: tuple = ()
    years: tuple = ()
    coef: tuple = (0.05, 0.9, 0.002, -0.001)  # intercept, public_hhi, bls, public emp
    noise_sd: float = 0.01
    train_frac: float = 0.5


def sim_hhi(spec: HhiDgp) -> tuple[pd.DataFrame, dict]:
    """Industry-year HHI covariates; census HHI observed on a training subset."""
    rng = rng_for(spec.seed)
    recs = []
    c = np.asarray(spec.coef, dtype=float)
    for ind in spec.industries:
        for yr in spec.years:
            pub = float(rng.uniform(0.02, 0.6))
            bls = float(rng.uniform(5.0, 200.0))
            pemp = float(rng.uniform(10.0, 400.0))
            census = c[0] + c[1] * pub + c[2] * bls + c[3] * pemp
            census += float(rng.normal(0.0, spec.noise_sd))
            recs.append(
                {
                    "industry": ind,
                    "year": int(yr),
                    "census_hhi": census if rng.random() < spec.train_frac else np.nan,
                    "public_hhi": pub,
                    "bls_emp_per_firm": bls,
                    "public_emp_per_firm": pemp,
                }
            )
    frame = pd.DataFrame.from_records(recs)
    if frame["census_hhi"].notna().sum() < 10:
        frame.loc[frame.index[:10], "census_hhi"] = (
            c[0]
            + c[1] * frame["public_hhi"][:10]
            + c[2] * frame["bls_emp_per_firm"][:10]
            + c[3] * frame["public_emp_per_firm"][:10]
        )
    truth = {"seed": spec.seed, "coef": list(map(float, c)), "noise_sd": spec.noise_sd}
    return frame, truth
