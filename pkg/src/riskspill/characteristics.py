"""Quarterly industry explanatory variables and the fitted-HHI
competition classifier.

Derived firm variables follow the accounting conventions of the source
data: ROE divides earnings by book equity four quarters back, leverage
is long-term debt over assets, and the valuation/investment regressions
run on pooled within-industry rolling windows that end the quarter
before the prediction quarter (no look-ahead).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from .panel import (
    FirmQuarter,
    IndustryQuarterPanel,
    int_to_quarter,
    quarter_to_int,
    winsorize,
)

log = logging.getLogger(__name__)

COMPETITIVE = "competitive"
CONCENTRATED = "concentrated"
MIDDLE = "middle"

VAL_RESPONSE = "log_mb"
INV_RESPONSE = "log_invest"
VAL_REGRESSORS = ("inv_age", "div", "lev", "log_size", "volp", "roe")
INV_REGRESSORS = ("tobinq", "div", "lev", "log_size", "volp", "roe")

HHI_REGRESSORS = ("public_hhi", "bls_emp_per_firm", "public_emp_per_firm")


@dataclass
class RollingRegressionFit:
    window: tuple[str, str]  # first and last quarter of the window
    response: str
    regressors: tuple[str, ...]
    coef: np.ndarray  # intercept first
    n_rows: int
    resid_var: float


@dataclass
class HhiModel:
    coef: np.ndarray  # intercept + HHI_REGRESSORS
    n_train: int

    def predict(self, rows: pd.DataFrame) -> np.ndarray:
        X = np.column_stack(
            [np.ones(len(rows))] + [rows[c].to_numpy(float) for c in HHI_REGRESSORS]
        )
        return X @ self.coef


# ---------------------------------------------------------------------------
# firm-level table with derived variables
# ---------------------------------------------------------------------------


def firm_table(rows: Iterable[FirmQuarter]) -> pd.DataFrame:
    """Flatten FirmQuarter rows and attach derived regression inputs.

    Lags are matched on the quarter index, so gaps in a firm's history
    yield missing lags rather than silently misaligned ones.
    """
    recs = []
    for r in rows:
        recs.append(
            {
                "firm": r.firm,
                "industry": r.industry,
                "quarter": r.quarter,
                "qidx": quarter_to_int(r.quarter),
                "me": r.me,
                "be": r.be,
                "at": r.at,
                "ltd": r.ltd,
                "ltd_iss": r.ltd_iss,
                "ltd_red": r.ltd_red,
                "capx": r.capx,
                "ppe": r.ppe,
                "earn": r.earn,
                "div": r.div_flag,
                "age": r.age,
                "shares": r.shares,
                "rf": r.rf,
                "debt_face": r.debt_face,
            }
        )
    df = pd.DataFrame.from_records(recs)
    if df.empty:
        raise ValueError("no accounting rows")
    if df.duplicated(["firm", "qidx"]).any():
        raise ValueError("duplicate firm-quarter rows")
    df = df.sort_values(["firm", "qidx"]).reset_index(drop=True)

    def lagged(col, k):
        shifted = df[["firm", "qidx", col]].copy()
        shifted["qidx"] += k
        merged = df[["firm", "qidx"]].merge(shifted, on=["firm", "qidx"], how="left")
        return merged[col].to_numpy(float)

    be_lag4 = lagged("be", 4)
    ppe_lag1 = lagged("ppe", 1)

    with np.errstate(divide="ignore", invalid="ignore"):
        me = df["me"].to_numpy(float)
        be = df["be"].to_numpy(float)
        at = df["at"].to_numpy(float)
        df["roe"] = np.where(be_lag4 > 0, df["earn"].to_numpy(float) / be_lag4, np.nan)
        df["log_mb"] = np.where((me > 0) & (be > 0), np.log(me / be), np.nan)
        df["inv_age"] = 1.0 / (1.0 + df["age"].to_numpy(float))
        df["lev"] = df["ltd"].to_numpy(float) / at
        df["log_size"] = np.where(at > 0, np.log(at), np.nan)
        df["tobinq"] = np.where(
            (at > 0) & ~np.isnan(me) & ~np.isnan(be), (at + me - be) / at, np.nan
        )
        capx = df["capx"].to_numpy(float)
        df["log_invest"] = np.where(
            (capx > 0) & (ppe_lag1 > 0), np.log(capx / ppe_lag1), np.nan
        )
        df["ppe_lag1"] = ppe_lag1
    return df


# ---------------------------------------------------------------------------
# aggregates over one industry-quarter
# ---------------------------------------------------------------------------


def net_debt_financing(firms: Iterable[FirmQuarter]) -> float:
    """(sum issuance - sum reduction) / sum assets over the given firms."""
    num = 0.0
    den = 0.0
    for f in firms:
        if f.ltd_iss is None or f.ltd_red is None or f.at is None:
            continue
        num += f.ltd_iss - f.ltd_red
        den += f.at
    if den <= 0:
        raise ValueError("zero total assets in industry-quarter")
    return num / den


def volp(roe_panel: np.ndarray) -> float:
    """Residual variance of pooled ROE-on-lagged-ROE within one industry
    window. roe_panel is (firms, consecutive window quarters); NaN marks
    missing cells.
    """
    roe = np.asarray(roe_panel, dtype=float)
    if roe.ndim != 2 or roe.shape[1] < 2:
        raise ValueError("need a firms x quarters panel with >= 2 quarters")
    y = roe[:, 1:]
    x = roe[:, :-1]
    ok = ~np.isnan(y) & ~np.isnan(x)
    firm_ok = ok.any(axis=1)
    quarter_ok = ok.any(axis=0)
    if ok.sum() < 6 or firm_ok.sum() < 2 or quarter_ok.sum() < 3:
        raise ValueError("insufficient ROE pairs for VOLP")
    yv, xv = y[ok], x[ok]
    if np.ptp(xv) == 0:
        raise ValueError("degenerate regressor: constant lagged ROE")
    X = np.column_stack([np.ones(xv.size), xv])
    coef, _, _, _ = np.linalg.lstsq(X, yv, rcond=None)
    resid = yv - X @ coef
    return float(np.var(resid))


# ---------------------------------------------------------------------------
# rolling valuation / investment regressions
# ---------------------------------------------------------------------------


def _fit_rows(rows: pd.DataFrame, response: str, regressors: tuple[str, ...]) -> RollingRegressionFit:
    cols = [response, *regressors]
    usable = rows.dropna(subset=cols)
    k = len(regressors) + 1
    if len(usable) < 3 * k:
        raise ValueError(
            f"insufficient rows for {response} fit: {len(usable)} < {3 * k}"
        )
    X = np.column_stack(
        [np.ones(len(usable))] + [usable[c].to_numpy(float) for c in regressors]
    )
    y = usable[response].to_numpy(float)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise ValueError(f"rank-deficient design in {response} fit")
    resid = y - X @ coef
    qs = sorted(usable["quarter"], key=quarter_to_int)
    return RollingRegressionFit(
        window=(qs[0], qs[-1]),
        response=response,
        regressors=regressors,
        coef=coef,
        n_rows=len(usable),
        resid_var=float(np.var(resid)),
    )


def fit_valuation(rows: pd.DataFrame) -> RollingRegressionFit:
    """Pooled within-industry valuation regression on a trailing window.

    rows must already be sliced to the window; observations without a
    positive market-to-book ratio drop out here.
    """
    return _fit_rows(rows, VAL_RESPONSE, VAL_REGRESSORS)


def fit_investment(rows: pd.DataFrame) -> RollingRegressionFit:
    return _fit_rows(rows, INV_RESPONSE, INV_REGRESSORS)


def predict(fit: RollingRegressionFit, rows: pd.DataFrame) -> np.ndarray:
    X = np.column_stack(
        [np.ones(len(rows))] + [rows[c].to_numpy(float) for c in fit.regressors]
    )
    return X @ fit.coef


def spread(fit: RollingRegressionFit, rows: pd.DataFrame) -> np.ndarray:
    """Actual minus predicted response for the prediction-quarter rows."""
    return rows[fit.response].to_numpy(float) - predict(fit, rows)


# ---------------------------------------------------------------------------
# fitted HHI and competition classification
# ---------------------------------------------------------------------------


def fit_hhi(training: pd.DataFrame) -> HhiModel:
    """OLS of census HHI on public-firm HHI and employees-per-firm covariates."""
    cols = ["census_hhi", *HHI_REGRESSORS]
    usable = training.dropna(subset=cols)
    if len(usable) < 10:
        raise ValueError(f"need >= 10 HHI training rows, got {len(usable)}")
    X = np.column_stack(
        [np.ones(len(usable))] + [usable[c].to_numpy(float) for c in HHI_REGRESSORS]
    )
    y = usable["census_hhi"].to_numpy(float)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise ValueError("rank-deficient HHI training design")
    return HhiModel(coef=coef, n_train=len(usable))


def fitted_hhi(model: HhiModel, rows: pd.DataFrame) -> pd.DataFrame:
    """Fitted HHI per industry-year; missing regressors give NaN with a warning."""
    out = rows[["industry", "year"]].copy()
    complete = rows[list(HHI_REGRESSORS)].notna().all(axis=1)
    fitted = np.full(len(rows), np.nan)
    if complete.any():
        fitted[complete.to_numpy()] = model.predict(rows[complete])
    if (~complete).any():
        warnings.warn(
            f"{int((~complete).sum())} industry-years lack HHI regressors; "
            "they will classify as 'middle'",
            stacklevel=2,
        )
    out["fitted_hhi"] = fitted
    return out


def classify(fitted: dict[str, float], q: float) -> dict[str, str]:
    """Competition classes for one year from fitted HHI values.

    The lowest floor(q*N) industries are competitive, the highest
    floor(q*N) concentrated, the rest (and any NaN) middle. Ties break
    on (value, industry id) so the split is deterministic.
    """
    if not (0.0 < q < 0.5):
        raise ValueError("quantile must be in (0, 0.5)")
    valued = sorted(
        ((v, ind) for ind, v in fitted.items() if v is not None and not math.isnan(v))
    )
    n = len(valued)
    k = int(math.floor(q * n + 1e-9))
    out = {ind: MIDDLE for ind in fitted}
    for _, ind in valued[:k]:
        out[ind] = COMPETITIVE
    for _, ind in valued[n - k :] if k else []:
        out[ind] = CONCENTRATED
    return out


# ---------------------------------------------------------------------------
# full industry-quarter panel construction
# ---------------------------------------------------------------------------


def _volp_map(
    table: pd.DataFrame, window: int, winsor: tuple[float, float]
) -> dict[tuple[str, int], float]:
    """VOLP per (industry, quarter index), each from its own trailing window."""
    roe_wide = table.pivot(index="firm", columns="qidx", values="roe")
    all_q = sorted(table["qidx"].unique())
    roe_wide = roe_wide.reindex(columns=range(min(all_q), max(all_q) + 1))
    firm_industry = table.drop_duplicates("firm").set_index("firm")["industry"]

    out: dict[tuple[str, int], float] = {}
    for ind in sorted(table["industry"].unique()):
        block = roe_wide.loc[firm_industry[firm_industry == ind].index]
        cols = np.array(block.columns)
        mat = block.to_numpy(float)
        for tq in range(min(all_q) + 2, max(all_q) + 2):
            sel = (cols >= tq - window) & (cols <= tq - 1)
            if sel.sum() < 2:
                continue
            try:
                out[(ind, tq)] = volp(mat[:, sel])
            except ValueError:
                continue
    if out:
        wz = winsorize(np.array(list(out.values())), *winsor)
        out = dict(zip(out.keys(), wz))
    return out


def derive_regression_table(
    rows: Iterable[FirmQuarter],
    window: int = 12,
    winsor: tuple[float, float] = (0.01, 0.99),
) -> pd.DataFrame:
    """Firm table with the winsorized ROE and rolling VOLP columns attached.

    This is the exact input the rolling valuation/investment fits see;
    the synthetic generator builds its responses from it so zero-noise
    panels interpolate exactly.
    """
    table = firm_table(rows)
    table["roe"] = winsorize(table["roe"].to_numpy(float), *winsor)
    vmap = _volp_map(table, window, winsor)
    table["volp"] = [
        vmap.get((ind, k), np.nan)
        for ind, k in zip(table["industry"], table["qidx"])
    ]
    return table


def _industry_aggregates(g: pd.DataFrame) -> dict[str, float]:
    """Level aggregates for one industry-quarter group."""
    def ratio(num, den):
        n = g[num].to_numpy(float)
        d = g[den].to_numpy(float)
        ok = ~np.isnan(n) & ~np.isnan(d)
        tot = d[ok].sum()
        return float(n[ok].sum() / tot) if tot > 0 else np.nan

    ltd = g["ltd"].to_numpy(float)
    me = g["me"].to_numpy(float)
    ok = ~np.isnan(ltd) & ~np.isnan(me)
    denom = ltd[ok].sum() + me[ok].sum()
    nd = np.nan
    iss = g["ltd_iss"].to_numpy(float)
    red = g["ltd_red"].to_numpy(float)
    at = g["at"].to_numpy(float)
    nd_ok = ~np.isnan(iss) & ~np.isnan(red) & ~np.isnan(at)
    if at[nd_ok].sum() > 0:
        nd = float((iss[nd_ok] - red[nd_ok]).sum() / at[nd_ok].sum())
    me_total = float(np.nansum(me))
    return {
        "nd": nd,
        "lev": ratio("ltd", "at"),
        "debt_cost": float(ltd[ok].sum() / denom) if denom > 0 else np.nan,
        "ep": ratio("earn", "shares"),
        "ni": ratio("earn", "at"),
        "size": math.log(me_total) if me_total > 0 else np.nan,
    }


def build_characteristics_panel(
    rows: Iterable[FirmQuarter],
    quarters: list[str],
    ccx_counts: Optional[dict[tuple[str, str], int]] = None,
    classes: Optional[dict[tuple[str, int], str]] = None,
    window: int = 12,
    winsor: tuple[float, float] = (0.01, 0.99),
) -> IndustryQuarterPanel:
    """Assemble the industry x quarter panel of CCX counts and characteristics.

    quarters fixes the analysis span (consecutive labels). ccx_counts and
    classes are joined in when provided; industry-quarters whose rolling
    windows cannot support a fit stay NaN and are logged.
    """
    table = derive_regression_table(rows, window=window, winsor=winsor)

    industries = sorted(table["industry"].unique())
    qidx = [quarter_to_int(q) for q in quarters]
    n, t = len(industries), len(quarters)
    data = {v: np.full((n, t), np.nan) for v in
            ["nd", "val", "inv", "volp", "lev", "debt_cost", "ep", "ni", "size"]}
    ccx = np.zeros((n, t), dtype=np.int64)
    competition = np.full((n, t), MIDDLE, dtype=object)

    # rolling valuation / investment fits and firm spreads
    spreads_val: list[tuple[str, int, float]] = []
    spreads_inv: list[tuple[str, int, float]] = []
    by_industry = dict(tuple(table.groupby("industry")))
    for ind in industries:
        sub = by_industry[ind]
        for tq in qidx:
            win = sub[(sub["qidx"] >= tq - window) & (sub["qidx"] <= tq - 1)]
            cur = sub[sub["qidx"] == tq]
            if cur.empty:
                continue
            for response, regs, fit_fn, sink in (
                (VAL_RESPONSE, VAL_REGRESSORS, fit_valuation, spreads_val),
                (INV_RESPONSE, INV_REGRESSORS, fit_investment, spreads_inv),
            ):
                try:
                    fit = fit_fn(win)
                except ValueError as exc:
                    log.info("skip %s %s %s: %s", ind, int_to_quarter(tq), response, exc)
                    continue
                ok = cur.dropna(subset=[response, *regs])
                if ok.empty:
                    continue
                for s in spread(fit, ok):
                    sink.append((ind, tq, float(s)))

    for name, sink in (("val", spreads_val), ("inv", spreads_inv)):
        if not sink:
            continue
        raw = np.array([s for _, _, s in sink])
        wz = winsorize(raw, *winsor)
        frame = pd.DataFrame(
            {"industry": [i for i, _, _ in sink], "qidx": [k for _, k, _ in sink], "s": wz}
        )
        means = frame.groupby(["industry", "qidx"])["s"].mean()
        for (ind, k), v in means.items():
            if k in qidx:
                data[name][industries.index(ind), qidx.index(k)] = v

    # level aggregates per industry-quarter
    for (ind, k), g in table.groupby(["industry", "qidx"]):
        if k not in qidx:
            continue
        i, j = industries.index(ind), qidx.index(k)
        for name, v in _industry_aggregates(g).items():
            data[name][i, j] = v
        data["volp"][i, j] = float(g["volp"].iloc[0])

    if ccx_counts:
        for (ind, q), v in ccx_counts.items():
            if ind in industries and q in quarters:
                ccx[industries.index(ind), quarters.index(q)] = int(v)
    if classes:
        for j, q in enumerate(quarters):
            year = int(q.split("Q")[0])
            for i, ind in enumerate(industries):
                competition[i, j] = classes.get((ind, year), MIDDLE)

    return IndustryQuarterPanel(
        industries=industries,
        quarters=list(quarters),
        ccx=ccx,
        data=data,
        competition=competition,
    )
