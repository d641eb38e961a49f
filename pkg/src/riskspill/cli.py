"""Batch pipeline driver.

Subcommands: spillover, ccx, characteristics, regress, dd, simulate.
Inputs and outputs are CSV; a plain-text ``key = value`` config file
supplies defaults and CLI flags override it. Outputs are byte-stable
across reruns: floats carry 6 significant digits, rows are sorted, and
parallel scheduling never changes file contents. Partial failures leave
an errors.json manifest and a nonzero exit code; per-industry fit
failures degrade to flagged rows without stopping the batch.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import characteristics as ch
from . import econometrics as em
from . import tailrisk as tr
from .garch import fit_garch11, fit_spillover
from .merton import MertonInputs, industry_dd, solve_merton
from .panel import (
    CrisisWindow,
    IndustryQuarterPanel,
    ReturnsPanel,
    TradingCalendar,
    crisis_indicator,
    crisis_quarter_mask,
    load_accounting_csv,
    load_config,
    load_returns_csv,
    quarter_label,
    write_accounting_csv,
    write_returns_csv,
)
from .synth import (
    AccountingDgp,
    HhiDgp,
    SpilloverDgp,
    sim_accounting_panel,
    sim_hhi,
    sim_var_garch_spillover,
)
from .var import fit_var, select_lag_bic

ALPHA_CHOICES = (0.05, 0.025, 0.01)
QUANTILE_CHOICES = (0.25, 0.10)

DEFAULT_MODELS = (
    "m1:;m2:nd;m3:val;m4:inv;m5:nd,val,inv;"
    "m6:nd*,val,inv;m7:nd,val*,inv;m8:nd,val,inv*"
)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    returns_csv: Optional[str] = None
    accounting_csv: Optional[str] = None
    hhi_csv: Optional[str] = None
    firm_returns_csv: Optional[str] = None
    output_dir: str = "out"
    financial_id: Optional[str] = None
    alpha: float = 0.05
    crisis_start: str = "2007-07-01"
    crisis_end: str = "2009-03-31"
    quantile: float = 0.25
    sample_start: Optional[str] = None
    sample_end: Optional[str] = None
    exclude: tuple = ()
    p_max: int = 10
    dist: str = "normal"
    instruments: str = "lag2"
    ccx_variant: str = "contemporaneous"
    ccx_window: int = 3
    window_mode: str = "trailing"
    seed: int = 0
    workers: int = 1
    models: str = DEFAULT_MODELS
    subsamples: tuple = ("all",)
    dd_horizon: float = 1.0
    dd_mu: Optional[float] = None
    sim_industries: int = 73
    sim_days: int = 2767
    sim_firms: int = 8
    sim_noise: float = 0.02

    def validate(self):
        if not any(abs(self.alpha - a) < 1e-12 for a in ALPHA_CHOICES):
            raise ValueError(f"alpha must be one of {ALPHA_CHOICES}")
        if not any(abs(self.quantile - q) < 1e-12 for q in QUANTILE_CHOICES):
            raise ValueError(f"quantile must be one of {QUANTILE_CHOICES}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def crisis_window(self) -> CrisisWindow:
        return CrisisWindow(
            np.datetime64(self.crisis_start), np.datetime64(self.crisis_end)
        )


_INT_KEYS = {"p_max", "ccx_window", "seed", "workers", "sim_industries", "sim_days", "sim_firms"}
_FLOAT_KEYS = {"alpha", "quantile", "dd_horizon", "dd_mu", "sim_noise"}
_LIST_KEYS = {"exclude", "subsamples"}


def config_from(path: Optional[str], overrides: dict) -> RunConfig:
    raw: dict = {}
    if path:
        raw.update(load_config(path))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = {}
    for key, val in raw.items():
        if key not in RunConfig.__dataclass_fields__:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(val, str):
            if key in _INT_KEYS:
                val = int(val)
            elif key in _FLOAT_KEYS:
                val = float(val)
            elif key in _LIST_KEYS:
                val = tuple(s.strip() for s in val.split(",") if s.strip())
        kwargs[key] = val
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# output formatting
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "NA"
        return format(float(x), ".6g")
    return str(x)


def write_report(path: Path, header: list[str], rows: list[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# shared input loading
# ---------------------------------------------------------------------------


def _require(cfg: RunConfig, *keys: str):
    for key in keys:
        val = getattr(cfg, key)
        if not val:
            raise ValueError(f"config key {key!r} is required for this command")
        if key.endswith("_csv") and not Path(val).exists():
            raise FileNotFoundError(f"{key} file not found: {val}")


def _load_filtered_panel(cfg: RunConfig) -> ReturnsPanel:
    panel = load_returns_csv(cfg.returns_csv, cfg.financial_id)
    dates = panel.calendar.dates
    mask = np.ones(dates.size, dtype=bool)
    if cfg.sample_start:
        mask &= dates >= np.datetime64(cfg.sample_start)
    if cfg.sample_end:
        mask &= dates <= np.datetime64(cfg.sample_end)
    keep_secs = [
        s for s in panel.sectors if s == cfg.financial_id or s not in set(cfg.exclude)
    ]
    cols = [panel.sectors.index(s) for s in keep_secs]
    values = panel.values[np.ix_(mask, cols)]
    return ReturnsPanel(
        TradingCalendar(dates[mask]), keep_secs, values, cfg.financial_id
    )


def _industry_classes(cfg: RunConfig) -> dict[tuple[str, int], str]:
    """(industry, year) -> competition class from the fitted-HHI model."""
    frame = pd.read_csv(cfg.hhi_csv)
    model = ch.fit_hhi(frame)
    fitted = ch.fitted_hhi(model, frame)
    classes: dict[tuple[str, int], str] = {}
    for year, g in fitted.groupby("year"):
        by_ind = dict(zip(g["industry"], g["fitted_hhi"]))
        for ind, label in ch.classify(by_ind, cfg.quantile).items():
            classes[(ind, int(year))] = label
    return classes


def _exceedance_pair(panel, sector, alpha):
    fin, other, mask = panel.pair(sector)
    cal = TradingCalendar(panel.calendar.dates[mask])
    e_fin = tr.exceedance(fin, alpha, cal)
    e_ind = tr.exceedance(other, alpha, cal)
    return e_ind, e_fin, cal


def _ccx_series(cfg: RunConfig, e_ind, e_fin) -> tr.CcxSeries:
    if cfg.ccx_variant == "contemporaneous":
        return tr.ccx(e_ind, e_fin)
    if cfg.ccx_variant == "fin_leads":
        return tr.ccx_lagged(e_ind, e_fin, tr.FIN_LEADS)
    if cfg.ccx_variant == "industry_leads":
        return tr.ccx_lagged(e_ind, e_fin, tr.INDUSTRY_LEADS)
    if cfg.ccx_variant == "windowed":
        return tr.ccx_windowed(e_ind, e_fin, cfg.ccx_window, cfg.window_mode)
    raise ValueError(f"unknown ccx variant {cfg.ccx_variant!r}")


# ---------------------------------------------------------------------------
# spillover command
# ---------------------------------------------------------------------------


def _spillover_worker(payload):
    (sector, fin, ind, crisis_mask, p_max, dist, reverse) = payload
    try:
        p = select_lag_bic((fin, ind), p_max)
        vfit = fit_var((fin, ind), p)
        res_fin, res_ind = vfit.residuals[:, 0], vfit.residuals[:, 1]
        crisis = crisis_mask[p:]
        src, dst = (res_ind, res_fin) if reverse else (res_fin, res_ind)
        gfit = fit_garch11(src, dist)
        sfit = fit_spillover(dst, gfit.std_resid, crisis, dist)
        pr = sfit.params
        return {
            "sector": sector,
            "var_lag": p,
            "gamma1": pr.gamma1,
            "t_gamma1": sfit.tstats["gamma1"],
            "gamma2": pr.gamma2,
            "t_gamma2": sfit.tstats["gamma2"],
            "gamma1_x1000": pr.gamma1 * 1000.0,
            "gamma2_x1000": pr.gamma2 * 1000.0,
            "total_crisis_effect": sfit.total_crisis_effect,
            "spillover_normal": sfit.spillover_normal,
            "spillover_crisis": sfit.spillover_crisis,
            "converged": sfit.converged,
            "error": "",
        }
    except Exception as exc:  # degrade to a flagged row, keep the batch alive
        return {"sector": sector, "error": str(exc)}


SPILLOVER_COLUMNS = [
    "sector",
    "var_lag",
    "gamma1",
    "t_gamma1",
    "gamma2",
    "t_gamma2",
    "gamma1_x1000",
    "gamma2_x1000",
    "total_crisis_effect",
    "spillover_normal",
    "spillover_crisis",
    "converged",
    "error",
]


def cmd_spillover(cfg: RunConfig, reverse: bool = False) -> list[Path]:
    _require(cfg, "returns_csv", "financial_id", "output_dir")
    panel = _load_filtered_panel(cfg)
    window = cfg.crisis_window()
    payloads = []
    for sector in panel.non_financial():
        fin, ind, mask = panel.pair(sector)
        cal = TradingCalendar(panel.calendar.dates[mask])
        crisis = crisis_indicator(cal, window)
        payloads.append((sector, fin, ind, crisis, cfg.p_max, cfg.dist, reverse))

    if cfg.workers > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_spillover_worker, payloads))
    else:
        results = [_spillover_worker(p) for p in payloads]

    results.sort(key=lambda r: r["sector"])
    rows = [[r.get(c, None) for c in SPILLOVER_COLUMNS] for r in results]
    name = "spillover_reverse.csv" if reverse else "spillover.csv"
    out = write_report(Path(cfg.output_dir) / name, SPILLOVER_COLUMNS, rows)
    return [out]


# ---------------------------------------------------------------------------
# ccx command
# ---------------------------------------------------------------------------


def cmd_ccx(cfg: RunConfig) -> list[Path]:
    _require(cfg, "returns_csv", "financial_id", "output_dir")
    panel = _load_filtered_panel(cfg)
    window = cfg.crisis_window()
    header = [
        "sector",
        "prob",
        "prob_crisis",
        "prob_non_crisis",
        "n1_crisis",
        "n1_non_crisis",
        "difference",
        "wilcoxon_p",
        "error",
    ]
    rows = []
    probs, probs_c, probs_n = [], [], []
    for sector in panel.non_financial():
        try:
            e_ind, e_fin, cal = _exceedance_pair(panel, sector, cfg.alpha)
            series = _ccx_series(cfg, e_ind, e_fin)
            crisis = crisis_indicator(series.calendar, window)
            rep = tr.likelihoods(series, crisis)
            rows.append(
                [
                    sector,
                    rep.prob,
                    rep.prob_crisis,
                    rep.prob_non_crisis,
                    rep.n1_crisis,
                    rep.n1_non_crisis,
                    rep.prob_crisis - rep.prob_non_crisis,
                    rep.wilcoxon_p,
                    "",
                ]
            )
            probs.append(rep.prob)
            probs_c.append(rep.prob_crisis)
            probs_n.append(rep.prob_non_crisis)
        except Exception as exc:
            rows.append([sector] + [None] * 7 + [str(exc)])
    if probs:
        wil = tr.wilcoxon_one_sided(probs_n, probs_c)
        rows.append(
            [
                "AVERAGE",
                float(np.mean(probs)),
                float(np.mean(probs_c)),
                float(np.mean(probs_n)),
                None,
                None,
                float(np.mean(probs_c) - np.mean(probs_n)),
                wil.p_value,
                "",
            ]
        )
    outputs = [
        write_report(Path(cfg.output_dir) / "ccx_likelihoods.csv", header, rows)
    ]
    if cfg.hhi_csv:
        outputs.append(_ccx_by_class(cfg, panel))
    return outputs


def _ccx_by_class(cfg: RunConfig, panel: ReturnsPanel) -> Path:
    classes = _industry_classes(cfg)
    years = sorted(set(panel.calendar.years.tolist()))
    header = [
        "year",
        "prob_all",
        "prob_competitive",
        "prob_concentrated",
        "difference",
        "wilcoxon_p",
    ]
    rows = []
    pooled: dict[str, list[float]] = {"all": [], ch.COMPETITIVE: [], ch.CONCENTRATED: []}
    for year in years:
        sel = panel.calendar.years == year
        comp, conc, allp = [], [], []
        for sector in panel.non_financial():
            fin = panel.column(cfg.financial_id)[sel]
            other = panel.column(sector)[sel]
            ok = ~np.isnan(fin) & ~np.isnan(other)
            if ok.sum() < 1.0 / cfg.alpha:
                continue
            cal = TradingCalendar(panel.calendar.dates[sel][ok])
            try:
                e_f = tr.exceedance(fin[ok], cfg.alpha, cal)
                e_i = tr.exceedance(other[ok], cfg.alpha, cal)
            except ValueError:
                continue
            prob = tr.ccx(e_i, e_f).mean()
            allp.append(prob)
            label = classes.get((sector, int(year)), ch.MIDDLE)
            if label == ch.COMPETITIVE:
                comp.append(prob)
            elif label == ch.CONCENTRATED:
                conc.append(prob)
        if not allp:
            continue
        pooled["all"] += allp
        pooled[ch.COMPETITIVE] += comp
        pooled[ch.CONCENTRATED] += conc
        diff = p = None
        if comp and conc:
            diff = float(np.mean(comp) - np.mean(conc))
            p = tr.wilcoxon_one_sided(conc, comp).p_value
        rows.append(
            [
                int(year),
                float(np.mean(allp)),
                float(np.mean(comp)) if comp else None,
                float(np.mean(conc)) if conc else None,
                diff,
                p,
            ]
        )
    if pooled[ch.COMPETITIVE] and pooled[ch.CONCENTRATED]:
        rows.append(
            [
                "total",
                float(np.mean(pooled["all"])),
                float(np.mean(pooled[ch.COMPETITIVE])),
                float(np.mean(pooled[ch.CONCENTRATED])),
                float(np.mean(pooled[ch.COMPETITIVE]) - np.mean(pooled[ch.CONCENTRATED])),
                tr.wilcoxon_one_sided(pooled[ch.CONCENTRATED], pooled[ch.COMPETITIVE]).p_value,
            ]
        )
    return write_report(Path(cfg.output_dir) / "ccx_by_class.csv", header, rows)


# ---------------------------------------------------------------------------
# characteristics command
# ---------------------------------------------------------------------------


def _quarterly_ccx_counts(cfg: RunConfig, panel: ReturnsPanel):
    counts: dict[tuple[str, str], int] = {}
    for sector in panel.non_financial():
        e_ind, e_fin, cal = _exceedance_pair(panel, sector, cfg.alpha)
        series = _ccx_series(cfg, e_ind, e_fin)
        quarters, qc = tr.quarterly_counts(series)
        for q, v in zip(quarters, qc):
            counts[(sector, q)] = int(v)
    return counts


def _build_characteristics(cfg: RunConfig):
    rows = load_accounting_csv(cfg.accounting_csv)
    rows = [
        r
        for r in rows
        if r.industry not in set(cfg.exclude) and r.industry != cfg.financial_id
    ]
    returns = _load_filtered_panel(cfg)
    quarters = list(dict.fromkeys(returns.calendar.quarters.tolist()))
    counts = _quarterly_ccx_counts(cfg, returns)
    classes = _industry_classes(cfg) if cfg.hhi_csv else None
    panel = ch.build_characteristics_panel(
        rows, quarters, ccx_counts=counts, classes=classes
    )
    return panel


CHARACTERISTIC_COLUMNS = [
    "industry",
    "quarter",
    "ccx",
    "nd",
    "val",
    "inv",
    "volp",
    "lev",
    "debt_cost",
    "ep",
    "ni",
    "size",
    "competition",
]


def cmd_characteristics(cfg: RunConfig) -> list[Path]:
    _require(cfg, "returns_csv", "accounting_csv", "financial_id", "output_dir")
    panel = _build_characteristics(cfg)
    rows = []
    for i, ind in enumerate(panel.industries):
        for j, q in enumerate(panel.quarters):
            rows.append(
                [ind, q, int(panel.ccx[i, j])]
                + [panel.data[v][i, j] for v in
                   ["nd", "val", "inv", "volp", "lev", "debt_cost", "ep", "ni", "size"]]
                + [panel.competition[i, j]]
            )
    out = write_report(
        Path(cfg.output_dir) / "characteristics.csv", CHARACTERISTIC_COLUMNS, rows
    )
    return [out]


# ---------------------------------------------------------------------------
# regress command
# ---------------------------------------------------------------------------


def parse_models(spec: str) -> list[tuple[str, list[str], list[str]]]:
    """'name:var[*],var;...' -> [(name, variables, split_variables)]."""
    models = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        name, _, body = part.partition(":")
        variables, split = [], []
        for tok in body.split(","):
            tok = tok.strip()
            if not tok:
                continue
            if tok.endswith("*"):
                tok = tok[:-1]
                split.append(tok)
            variables.append(tok)
        models.append((name.strip(), variables, split))
    if not models:
        raise ValueError("no models configured")
    return models


def _subsample_mask(panel: IndustryQuarterPanel, label: str):
    if label == "all":
        return None
    want = {"competitive": ch.COMPETITIVE, "concentrated": ch.CONCENTRATED}[label]
    return panel.competition == want


def _regress_one(cfg, panel, crisis_q, name, variables, split, subsample) -> Path:
    keep = _subsample_mask(panel, subsample)
    design = em.build_design(
        panel,
        variables,
        split=split,
        crisis_quarters=crisis_q,
        instruments=cfg.instruments,
        keep=keep,
    )
    result = em.poisson_gmm(design)
    header = ["variable", "coef", "tstat", "ei_pct"]
    rows = []
    for idx in result.slope_idx:
        col = result.col_names[idx]
        sd = float(design.X[:, idx].std())
        rows.append(
            [col, result.coef[idx], result.tstats[idx], em.economic_impact(result.coef[idx], sd)]
        )
    rows.append(["const", result.coef[0], result.tstats[0], None])
    rows.append(["wald_p", result.wald_p, None, None])
    rows.append(["pseudo_r2", result.pseudo_r2, None, None])
    rows.append(["n_groups", result.n_groups, None, None])
    rows.append(["n_obs", result.n_obs, None, None])
    if result.j_stat is not None:
        rows.append(["j_stat", result.j_stat, None, None])
        rows.append(["j_p", result.j_p, None, None])
    suffix = f"_{subsample}" if subsample != "all" else ""
    return write_report(
        Path(cfg.output_dir) / f"regress_{name}{suffix}.csv", header, rows
    )


def _trim_to_complete(panel: IndustryQuarterPanel, used: list[str]) -> IndustryQuarterPanel:
    """Drop industries with unusable cells, then trim to the largest
    trailing complete quarter span (rolling-window warm-up)."""
    j0, j1 = panel.complete_span_any(used)
    panel = panel.slice_quarters(j0, j1)
    bad = [
        ind
        for i, ind in enumerate(panel.industries)
        if any(np.isnan(panel.data[v][i]).any() for v in used)
    ]
    if bad:
        print(f"note: dropping industries with incomplete data: {','.join(bad)}",
              file=sys.stderr)
        panel = panel.subset([i for i in panel.industries if i not in bad])
    j0, j1 = panel.complete_span(used)
    return panel.slice_quarters(j0, j1)


def cmd_regress(cfg: RunConfig) -> list[Path]:
    _require(cfg, "returns_csv", "accounting_csv", "financial_id", "output_dir")
    panel = _build_characteristics(cfg)
    models = parse_models(cfg.models)
    used = sorted({v for _, vs, _ in models for v in vs} | set(em.DEFAULT_CONTROLS))
    panel = _trim_to_complete(panel, used)
    crisis_q = crisis_quarter_mask(panel.quarters, cfg.crisis_window())
    outputs = []
    failures = []
    for name, variables, split in models:
        for subsample in cfg.subsamples:
            try:
                outputs.append(
                    _regress_one(cfg, panel, crisis_q, name, variables, split, subsample)
                )
            except Exception as exc:
                failures.append(f"{name}/{subsample}: {exc}")
    if failures:
        raise RuntimeError("; ".join(failures))
    return outputs


# ---------------------------------------------------------------------------
# dd command
# ---------------------------------------------------------------------------


def _monthly_sigma_e(returns: ReturnsPanel, min_obs: int = 126):
    """Trailing-year annualized volatility per firm at each month end."""
    dates = returns.calendar.dates
    months = dates.astype("datetime64[M]")
    uniq = np.unique(months)
    out: dict[str, dict[str, float]] = {}
    for j, firm in enumerate(returns.sectors):
        col = returns.values[:, j]
        by_month: dict[str, float] = {}
        for m in uniq:
            end = np.searchsorted(months, m, side="right")
            start = max(0, end - 252)
            window = col[start:end]
            window = window[~np.isnan(window)]
            if window.size >= min_obs:
                by_month[str(m)] = float(window.std() * math.sqrt(252.0))
        out[firm] = by_month
    return out


def _dd_tables(cfg: RunConfig):
    rows = load_accounting_csv(cfg.accounting_csv)
    rows = [r for r in rows if r.industry not in set(cfg.exclude)]
    returns = load_returns_csv(cfg.firm_returns_csv, None)
    sigma = _monthly_sigma_e(returns)
    acct = {}
    for r in rows:
        acct.setdefault(r.firm, {})[r.quarter] = r
    industry_map = {r.firm: r.industry for r in rows}

    months = np.unique(returns.calendar.dates.astype("datetime64[M]"))
    recs = []
    skipped = 0
    for firm, by_month in sigma.items():
        if firm not in acct:
            continue
        quarters = acct[firm]
        for m in months:
            ms = str(m)
            if ms not in by_month:
                continue
            q = quarter_label(np.datetime64(m, "D"))
            row = quarters.get(q)
            if row is None or row.me is None or row.debt_face is None or row.rf is None:
                continue
            if row.me <= 0 or row.debt_face <= 0:
                continue
            try:
                sol = solve_merton(
                    MertonInputs(
                        equity=row.me,
                        equity_vol=by_month[ms],
                        debt_face=row.debt_face,
                        rate=row.rf,
                        horizon=cfg.dd_horizon,
                    ),
                    mu=cfg.dd_mu,
                )
            except (RuntimeError, ValueError):
                skipped += 1
                continue
            recs.append({"firm": firm, "month": ms, "dd": sol.dd})
    frame = pd.DataFrame.from_records(recs)
    if frame.empty:
        raise RuntimeError("no firm-months with solvable DD inputs")
    return industry_dd(frame, industry_map), skipped


def cmd_dd(cfg: RunConfig) -> list[Path]:
    _require(
        cfg, "accounting_csv", "firm_returns_csv", "financial_id", "output_dir"
    )
    table, _ = _dd_tables(cfg)
    out_rows = [
        [r.industry, r.quarter, r.dd]
        for r in table.sort_values(["industry", "quarter"]).itertuples()
    ]
    outputs = [
        write_report(Path(cfg.output_dir) / "dd.csv", ["industry", "quarter", "dd"], out_rows)
    ]

    # regression stage: industry DD on lagged financial DD plus controls
    rows = load_accounting_csv(cfg.accounting_csv)
    rows_nf = [
        r
        for r in rows
        if r.industry not in set(cfg.exclude) and r.industry != cfg.financial_id
    ]
    fin_dd = table[table["industry"] == cfg.financial_id]
    if fin_dd.empty:
        raise RuntimeError(f"financial sector {cfg.financial_id!r} has no DD series")
    quarters_all = sorted(set(table["quarter"]))
    panel = ch.build_characteristics_panel(rows_nf, quarters_all)
    j0, j1 = panel.complete_span(["volp", "lev", "ep", "size"])
    dd_lookup = {(r.industry, r.quarter): r.dd for r in table.itertuples()}
    fin_lookup = dict(zip(fin_dd["quarter"], fin_dd["dd"]))
    # trim further to quarters where every industry and the financial DD exist
    while j0 < j1:
        qs = panel.quarters[j0:j1]
        missing = [
            q
            for q in qs
            if q not in fin_lookup
            or any((ind, q) not in dd_lookup for ind in panel.industries)
        ]
        if not missing:
            break
        j0 += 1
    if j1 - j0 < 8:
        raise RuntimeError("not enough complete quarters for the DD regression")
    panel = panel.slice_quarters(j0, j1)
    dd_mat = np.array(
        [[dd_lookup[(ind, q)] for q in panel.quarters] for ind in panel.industries]
    )
    dd_fin = np.array([fin_lookup[q] for q in panel.quarters])
    crisis_q = crisis_quarter_mask(panel.quarters, cfg.crisis_window())

    header = ["model", "variable", "coef", "tstat"]
    rows_out = []
    for model, split in (("pooled", False), ("split", True)):
        design = em.build_dd_design(dd_mat, dd_fin, panel, crisis_q, split)
        fit = em.prais_winsten(design)
        for idx in design.slope_idx:
            rows_out.append([model, design.col_names[idx], fit.coef[idx], fit.tstats[idx]])
        rows_out.append([model, "rho", fit.rho, None])
        rows_out.append([model, "r2", fit.r2, None])
        rows_out.append([model, "n_obs", fit.n_obs, None])
        rows_out.append([model, "n_groups", len(panel.industries), None])
    outputs.append(
        write_report(Path(cfg.output_dir) / "dd_regression.csv", header, rows_out)
    )
    return outputs


# ---------------------------------------------------------------------------
# simulate command
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    _require(cfg, "output_dir")
    if not cfg.financial_id:
        cfg = replace(cfg, financial_id="FIN")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = cfg.sim_industries

    gamma1 = np.where(np.arange(k) % 2 == 0, 0.02, 0.0)
    gamma2 = np.where(np.arange(k) % 4 < 2, 0.02, 0.0)
    spec = SpilloverDgp(
        seed=cfg.seed,
        n_days=cfg.sim_days,
        n_industries=k,
        gamma1=gamma1,
        gamma2=gamma2,
        financial_id=cfg.financial_id,
        crisis_start=cfg.crisis_start,
        crisis_end=cfg.crisis_end,
    )
    returns, truth_r = sim_var_garch_spillover(spec)
    write_returns_csv(returns, out / "returns.csv")
    write_json(out / "truth_returns.json", truth_r)

    quarters = list(dict.fromkeys(returns.calendar.quarters.tolist()))
    acct_spec = AccountingDgp(
        seed=cfg.seed + 1,
        n_quarters=len(quarters),
        start_quarter=quarters[0],
        noise_sd=cfg.sim_noise,
        firms_per_industry=cfg.sim_firms,
        industry_ids=tuple(returns.non_financial()),
        financial_id=cfg.financial_id,
    )
    rows, firm_returns, truth_a = sim_accounting_panel(acct_spec)
    write_accounting_csv(rows, out / "accounting.csv")
    if firm_returns is not None:
        write_returns_csv(firm_returns, out / "firm_returns.csv")
    write_json(out / "truth_accounting.json", truth_a)

    years = tuple(sorted(set(int(q[:4]) for q in quarters)))
    hhi, truth_h = sim_hhi(
        HhiDgp(seed=cfg.seed + 2, industries=tuple(returns.non_financial()), years=years)
    )
    hhi.to_csv(out / "hhi.csv", index=False, float_format="%.10g", lineterminator="\n")
    write_json(out / "truth_hhi.json", truth_h)

    conf = out / "run.conf"
    with open(conf, "w") as fh:
        fh.write(
            "\n".join(
                [
                    f"returns_csv = {out / 'returns.csv'}",
                    f"accounting_csv = {out / 'accounting.csv'}",
                    f"firm_returns_csv = {out / 'firm_returns.csv'}",
                    f"hhi_csv = {out / 'hhi.csv'}",
                    f"output_dir = {out}",
                    f"financial_id = {cfg.financial_id}",
                    f"alpha = {cfg.alpha}",
                    f"crisis_start = {cfg.crisis_start}",
                    f"crisis_end = {cfg.crisis_end}",
                    f"quantile = {cfg.quantile}",
                    f"seed = {cfg.seed}",
                    "",
                ]
            )
        )
    return [
        out / "returns.csv",
        out / "accounting.csv",
        out / "firm_returns.csv",
        out / "hhi.csv",
        conf,
    ]


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="plain-text key = value config file")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--alpha", type=float)
    p.add_argument("--crisis-start", dest="crisis_start")
    p.add_argument("--crisis-end", dest="crisis_end")
    p.add_argument("--quantile", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="riskspill",
        description="Financial-sector risk spillover pipeline (CSV in, CSV out)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("spillover", "ccx", "characteristics", "regress", "dd", "simulate"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "spillover":
            p.add_argument("--reverse", action="store_true")
    args = parser.parse_args(argv)

    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config", "reverse") and v is not None
    }
    errors = []
    outputs: list[Path] = []
    try:
        cfg = config_from(args.config, overrides)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "spillover":
            outputs = cmd_spillover(cfg, reverse=bool(getattr(args, "reverse", False)))
        elif args.command == "ccx":
            outputs = cmd_ccx(cfg)
        elif args.command == "characteristics":
            outputs = cmd_characteristics(cfg)
        elif args.command == "regress":
            outputs = cmd_regress(cfg)
        elif args.command == "dd":
            outputs = cmd_dd(cfg)
        elif args.command == "simulate":
            outputs = cmd_simulate(cfg)
    except Exception as exc:
        errors.append({"command": args.command, "message": str(exc)})

    if errors:
        write_json(Path(cfg.output_dir) / "errors.json", {"errors": errors})
        for e in errors:
            print(f"error [{e['command']}]: {e['message']}", file=sys.stderr)
        return 1
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
