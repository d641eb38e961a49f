"""Lower-tail exceedance indicators, coexceedance measures, and the
one-sided Wilcoxon rank-sum test used to compare crisis and non-crisis
coexceedance frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import norm, rankdata

from .panel import TradingCalendar

CONTEMPORANEOUS = "contemporaneous"
FIN_LEADS = "fin_leads"
INDUSTRY_LEADS = "industry_leads"


@dataclass
class ExceedanceSeries:
    calendar: TradingCalendar
    indicator: np.ndarray  # (T,) uint8
    alpha: float
    threshold: float


@dataclass
class CcxSeries:
    calendar: TradingCalendar
    indicator: np.ndarray  # (T,) uint8
    variant: str = CONTEMPORANEOUS

    def mean(self) -> float:
        return float(self.indicator.mean())


@dataclass
class LikelihoodReport:
    prob: float
    prob_crisis: float
    prob_non_crisis: float
    n1_crisis: int
    n0_crisis: int
    n1_non_crisis: int
    n0_non_crisis: int
    wilcoxon_stat: float
    wilcoxon_p: float


@dataclass
class WilcoxonResult:
    statistic: float  # rank-sum of y
    p_value: float
    exact: bool


def _check_aligned(a, b):
    if not np.array_equal(a.calendar.dates, b.calendar.dates):
        raise ValueError("calendar mismatch between indicator series")


def exceedance(returns, alpha: float, calendar: Optional[TradingCalendar] = None) -> ExceedanceSeries:
    """Flag returns at or below the ceil(alpha*T)-th smallest value.

    The quantile is computed over the full sample, matching the static
    likelihood tables; ties at the threshold are all included.
    """
    r = np.asarray(returns, dtype=float)
    T = r.size
    if not (0.0 < alpha < 0.5):
        raise ValueError("alpha must be in (0, 0.5)")
    if T < 1.0 / alpha:
        raise ValueError(f"need T >= 1/alpha observations (T={T})")
    if not np.isfinite(r).all():
        raise ValueError("returns contain non-finite values")
    if r.min() == r.max():
        raise ValueError("degenerate distribution: constant return series")
    k = int(math.ceil(alpha * T - 1e-9))
    threshold = float(np.partition(r, k - 1)[k - 1])
    if calendar is None:
        calendar = _default_calendar(T)
    ind = (r <= threshold).astype(np.uint8)
    return ExceedanceSeries(calendar, ind, alpha, threshold)


def _default_calendar(T: int) -> TradingCalendar:
    start = np.datetime64("2001-01-01")
    return TradingCalendar(np.busday_offset(start, np.arange(T), roll="following"))


def ccx(ind_i: ExceedanceSeries, ind_fin: ExceedanceSeries) -> CcxSeries:
    """Joint indicator: both series have an exceedance on the same date."""
    _check_aligned(ind_i, ind_fin)
    return CcxSeries(ind_i.calendar, ind_i.indicator * ind_fin.indicator, CONTEMPORANEOUS)


def ccx_lagged(ind_i: ExceedanceSeries, ind_fin: ExceedanceSeries, direction: str) -> CcxSeries:
    """Lead-lag variants; the first date drops out of the result.

    fin_leads:      industry exceedance at t, financial at t-1
    industry_leads: industry exceedance at t-1, financial at t
    """
    _check_aligned(ind_i, ind_fin)
    if len(ind_i.calendar) < 2:
        raise ValueError("need at least two dates")
    if direction == FIN_LEADS:
        out = ind_i.indicator[1:] * ind_fin.indicator[:-1]
    elif direction == INDUSTRY_LEADS:
        out = ind_i.indicator[:-1] * ind_fin.indicator[1:]
    else:
        raise ValueError(f"unknown direction {direction!r}")
    cal = TradingCalendar(ind_i.calendar.dates[1:])
    return CcxSeries(cal, out, direction)


def ccx_windowed(
    ind_i: ExceedanceSeries,
    ind_fin: ExceedanceSeries,
    w: int = 3,
    mode: str = "trailing",
) -> CcxSeries:
    """Industry exceedance at t joined with any financial exceedance in a
    w-day window around t.

    The default window trails (ends at t, no look-ahead); 'centered' and
    'leading' placements are available for sensitivity runs. Edge dates
    use the shorter available window, so w=1 reduces to the
    contemporaneous measure in every mode.
    """
    _check_aligned(ind_i, ind_fin)
    T = len(ind_i.calendar)
    if w < 1:
        raise ValueError("window length must be >= 1")
    if w > T:
        raise ValueError("window longer than the sample")
    if mode == "trailing":
        back, fwd = w - 1, 0
    elif mode == "centered":
        back, fwd = (w - 1) // 2, w // 2
    elif mode == "leading":
        back, fwd = 0, w - 1
    else:
        raise ValueError(f"unknown window mode {mode!r}")
    fin = ind_fin.indicator
    run = np.zeros(T, dtype=np.uint8)
    csum = np.concatenate([[0], np.cumsum(fin, dtype=np.int64)])
    for t in range(T):
        lo = max(0, t - back)
        hi = min(T - 1, t + fwd)
        run[t] = 1 if csum[hi + 1] - csum[lo] > 0 else 0
    return CcxSeries(ind_i.calendar, ind_i.indicator * run, f"windowed({w},{mode})")


def likelihoods(series: CcxSeries, crisis: np.ndarray) -> LikelihoodReport:
    """Coexceedance frequency over the full sample and per regime, plus a
    one-sided Wilcoxon test of crisis days shifted right of non-crisis days.
    """
    ind = series.indicator
    crisis = np.asarray(crisis, dtype=bool)
    if crisis.shape != ind.shape:
        raise ValueError("crisis mask not aligned with the series")
    c = ind[crisis]
    n = ind[~crisis]
    if c.size == 0 or n.size == 0:
        raise ValueError("both regimes must be nonempty")
    wil = wilcoxon_one_sided(n, c)
    return LikelihoodReport(
        prob=float(ind.mean()),
        prob_crisis=float(c.mean()),
        prob_non_crisis=float(n.mean()),
        n1_crisis=int(c.sum()),
        n0_crisis=int(c.size - c.sum()),
        n1_non_crisis=int(n.sum()),
        n0_non_crisis=int(n.size - n.sum()),
        wilcoxon_stat=wil.statistic,
        wilcoxon_p=wil.p_value,
    )


# ---------------------------------------------------------------------------
# Wilcoxon rank-sum, one-sided alternative "y shifted right of x"
# ---------------------------------------------------------------------------


def _exact_upper_p(n: int, ny: int, w: int) -> float:
    """P(rank-sum of a size-ny subset of ranks 1..n >= w) by counting."""
    max_sum = n * (n + 1) // 2
    counts = np.zeros((ny + 1, max_sum + 1), dtype=np.float64)
    counts[0, 0] = 1.0
    for rank in range(1, n + 1):
        for k in range(min(ny, rank), 0, -1):
            counts[k, rank:] += counts[k - 1, : max_sum + 1 - rank]
    total = counts[ny].sum()
    return float(counts[ny, w:].sum() / total)


def wilcoxon_one_sided(x, y) -> WilcoxonResult:
    """Rank-sum test with midranks; exact enumeration for small untied
    samples, normal approximation with tie and continuity corrections
    otherwise.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be nonempty")
    nx, ny = x.size, y.size
    n = nx + ny
    combined = np.concatenate([x, y])
    ranks = rankdata(combined)
    w = float(ranks[nx:].sum())
    _, tie_counts = np.unique(combined, return_counts=True)
    has_ties = bool((tie_counts > 1).any())

    if n <= 20 and not has_ties:
        p = _exact_upper_p(n, ny, int(round(w)))
        return WilcoxonResult(statistic=w, p_value=p, exact=True)

    mean = ny * (n + 1) / 2.0
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1)) if n > 1 else 0.0
    var = nx * ny / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        # all observations identical: the rank-sum is degenerate
        return WilcoxonResult(statistic=w, p_value=1.0, exact=False)
    z = (w - mean - 0.5) / math.sqrt(var)
    return WilcoxonResult(statistic=w, p_value=float(norm.sf(z)), exact=False)


def quarterly_counts(series: CcxSeries, calendar: Optional[TradingCalendar] = None):
    """Sum daily indicators within each quarter.

    Returns (quarters, counts) with quarters in calendar order.
    """
    cal = series.calendar
    if calendar is not None:
        if not np.array_equal(calendar.dates, cal.dates):
            raise ValueError("calendar does not cover the series")
    labels = cal.quarters
    quarters = list(dict.fromkeys(labels))
    counts = np.zeros(len(quarters), dtype=np.int64)
    pos = {q: i for i, q in enumerate(quarters)}
    for lab, v in zip(labels, series.indicator):
        counts[pos[lab]] += int(v)
    return quarters, counts
