"""Daily return panels, quarterly accounting rows, and shared transforms.

Everything here is constructed once and then treated as read-only, so the
estimation stages can fan out over industries without locking.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


# ---------------------------------------------------------------------------
# calendars and quarters
# ---------------------------------------------------------------------------


def quarter_label(date: np.datetime64) -> str:
    m = date.astype("datetime64[M]").astype(int)
    year = m // 12 + 1970
    q = (m % 12) // 3 + 1
    return f"{year}Q{q}"


def quarter_to_int(q: str) -> int:
    """Map 'YYYYQn' to a consecutive integer (quarters since 0000Q1)."""
    year, n = q.split("Q")
    return int(year) * 4 + (int(n) - 1)


def int_to_quarter(k: int) -> str:
    return f"{k // 4}Q{k % 4 + 1}"


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered trading dates with cached quarter and year labels."""

    dates: np.ndarray  # datetime64[D], strictly increasing
    quarters: np.ndarray = field(init=False, repr=False)
    years: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        if dates.ndim != 1 or dates.size == 0:
            raise ValueError("calendar needs at least one date")
        if not np.all(dates[1:] > dates[:-1]):
            raise ValueError("calendar dates must be strictly increasing")
        months = dates.astype("datetime64[M]").astype(int)
        years = months // 12 + 1970
        qnum = months % 12 // 3 + 1
        labels = np.array([f"{y}Q{q}" for y, q in zip(years, qnum)])
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "quarters", labels)
        object.__setattr__(self, "years", years)

    def __len__(self) -> int:
        return self.dates.size

    def index_of(self, date) -> int:
        idx = int(np.searchsorted(self.dates, np.datetime64(date, "D")))
        if idx >= len(self) or self.dates[idx] != np.datetime64(date, "D"):
            raise KeyError(f"date {date} not in calendar")
        return idx


@dataclass(frozen=True)
class CrisisWindow:
    """Inclusive date window; defaults follow the table-notes timeline."""

    start: np.datetime64
    end: np.datetime64

    def __post_init__(self):
        object.__setattr__(self, "start", np.datetime64(self.start, "D"))
        object.__setattr__(self, "end", np.datetime64(self.end, "D"))
        if self.start > self.end:
            raise ValueError("crisis window start after end")

    def quarters(self) -> tuple[str, str]:
        return quarter_label(self.start), quarter_label(self.end)


DEFAULT_CRISIS = CrisisWindow(np.datetime64("2007-07-01"), np.datetime64("2009-03-31"))


def crisis_indicator(calendar: TradingCalendar, window: CrisisWindow) -> np.ndarray:
    """Per-date boolean: True iff the date lies in [start, end]."""
    d = calendar.dates
    if window.start < d[0] or window.end > d[-1]:
        raise ValueError("crisis window not inside calendar span")
    return (d >= window.start) & (d <= window.end)


def crisis_quarter_mask(quarters: list[str], window: CrisisWindow) -> np.ndarray:
    """Quarter-level crisis dummy: True for quarters intersecting the window."""
    q0, q1 = (quarter_to_int(q) for q in window.quarters())
    return np.array([q0 <= quarter_to_int(q) <= q1 for q in quarters])


# ---------------------------------------------------------------------------
# returns panel
# ---------------------------------------------------------------------------


@dataclass
class ReturnsPanel:
    """Daily returns, dates x sectors, NaN outside a sector's active range.

    financial_id flags the single financial sector; it is None for
    firm-level panels that feed value weighting.
    """

    calendar: TradingCalendar
    sectors: list[str]
    values: np.ndarray  # (T, N) float
    financial_id: Optional[str] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.calendar), len(self.sectors)):
            raise ValueError("values shape does not match calendar/sectors")
        if len(set(self.sectors)) != len(self.sectors):
            raise ValueError("duplicate sector ids")
        if self.financial_id is not None and self.financial_id not in self.sectors:
            raise ValueError(f"financial sector {self.financial_id!r} not in panel")
        for j, sec in enumerate(self.sectors):
            col = self.values[:, j]
            ok = ~np.isnan(col)
            if not ok.any():
                raise ValueError(f"sector {sec!r} has no observations")
            lo, hi = np.flatnonzero(ok)[[0, -1]]
            inside = col[lo : hi + 1]
            if np.isnan(inside).any():
                raise ValueError(f"sector {sec!r} has gaps inside its active range")
            if not np.isfinite(inside).all():
                raise ValueError(f"sector {sec!r} has non-finite returns")

    def column(self, sector: str) -> np.ndarray:
        return self.values[:, self.sectors.index(sector)]

    def pair(self, sector: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Financial and sector series on their joint active dates.

        Returns (fin, other, date_mask) where date_mask indexes the
        panel calendar.
        """
        if self.financial_id is None:
            raise ValueError("panel has no designated financial sector")
        fin = self.column(self.financial_id)
        other = self.column(sector)
        mask = ~np.isnan(fin) & ~np.isnan(other)
        return fin[mask], other[mask], mask

    def non_financial(self) -> list[str]:
        return [s for s in self.sectors if s != self.financial_id]


def load_returns_csv(path, financial_id: Optional[str]) -> ReturnsPanel:
    """Read a `date,sector,return` CSV into a panel on the union calendar."""
    cells: dict[tuple[str, str], float] = {}
    dates: set[str] = set()
    sectors: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:3]] != [
            "date",
            "sector",
            "return",
        ]:
            raise ValueError(f"{path}: expected header 'date,sector,return'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            date, sector, val = row[0].strip(), row[1].strip(), row[2].strip()
            key = (date, sector)
            if key in cells:
                raise ValueError(f"{path}:{lineno}: duplicate observation {key}")
            try:
                cells[key] = float(val)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric return {val!r}") from None
            dates.add(date)
            sectors.add(sector)
    if not cells:
        raise ValueError(f"{path}: no observations")
    cal = TradingCalendar(np.array(sorted(dates), dtype="datetime64[D]"))
    secs = sorted(sectors)
    values = np.full((len(cal), len(secs)), np.nan)
    date_idx = {d: i for i, d in enumerate(sorted(dates))}
    sec_idx = {s: j for j, s in enumerate(secs)}
    for (d, s), v in cells.items():
        values[date_idx[d], sec_idx[s]] = v
    if financial_id is not None and financial_id not in sec_idx:
        raise ValueError(f"financial sector id {financial_id!r} missing from {path}")
    return ReturnsPanel(cal, secs, values, financial_id)


def write_returns_csv(panel: ReturnsPanel, path) -> None:
    """Inverse of load_returns_csv; floats use shortest round-trip repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "sector", "return"])
        dates = panel.calendar.dates.astype(str)
        for i in range(len(panel.calendar)):
            for j, sec in enumerate(panel.sectors):
                v = panel.values[i, j]
                if not np.isnan(v):
                    writer.writerow([dates[i], sec, repr(float(v))])


def value_weighted_returns(
    firm_returns: ReturnsPanel,
    caps: ReturnsPanel,
    industry_map: dict[str, str],
    financial_id: Optional[str] = None,
) -> ReturnsPanel:
    """Aggregate firm returns to industry level, weighting by the previous
    trading day's market cap. The first panel date is dropped (no lagged cap).
    """
    if firm_returns.sectors != caps.sectors or not np.array_equal(
        firm_returns.calendar.dates, caps.calendar.dates
    ):
        raise ValueError("returns and caps must share firms and calendar")
    with np.errstate(invalid="ignore"):
        if np.nanmin(caps.values) < 0:
            raise ValueError("negative market cap")
    firms = firm_returns.sectors
    unknown = [f for f in firms if f not in industry_map]
    if unknown:
        raise ValueError(f"firms missing from industry map: {unknown[:5]}")
    industries = sorted(set(industry_map[f] for f in firms))
    T = len(firm_returns.calendar)
    out = np.full((T - 1, len(industries)), np.nan)
    ret = firm_returns.values
    lag_cap = caps.values[:-1]
    cur = ret[1:]
    for k, ind in enumerate(industries):
        cols = [j for j, f in enumerate(firms) if industry_map[f] == ind]
        r = cur[:, cols]
        w = lag_cap[:, cols].copy()
        active = ~np.isnan(r) & ~np.isnan(w)
        w[~active] = 0.0
        wsum = w.sum(axis=1)
        bad = wsum <= 0
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            date = firm_returns.calendar.dates[1 + i]
            raise ValueError(f"industry {ind!r} has zero total cap on {date}")
        r = np.where(active, r, 0.0)
        out[:, k] = (w * r).sum(axis=1) / wsum
    cal = TradingCalendar(firm_returns.calendar.dates[1:])
    return ReturnsPanel(cal, industries, out, financial_id)


# ---------------------------------------------------------------------------
# winsorization
# ---------------------------------------------------------------------------


def winsorize(values, lower_q: float, upper_q: float) -> np.ndarray:
    """Clamp the lowest floor(lower_q*n) and highest floor((1-upper_q)*n)
    values to the nearest retained order statistic. Order preserved;
    idempotent. NaNs pass through untouched and do not count toward n.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("winsorize: empty input")
    if not (0.0 <= lower_q < upper_q <= 1.0):
        raise ValueError("winsorize: need 0 <= lower_q < upper_q <= 1")
    finite = values[~np.isnan(values)]
    if finite.size == 0:
        return values.copy()
    n = finite.size
    srt = np.sort(finite)
    out = values.copy()
    k_lo = int(math.floor(lower_q * n + 1e-9))
    if lower_q > 0 and k_lo >= 1:
        lo = srt[min(k_lo, n - 1)]
        out = np.where(np.isnan(out), out, np.maximum(out, lo))
    k_hi = int(math.floor((1.0 - upper_q) * n + 1e-9))
    if upper_q < 1 and k_hi >= 1:
        hi = srt[max(n - k_hi - 1, 0)]
        out = np.where(np.isnan(out), out, np.minimum(out, hi))
    return out


# ---------------------------------------------------------------------------
# quarterly accounting rows
# ---------------------------------------------------------------------------

ACCOUNTING_COLUMNS = [
    "firm",
    "industry",
    "quarter",
    "me",
    "be",
    "at",
    "ltd",
    "ltd_iss",
    "ltd_red",
    "capx",
    "ppe",
    "earn",
    "div_flag",
    "age",
    "shares",
    "rf",
    "debt_face",
]


@dataclass
class FirmQuarter:
    """One firm-quarter of accounting data; None marks a missing field."""

    firm: str
    industry: str
    quarter: str
    me: Optional[float] = None  # market equity
    be: Optional[float] = None  # book equity
    at: Optional[float] = None  # total assets
    ltd: Optional[float] = None  # long-term debt
    ltd_iss: Optional[float] = None  # long-term debt issuance
    ltd_red: Optional[float] = None  # long-term debt reduction
    capx: Optional[float] = None  # capital expenditures
    ppe: Optional[float] = None  # property, plant & equipment
    earn: Optional[float] = None  # earnings
    div_flag: Optional[int] = None  # paid dividends this quarter
    age: Optional[float] = None  # firm age in years
    shares: Optional[float] = None  # common shares outstanding
    rf: Optional[float] = None  # annualized risk-free rate
    debt_face: Optional[float] = None  # short + long term debt face value

    def __post_init__(self):
        if self.at is not None and self.at <= 0:
            raise ValueError(f"{self.firm} {self.quarter}: total assets must be > 0")
        if self.ppe is not None and self.ppe < 0:
            raise ValueError(f"{self.firm} {self.quarter}: PPE must be >= 0")
        if self.age is not None and self.age < 0:
            raise ValueError(f"{self.firm} {self.quarter}: age must be >= 0")


def load_accounting_csv(path) -> list[FirmQuarter]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ACCOUNTING_COLUMNS:
            raise ValueError(
                f"{path}: expected header {','.join(ACCOUNTING_COLUMNS)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(ACCOUNTING_COLUMNS):
                raise ValueError(f"{path}:{lineno}: wrong column count")
            vals: dict = {"firm": row[0], "industry": row[1], "quarter": row[2]}
            for name, cell in zip(ACCOUNTING_COLUMNS[3:], row[3:]):
                cell = cell.strip()
                if cell == "":
                    vals[name] = None
                elif name == "div_flag":
                    vals[name] = int(float(cell))
                else:
                    vals[name] = float(cell)
            rows.append(FirmQuarter(**vals))
    return rows


def write_accounting_csv(rows: list[FirmQuarter], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ACCOUNTING_COLUMNS)
        for r in rows:
            out = [r.firm, r.industry, r.quarter]
            for name in ACCOUNTING_COLUMNS[3:]:
                v = getattr(r, name)
                if v is None:
                    out.append("")
                elif name == "div_flag":
                    out.append(str(int(v)))
                else:
                    out.append(repr(float(v)))
            writer.writerow(out)


# ---------------------------------------------------------------------------
# industry-quarter panel
# ---------------------------------------------------------------------------

PANEL_VARIABLES = ["nd", "val", "inv", "volp", "lev", "debt_cost", "ep", "ni", "size"]


@dataclass
class IndustryQuarterPanel:
    """Balanced industry x quarter panel of CCX counts and characteristics.

    data maps each variable name to an (N, T) array; competition holds a
    per-cell class label in {'competitive', 'concentrated', 'middle'}.
    """

    industries: list[str]
    quarters: list[str]
    ccx: np.ndarray  # (N, T) int
    data: dict[str, np.ndarray]
    competition: np.ndarray  # (N, T) object

    def __post_init__(self):
        n, t = len(self.industries), len(self.quarters)
        self.ccx = np.asarray(self.ccx)
        if self.ccx.shape != (n, t):
            raise ValueError("ccx shape mismatch")
        if (self.ccx < 0).any():
            raise ValueError("ccx counts must be >= 0")
        ks = [quarter_to_int(q) for q in self.quarters]
        if ks != list(range(ks[0], ks[0] + t)):
            raise ValueError("quarters must be consecutive and sorted")
        for name, arr in self.data.items():
            if np.asarray(arr).shape != (n, t):
                raise ValueError(f"variable {name!r} shape mismatch")
        if self.competition.shape != (n, t):
            raise ValueError("competition shape mismatch")

    def is_balanced(self, variables) -> bool:
        return all(~np.isnan(self.data[v]).any() for v in variables)

    def subset(self, industries: list[str]) -> "IndustryQuarterPanel":
        idx = [self.industries.index(i) for i in industries]
        return IndustryQuarterPanel(
            industries=list(industries),
            quarters=list(self.quarters),
            ccx=self.ccx[idx],
            data={k: v[idx] for k, v in self.data.items()},
            competition=self.competition[idx],
        )

    def slice_quarters(self, j0: int, j1: int) -> "IndustryQuarterPanel":
        """Quarter range [j0, j1) as a new panel."""
        return IndustryQuarterPanel(
            industries=list(self.industries),
            quarters=self.quarters[j0:j1],
            ccx=self.ccx[:, j0:j1],
            data={k: v[:, j0:j1] for k, v in self.data.items()},
            competition=self.competition[:, j0:j1],
        )

    def complete_span(self, variables) -> tuple[int, int]:
        """Largest trailing [j0, j1) with no missing cells in the given
        variables (rolling-window warm-up trims the early quarters)."""
        t = len(self.quarters)
        ok = np.ones(t, dtype=bool)
        for v in variables:
            ok &= ~np.isnan(self.data[v]).any(axis=0)
        if not ok.any():
            raise ValueError("no quarter has complete data")
        j1 = int(np.flatnonzero(ok)[-1]) + 1
        j0 = j1
        while j0 > 0 and ok[j0 - 1]:
            j0 -= 1
        return j0, j1

    def complete_span_any(self, variables, min_frac: float = 0.5) -> tuple[int, int]:
        """Like complete_span but tolerates a minority of bad industries
        per quarter (callers drop those industries afterwards)."""
        t = len(self.quarters)
        n = len(self.industries)
        good = np.ones((n, t), dtype=bool)
        for v in variables:
            good &= ~np.isnan(self.data[v])
        ok = good.sum(axis=0) >= max(1, int(math.ceil(min_frac * n)))
        if not ok.any():
            raise ValueError("no quarter has enough complete industries")
        j1 = int(np.flatnonzero(ok)[-1]) + 1
        j0 = j1
        while j0 > 0 and ok[j0 - 1]:
            j0 -= 1
        return j0, j1


# ---------------------------------------------------------------------------
# plain-text key = value config files
# ---------------------------------------------------------------------------


def load_config(path) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment; later keys win."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out
