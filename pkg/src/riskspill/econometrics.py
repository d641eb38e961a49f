"""Panel estimators: Poisson regression with exponential mean via GMM,
Wald and fit statistics, and Prais-Winsten feasible GLS with
panel-corrected standard errors.

The Poisson moment conditions are E[Z'(y - exp(X b))] = 0. Step one
weights moments by inv(Z'Z/n); step two re-weights with the inverse of
the heteroskedasticity-robust moment covariance. Parameter covariance is
always the cluster-robust sandwich with a G/(G-1) small-sample factor.
The default instrument set (second lags of the industry variables plus
the controls and all dummies) is one concrete choice among many the data
cannot distinguish; the just-identified mode (Z = X) reproduces Poisson
pseudo-MLE and anchors the oracle tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .panel import IndustryQuarterPanel, crisis_quarter_mask

DEFAULT_CONTROLS = ("volp", "debt_cost", "ep", "size")


class EstimationError(RuntimeError):
    pass


@dataclass
class PanelDesign:
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    clusters: np.ndarray  # int labels, one per row
    col_names: list[str]
    slope_idx: np.ndarray  # named (non-dummy) columns, intercept excluded
    row_industry: np.ndarray
    row_quarter: np.ndarray

    def __post_init__(self):
        n = self.y.shape[0]
        if not (self.X.shape[0] == self.Z.shape[0] == self.clusters.shape[0] == n):
            raise ValueError("rows misaligned across y/X/Z/clusters")
        if self.Z.shape[1] < self.X.shape[1]:
            raise ValueError("need at least as many instruments as regressors")


@dataclass
class GmmResult:
    coef: np.ndarray
    cov: np.ndarray
    tstats: np.ndarray
    col_names: list[str]
    slope_idx: np.ndarray
    wald_stat: float
    wald_p: float
    pseudo_r2: float
    j_stat: Optional[float]
    j_p: Optional[float]
    n_obs: int
    n_groups: int
    fitted: np.ndarray
    converged: bool

    def by_name(self, name: str) -> tuple[float, float]:
        i = self.col_names.index(name)
        return float(self.coef[i]), float(self.tstats[i])


@dataclass
class PraisWinstenFit:
    coef: np.ndarray
    rho: float
    se: np.ndarray
    tstats: np.ndarray
    r2: float
    col_names: list[str]
    n_obs: int


# ---------------------------------------------------------------------------
# design construction
# ---------------------------------------------------------------------------


def _check_collinear(M: np.ndarray, names, what: str):
    rank = np.linalg.matrix_rank(M)
    if rank < M.shape[1]:
        raise ValueError(f"collinear columns in {what} (rank {rank} < {M.shape[1]})")


def build_design(
    panel: IndustryQuarterPanel,
    variables: Sequence[str],
    split: Sequence[str] = (),
    controls: Sequence[str] = DEFAULT_CONTROLS,
    crisis_quarters: Optional[np.ndarray] = None,
    instruments: str = "lag2",
    keep: Optional[np.ndarray] = None,
) -> PanelDesign:
    """Stack the lagged-regressor design for the count regressions.

    Every X and control enters with a one-quarter lag; variables listed
    in ``split`` are replaced by crisis and non-crisis interactions using
    the crisis dummy at t-1. Industry and time dummies are appended with
    one of each dropped. The first usable quarter drops out through the
    lag (two quarters in lag2-instrument mode, which instruments each
    industry variable with its second lag).

    ``keep`` is an optional (N, T) mask selecting industry-quarters (for
    competition-class subsamples); dummy columns emptied by the mask are
    pruned.
    """
    split = list(split)
    for v in list(variables) + list(controls):
        if v not in panel.data:
            raise ValueError(f"unknown panel variable {v!r}")
    for v in split:
        if v not in variables:
            raise ValueError(f"split variable {v!r} not among regressors")
    if instruments not in ("lag2", "identity"):
        raise ValueError("instruments must be 'lag2' or 'identity'")

    n_ind = len(panel.industries)
    n_q = len(panel.quarters)
    if crisis_quarters is None:
        crisis_quarters = np.zeros(n_q, dtype=bool)
    crisis_quarters = np.asarray(crisis_quarters, dtype=bool)
    if crisis_quarters.shape != (n_q,):
        raise ValueError("crisis_quarters must align with panel quarters")

    lag0 = 2 if instruments == "lag2" else 1
    t_range = range(lag0, n_q)
    used = list(variables) + list(controls)
    for v in used:
        block = panel.data[v][:, lag0 - 1 : n_q - 1]
        if np.isnan(block).any():
            raise ValueError(f"unbalanced panel: variable {v!r} has missing cells")

    def var_columns(t_lag: int) -> tuple[list[str], list[np.ndarray]]:
        names, cols = [], []
        for v in variables:
            x = panel.data[v][:, t_lag]
            if v in split:
                d = 1.0 if crisis_quarters[t_lag] else 0.0
                names += [f"{v}_crisis", f"{v}_noncrisis"]
                cols += [x * d, x * (1.0 - d)]
            else:
                names.append(v)
                cols.append(x)
        for c in controls:
            names.append(c)
            cols.append(panel.data[c][:, t_lag])
        return names, cols

    rows_X, rows_Z, ys, cl, r_ind, r_q = [], [], [], [], [], []
    for t in t_range:
        names1, cols1 = var_columns(t - 1)
        X_t = np.column_stack([np.ones(n_ind)] + cols1)
        if instruments == "lag2":
            names2, cols2 = var_columns(t - 2)
            n_named = len(names1) - len(controls)
            inst_cols = cols2[:n_named] + cols1[n_named:]
            Z_t = np.column_stack([np.ones(n_ind)] + inst_cols)
        else:
            Z_t = X_t
        rows_X.append(X_t)
        rows_Z.append(Z_t)
        ys.append(panel.ccx[:, t].astype(float))
        cl.append(np.arange(n_ind))
        r_ind.append(np.array(panel.industries, dtype=object))
        r_q.append(np.full(n_ind, panel.quarters[t], dtype=object))

    X = np.vstack(rows_X)
    Z = np.vstack(rows_Z)
    y = np.concatenate(ys)
    clusters = np.concatenate(cl)
    row_industry = np.concatenate(r_ind)
    row_quarter = np.concatenate(r_q)
    named = var_columns(lag0 - 1)[0]
    names = ["const"] + named

    # dummies: drop the first industry and the first included quarter
    ind_idx = clusters
    q_labels = [panel.quarters[t] for t in t_range]
    q_idx = np.concatenate([np.full(n_ind, j) for j in range(len(q_labels))])
    dummy_cols, dummy_names = [], []
    for i in range(1, n_ind):
        dummy_cols.append((ind_idx == i).astype(float))
        dummy_names.append(f"ind_{panel.industries[i]}")
    for j in range(1, len(q_labels)):
        dummy_cols.append((q_idx == j).astype(float))
        dummy_names.append(f"q_{q_labels[j]}")
    D = np.column_stack(dummy_cols) if dummy_cols else np.empty((len(y), 0))
    X = np.hstack([X, D])
    Z = np.hstack([Z, D])
    names = names + dummy_names

    if keep is not None:
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != (n_ind, n_q):
            raise ValueError("keep mask must be (industries, quarters)")
        mask = np.concatenate([keep[:, t] for t in t_range])
        X, Z, y = X[mask], Z[mask], y[mask]
        clusters = clusters[mask]
        row_industry, row_quarter = row_industry[mask], row_quarter[mask]
        nonempty = ~np.all(X == 0, axis=0)
        nonempty[: len(named) + 1] = True
        X, Z = X[:, nonempty], Z[:, nonempty]
        names = [nm for nm, k in zip(names, nonempty) if k]

    slope_idx = np.arange(1, 1 + len(named))
    _check_collinear(X, names, "X")
    _check_collinear(Z, names, "Z")
    # relabel clusters to consecutive ints over the remaining industries
    _, clusters = np.unique(clusters, return_inverse=True)
    return PanelDesign(
        y=y,
        X=X,
        Z=Z,
        clusters=clusters,
        col_names=names,
        slope_idx=slope_idx,
        row_industry=row_industry,
        row_quarter=row_quarter,
    )


# ---------------------------------------------------------------------------
# Poisson GMM
# ---------------------------------------------------------------------------


def _cluster_moment_cov(Z, u, clusters):
    n = Z.shape[0]
    zu = Z * u[:, None]
    groups = np.unique(clusters)
    S = np.zeros((Z.shape[1], Z.shape[1]))
    for g in groups:
        s = zu[clusters == g].sum(axis=0)
        S += np.outer(s, s)
    G = groups.size
    factor = G / (G - 1) if G > 1 else 1.0
    return S / n * factor, G


def _gmm_minimize(y, X, Z, W, beta0, max_iter=200, tol=1e-8):
    n = y.shape[0]
    beta = beta0.copy()

    def moments(b):
        eta = X @ b
        with np.errstate(over="ignore"):
            mu = np.exp(eta)
        u = y - mu
        g = Z.T @ u / n
        return g, mu

    def qval(g):
        return float(g @ W @ g)

    g, mu = moments(beta)
    if not np.isfinite(mu).all():
        raise EstimationError("initial mean overflowed")
    q = qval(g)
    for _ in range(max_iter):
        Gd = -(Z.T * mu) @ X / n  # d g / d beta
        grad = 2.0 * Gd.T @ W @ g
        if np.max(np.abs(grad)) < tol:
            return beta, True
        H = Gd.T @ W @ Gd
        try:
            step = np.linalg.solve(H, -(Gd.T @ W @ g))
        except np.linalg.LinAlgError:
            raise EstimationError("singular Gauss-Newton system") from None
        lam = 1.0
        for _ in range(60):
            cand = beta + lam * step
            gc, muc = moments(cand)
            if np.isfinite(muc).all() and np.isfinite(gc).all():
                qc = qval(gc)
                if qc < q:
                    beta, g, mu, q = cand, gc, muc, qc
                    break
            lam *= 0.5
        else:
            # no descent left; accept if the gradient is already tiny
            return beta, np.max(np.abs(grad)) < 1e-6
    Gd = -(Z.T * mu) @ X / n
    grad = 2.0 * Gd.T @ W @ g
    return beta, bool(np.max(np.abs(grad)) < tol)


def poisson_gmm(design: PanelDesign, two_step: bool = True) -> GmmResult:
    """Two-step GMM for the exponential-mean count model.

    Columns of X and Z are standardized internally (regressor scales in
    these panels span several orders of magnitude) and the coefficients
    mapped back, which leaves the moment-condition zeros unchanged.
    Raises EstimationError on non-convergence or a singular weighting
    matrix.
    """
    y = design.y
    if (y < 0).any() or not np.allclose(y, np.round(y)):
        raise ValueError("response must be nonnegative integer counts")
    n, k = design.X.shape
    m = design.Z.shape[1]

    def col_scale(M):
        s = M.std(axis=0)
        s[s < 1e-12] = 1.0
        return s

    sx = col_scale(design.X)
    sz = col_scale(design.Z)
    X = design.X / sx
    Z = design.Z / sz

    ZtZ = Z.T @ Z / n
    try:
        W = np.linalg.inv(ZtZ)
    except np.linalg.LinAlgError:
        raise EstimationError("weighting matrix singular (Z'Z)") from None

    beta0 = np.zeros(k)
    ybar = float(y.mean())
    if ybar > 0:
        beta0[0] = np.log(ybar) * sx[0]
    beta, ok = _gmm_minimize(y, X, Z, W, beta0)
    if not ok:
        raise EstimationError("first GMM step did not converge")

    mu = np.exp(X @ beta)
    u = y - mu
    if two_step and m >= k:
        S_row = (Z * (u**2)[:, None]).T @ Z / n
        try:
            W2 = np.linalg.inv(S_row)
        except np.linalg.LinAlgError:
            raise EstimationError("weighting matrix singular (robust step)") from None
        beta, ok = _gmm_minimize(y, X, Z, W2, beta)
        if not ok:
            raise EstimationError("second GMM step did not converge")
        W = W2
        mu = np.exp(X @ beta)
        u = y - mu

    S_cl, G = _cluster_moment_cov(Z, u, design.clusters)
    Gd = -(Z.T * mu) @ X / n
    A = Gd.T @ W @ Gd
    try:
        A_inv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise EstimationError("singular curvature matrix") from None
    B = Gd.T @ W @ S_cl @ W @ Gd
    cov = A_inv @ B @ A_inv / n
    cov = (cov + cov.T) / 2.0

    # undo the column scaling
    beta = beta / sx
    cov = cov / np.outer(sx, sx)
    mu = np.exp(design.X @ beta)
    u = y - mu

    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstats = np.where(se > 0, beta / se, np.nan)

    wald_stat, wald_p = wald_all_zero_from(beta, cov, design.slope_idx)
    j_stat = j_p = None
    if m > k:
        g = Z.T @ u / n
        try:
            S_inv = np.linalg.inv(S_cl)
            j_stat = float(n * g @ S_inv @ g)
            j_p = float(stats.chi2.sf(j_stat, m - k))
        except np.linalg.LinAlgError:
            pass

    return GmmResult(
        coef=beta,
        cov=cov,
        tstats=tstats,
        col_names=list(design.col_names),
        slope_idx=design.slope_idx,
        wald_stat=wald_stat,
        wald_p=wald_p,
        pseudo_r2=pseudo_r2(y, mu),
        j_stat=j_stat,
        j_p=j_p,
        n_obs=n,
        n_groups=G,
        fitted=mu,
        converged=True,
    )


# ---------------------------------------------------------------------------
# summary statistics
# ---------------------------------------------------------------------------


def economic_impact(b: float, s: float) -> float:
    """Percent change in the expected count for a one-sd regressor move."""
    return (np.exp(b * s) - 1.0) * 100.0


def pseudo_r2(y, fitted) -> float:
    """Squared Pearson correlation of observed and fitted; 0 when either
    vector is constant."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(fitted, dtype=float)
    if y.shape != f.shape:
        raise ValueError("length mismatch")
    if np.ptp(y) == 0 or np.ptp(f) == 0:
        return 0.0
    c = np.corrcoef(y, f)[0, 1]
    return float(c * c)


def wald_all_zero_from(coef, cov, slope_idx) -> tuple[float, float]:
    idx = np.asarray(slope_idx, dtype=int)
    b = coef[idx]
    V = cov[np.ix_(idx, idx)]
    try:
        stat = float(b @ np.linalg.solve(V, b))
    except np.linalg.LinAlgError:
        raise EstimationError("singular covariance block in Wald test") from None
    return stat, float(stats.chi2.sf(stat, idx.size))


def wald_all_zero(result: GmmResult, slope_idx=None) -> float:
    """p-value of the chi-square test that the given slope block is zero."""
    idx = result.slope_idx if slope_idx is None else slope_idx
    return wald_all_zero_from(result.coef, result.cov, idx)[1]


# ---------------------------------------------------------------------------
# Prais-Winsten with panel-corrected standard errors
# ---------------------------------------------------------------------------


def prais_winsten(design: PanelDesign, rho: Optional[float] = None) -> PraisWinstenFit:
    """AR(1) feasible GLS keeping the first observation per panel.

    rho defaults to the pooled OLS-residual autocorrelation (common
    across panels). Standard errors are panel-corrected: contemporaneous
    cross-panel correlation and heteroskedasticity via the Beck-Katz
    estimator, which needs a balanced panel layout.
    """
    y, X, clusters = design.y, design.X, design.clusters
    ids = np.unique(clusters)
    counts = {g: int((clusters == g).sum()) for g in ids}
    T = counts[ids[0]]
    if any(c != T for c in counts.values()):
        raise ValueError("panel-corrected errors need a balanced panel")
    N = ids.size

    beta_ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta_ols
    if rho is None:
        num = den = 0.0
        for g in ids:
            e = resid[clusters == g]
            num += float(e[1:] @ e[:-1])
            den += float(e[:-1] @ e[:-1])
        rho = num / den if den > 0 else 0.0
    if abs(rho) >= 1:
        raise EstimationError(f"estimated AR(1) parameter out of range: {rho:.4f}")

    ys = np.empty_like(y)
    Xs = np.empty_like(X)
    c = np.sqrt(1.0 - rho**2)
    for g in ids:
        sel = np.flatnonzero(clusters == g)
        ys[sel[0]] = c * y[sel[0]]
        Xs[sel[0]] = c * X[sel[0]]
        ys[sel[1:]] = y[sel[1:]] - rho * y[sel[:-1]]
        Xs[sel[1:]] = X[sel[1:]] - rho * X[sel[:-1]]

    beta, _, rank, _ = np.linalg.lstsq(Xs, ys, rcond=None)
    if rank < X.shape[1]:
        raise ValueError("rank-deficient design in Prais-Winsten stage")
    e = ys - Xs @ beta

    # Beck-Katz: Sigma_ij = sum_t e_it e_jt / T, Omega = Sigma kron I_T
    E = np.empty((N, T))
    Xp = np.empty((N, T, X.shape[1]))
    for gi, g in enumerate(ids):
        sel = clusters == g
        E[gi] = e[sel]
        Xp[gi] = Xs[sel]
    Sigma = E @ E.T / T
    XtX_inv = np.linalg.inv(Xs.T @ Xs)
    meat = np.zeros((X.shape[1], X.shape[1]))
    for t in range(T):
        A_t = Xp[:, t, :]  # (N, k)
        meat += A_t.T @ Sigma @ A_t
    cov = XtX_inv @ meat @ XtX_inv
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstats = np.where(se > 0, beta / se, np.nan)

    sst = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - float(e @ e) / sst if sst > 0 else 0.0
    return PraisWinstenFit(
        coef=beta,
        rho=float(rho),
        se=se,
        tstats=tstats,
        r2=r2,
        col_names=list(design.col_names),
        n_obs=y.size,
    )


# ---------------------------------------------------------------------------
# design builder for the distance-to-default regressions
# ---------------------------------------------------------------------------


def build_dd_design(
    dd: np.ndarray,
    dd_fin: np.ndarray,
    panel: IndustryQuarterPanel,
    crisis_quarters: np.ndarray,
    split: bool,
    controls: Sequence[str] = ("volp", "lev", "ep", "size"),
) -> PanelDesign:
    """Design for regressing industry DD on lagged financial DD.

    dd is (N, T) aligned with the panel; dd_fin is (T,). With split the
    financial DD enters separately for crisis and non-crisis quarters
    (dummy at t-1), mirroring the count-model interaction layout.
    """
    n_ind, n_q = dd.shape
    if n_ind != len(panel.industries) or n_q != len(panel.quarters):
        raise ValueError("dd matrix must align with the panel")
    crisis_quarters = np.asarray(crisis_quarters, dtype=bool)
    rows_X, ys, cl, r_ind, r_q = [], [], [], [], []
    for t in range(1, n_q):
        fin = dd_fin[t - 1]
        base = [np.ones(n_ind)]
        if split:
            d = 1.0 if crisis_quarters[t - 1] else 0.0
            base += [np.full(n_ind, fin * (1.0 - d)), np.full(n_ind, fin * d)]
        else:
            base.append(np.full(n_ind, fin))
        for c in controls:
            col = panel.data[c][:, t - 1]
            if np.isnan(col).any():
                raise ValueError(f"unbalanced panel: control {c!r} missing cells")
            base.append(col)
        rows_X.append(np.column_stack(base))
        ys.append(dd[:, t])
        cl.append(np.arange(n_ind))
        r_ind.append(np.array(panel.industries, dtype=object))
        r_q.append(np.full(n_ind, panel.quarters[t], dtype=object))
    X = np.vstack(rows_X)
    y = np.concatenate(ys)
    clusters = np.concatenate(cl)
    names = ["const"] + (
        ["dd_fin_noncrisis", "dd_fin_crisis"] if split else ["dd_fin"]
    ) + list(controls)

    n_named = len(names) - 1
    ind_idx = clusters
    q_idx = np.concatenate([np.full(n_ind, j) for j in range(n_q - 1)])
    dummies, dnames = [], []
    for i in range(1, n_ind):
        dummies.append((ind_idx == i).astype(float))
        dnames.append(f"ind_{panel.industries[i]}")
    # the crisis split of dd_fin spans the time variation of a full set of
    # time dummies; keep the dummies coarse (year) so the slopes identify
    q_labels = panel.quarters[1:]
    years = [q.split("Q")[0] for q in q_labels]
    seen = list(dict.fromkeys(years))
    for yr in seen[1:]:
        col = np.concatenate(
            [np.full(n_ind, 1.0 if years[j] == yr else 0.0) for j in range(n_q - 1)]
        )
        dummies.append(col)
        dnames.append(f"y_{yr}")
    X = np.hstack([X, np.column_stack(dummies)])
    names += dnames
    _check_collinear(X, names, "X")
    return PanelDesign(
        y=y,
        X=X,
        Z=X,
        clusters=clusters,
        col_names=names,
        slope_idx=np.arange(1, 1 + n_named),
        row_industry=np.concatenate(r_ind),
        row_quarter=np.concatenate(r_q),
    )
