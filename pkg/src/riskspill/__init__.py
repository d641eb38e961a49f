"""Financial-sector risk spillover toolkit.

Measures volatility spillovers (two-stage VAR-GARCH), tail-risk
coexceedances with nonparametric inference, industry characteristic
construction, Poisson panel GMM, and Merton distance-to-default panels,
with a synthetic-data oracle that verifies every estimator end to end.
"""

from .garch import (
    GarchFit,
    GarchParams,
    SpilloverFit,
    SpilloverParams,
    fit_garch11,
    fit_spillover,
    garch_filter,
    garch_loglik,
)
from .merton import MertonInputs, MertonSolution, industry_dd, merton_forward, solve_merton
from .panel import (
    CrisisWindow,
    FirmQuarter,
    IndustryQuarterPanel,
    ReturnsPanel,
    TradingCalendar,
    crisis_indicator,
    load_returns_csv,
    value_weighted_returns,
    winsorize,
)
from .tailrisk import (
    CcxSeries,
    ExceedanceSeries,
    LikelihoodReport,
    ccx,
    ccx_lagged,
    ccx_windowed,
    exceedance,
    likelihoods,
    quarterly_counts,
    wilcoxon_one_sided,
)
from .var import VarFit, fit_var, select_lag_bic

__version__ = "0.1.0"
