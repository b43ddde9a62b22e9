"""Risk-neutral density estimation from option quotes.

Fits a piecewise-constant density of the log price to market option quotes by
constrained least squares, prices options and variance swaps off the fitted
density, and flags mispriced quotes with leave-one-out bootstrap bands.
"""

from .density import PiecewiseDensity, project_density, read_density, write_density
from .design import DesignSystem, build_design, build_raw, discounted_prices, reduce_design
from .errors import (
    BootstrapUnstableError,
    ExtrapolationError,
    GridError,
    InfeasibleHeightsError,
    InsufficientStrikesError,
    MomentInversionWarning,
    NoTestOptionsError,
    RateGapError,
    RndFitError,
    SolverStalledError,
    ZeroPriceMetricError,
    ZeroPriceWeightError,
)
from .market_data import (
    CALL,
    PUT,
    ChainFilters,
    OptionChain,
    OptionQuote,
    RateCurve,
    bucket_maturity,
    cumulative_rate,
    load_chain,
    market_price,
)
from .mispricing import MispricingReport, bootstrap_ci, leave_one_out, scan_chain
from .pricing import (
    PriceReport,
    build_price_report,
    call_price,
    classify_moneyness,
    error_metrics,
    price_chain,
    put_price,
)
from .solver import FitConfig, FitResult, check_kkt, fit, kkt_residual_for_heights
from .varswap import (
    MomentCurve,
    VarSwapSpec,
    build_curve,
    interp_mean,
    interp_variance,
    iug,
    replicate_from_future,
    second_moment_at,
    varswap_price,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapUnstableError",
    "CALL",
    "ChainFilters",
    "DesignSystem",
    "ExtrapolationError",
    "FitConfig",
    "FitResult",
    "GridError",
    "InfeasibleHeightsError",
    "InsufficientStrikesError",
    "MispricingReport",
    "MomentCurve",
    "MomentInversionWarning",
    "NoTestOptionsError",
    "OptionChain",
    "OptionQuote",
    "PiecewiseDensity",
    "PriceReport",
    "PUT",
    "RateCurve",
    "RateGapError",
    "RndFitError",
    "SolverStalledError",
    "VarSwapSpec",
    "ZeroPriceMetricError",
    "ZeroPriceWeightError",
    "bootstrap_ci",
    "bucket_maturity",
    "build_curve",
    "build_design",
    "build_price_report",
    "build_raw",
    "call_price",
    "check_kkt",
    "classify_moneyness",
    "cumulative_rate",
    "discounted_prices",
    "error_metrics",
    "fit",
    "interp_mean",
    "interp_variance",
    "iug",
    "kkt_residual_for_heights",
    "leave_one_out",
    "load_chain",
    "market_price",
    "price_chain",
    "project_density",
    "put_price",
    "read_density",
    "reduce_design",
    "replicate_from_future",
    "scan_chain",
    "second_moment_at",
    "varswap_price",
    "write_density",
]
