"""Model-independent pricing of exotic options from marginal laws.

Superhedging by martingale optimal transport, with pricing under a
shortfall-risk constraint and quantile hedging built on top of it.
"""

from .errors import *  # noqa: F401,F403
from .marginals import (
    CallCurve,
    ConvexOrderReport,
    MarginalDistribution,
    MarketSpec,
    calibrate_from_calls,
    check_convex_order,
    synth_call_curve,
)
from .payoffs import PathSpace, PayoffSpec, check_growth_bound, evaluate, payoff_vector
from .lp_core import LinearProgram, LpSolution, MartingaleMeasure, build_primal, extract_measure, solve
from .superhedge import HedgePortfolio, PricingReport, evaluate_psi, superhedge_price, verify_superhedge
from .shortfall import (
    ScenarioSet,
    ShortfallReport,
    UtilitySpec,
    jensen_bound_check,
    shortfall_price,
    utility_inverse,
    utility_value,
    verify_shortfall_feasibility,
)
from .quantile import (
    QuantileProblem,
    QuantileReport,
    SuccessSet,
    feasible,
    knockout_price,
    quantile_lower_bound,
    quantile_price_exhaustive,
    quantile_price_greedy,
)

__version__ = "0.1.0"
