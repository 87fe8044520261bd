"""Scalar and set-valued shortfall and divergence risk measures on finite probability spaces."""

from .config import DEFAULT_CONFIG, NumericConfig
from .errors import (
    IMPROPER,
    MINUS_INFINITY,
    NOT_FINITE,
    PLUS_INFINITY,
    ConvergenceError,
    PreconditionError,
    Signal,
)
from .loss_div import (
    DivergenceSpec,
    EntropicDivergence,
    ExponentialLoss,
    Interval,
    LossSpec,
    PiecewiseLinearDivergence,
    PiecewiseLinearLoss,
    ScaledPositivePart,
    conjugate,
    eval_loss,
    loss_from_json,
    one_over_dom,
    scaled_divergence_eval,
)
from .market import *  # noqa: F401,F403
from .market import __all__ as _market_all
from .polyhedron import PenaltyValue, Polyhedron, ThresholdData, support_lower
from .prob_core import (
    FiniteProbSpace,
    RandomVector,
    ScenarioTree,
    VectorMeasure,
    expect,
    expect_under,
    node_conditional_expect,
)
from .scalar_risk import *  # noqa: F401,F403
from .scalar_risk import __all__ as _scalar_all
from .set_risk import *  # noqa: F401,F403
from .set_risk import __all__ as _set_all
from .special import *  # noqa: F401,F403
from .special import __all__ as _special_all

__version__ = "0.1.0"

__all__ = sorted(set(
    [
        "DEFAULT_CONFIG", "NumericConfig",
        "IMPROPER", "MINUS_INFINITY", "NOT_FINITE", "PLUS_INFINITY",
        "ConvergenceError", "PreconditionError", "Signal",
        "DivergenceSpec", "EntropicDivergence", "ExponentialLoss", "Interval", "LossSpec",
        "PiecewiseLinearDivergence", "PiecewiseLinearLoss", "ScaledPositivePart",
        "conjugate", "eval_loss", "loss_from_json", "one_over_dom", "scaled_divergence_eval",
        "PenaltyValue", "Polyhedron", "ThresholdData", "support_lower",
        "FiniteProbSpace", "RandomVector", "ScenarioTree", "VectorMeasure",
        "expect", "expect_under", "node_conditional_expect",
    ]
    + list(_market_all) + list(_scalar_all) + list(_set_all) + list(_special_all)
))
