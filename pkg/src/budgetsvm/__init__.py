"""Budgeted online linear SVM with data selection strategies."""
from .basket import (
    Balance,
    Basket,
    BasketEntry,
    Exclude,
    Include,
    OnlineState,
    StrategyConfig,
    apply_ksv,
    choose_removal,
    init_basket,
    needs_retrain,
    process_sample,
    relabel_all,
    should_include,
)
from .errors import InvalidInputError, InvalidStateError, PlanError, UndefinedMetricError
from .model import (
    DualState,
    LinearModel,
    Sample,
    decision_value,
    fit_dcd,
    kkt_violation,
    pa_update,
)

__version__ = "0.1.0"
