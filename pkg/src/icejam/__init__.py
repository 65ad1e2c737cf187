"""Rare-event (ice-jam flood) occurrence modelling: covariates from daily
weather, Firth logistic regression with AICc stepwise selection, parametric
bootstrap, and Monte Carlo projection under climate scenarios."""

__version__ = "0.1.0"

from .bootstrap import BootstrapEnsemble, parametric_bootstrap, percentile_ci, sample_models
from .features import (
    DailyRecord,
    SeasonFeatures,
    SeasonWindow,
    StationSeries,
    degree_days_freezing,
    fill_gaps_precip,
    fill_gaps_temperature,
    first_pc,
    melt_test,
    percent_of_average,
    standardize,
    winter_precip,
)
from .firth import (
    CollinearityError,
    DesignMatrix,
    FittedModel,
    aicc,
    fit_firth,
    logistic,
    logit,
    p_values,
    predict_prob,
)
from .projection import (
    ProbabilityFan,
    ScenarioForcing,
    instantaneous_return_period,
    km_median,
    moving_average_corridor,
    project_probabilities,
    simulate_sequences,
    simulate_summary,
    wait_times,
)
from .selection import compare_combinations, forward_stepwise
