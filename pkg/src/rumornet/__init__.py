"""Rumor spreading on messaging-app networks with uncritical senders."""

from .fit import (
    FitError,
    FitResult,
    InferredNetwork,
    fit_curve,
    fit_epsilon_law,
    fit_four_points,
    fit_group_size_cdf,
    fit_power_law,
    fit_usg_polynomials,
    infer_network_params,
)
from .model import (
    TABLE1,
    TABLE2,
    CurveCoefficients,
    GrowthPrediction,
    LawCoefficients,
    RangeWarning,
    UsgPolynomials,
    c_from_initial,
    df_dt,
    epsilon_law,
    eval_F,
    inv_a_law,
    law_coeffs_of_usg,
    predict_curve,
    time_to_fraction,
)
from .netgen import (
    Network,
    PopulationConfig,
    SurveyDistributions,
    build_network,
    group_size_counts,
    p2p_degree_counts,
    validate_network,
)
from .spread import (
    BurnSeries,
    EnsembleSpec,
    SpreadParams,
    SpreadState,
    first_passage,
    run,
    run_ensemble,
    select_seed,
    select_usg,
    step,
)

__version__ = "0.1.0"
