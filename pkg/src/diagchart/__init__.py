"""diagchart: Phase II monitoring of high-dimensional processes with a
diagonal-scaled distance chart, Cornish-Fisher control limits, robust
Phase I estimation, a self-starting procedure, and a Monte Carlo
run-length harness."""

__version__ = "0.1.0"

from .chart import (
    ChartConfig,
    ChartPoint,
    ProcessParameters,
    chart_decision,
    chisq_t2_baseline,
    control_limit,
    evaluate_batch,
    evaluate_point,
    modified_distance,
    nominal_arl0,
    nominal_arl1,
    noncentrality_eta,
    u_statistic,
)
from .core_stats import (
    CovarianceSummary,
    TraceEstimates,
    correction_coefficient,
    correlation,
    estimate_tr_rho2,
    estimate_tr_rho3,
    exact_traces,
    make_trace_estimates,
    sample_covariance,
    sample_mean,
    trace_power,
)
from .cornish_fisher import (
    cf_general,
    cf_quantile_first_order,
    cf_quantile_second_order,
    hermite,
    kappa3,
    kappa4,
    normal_cdf,
    normal_quantile,
    normal_sf,
    weighted_chisq_quantile_oracle,
)
from .pipeline import (
    CleaningReport,
    TransformModel,
    apply_transform,
    fit_transform,
    load_and_clean,
)
from .robust import (
    RobustConfig,
    RobustEstimates,
    concentration_step,
    diagonal_product_objective,
    rmdp_estimate,
    robust_process_parameters,
    trimming_consistency_factor,
)
from .self_starting import (
    MonitorOutcome,
    RunRecord,
    SelfStartState,
    init_state,
    monitor_step,
    refresh_params,
    resume,
    run_stream,
    state_from_json,
    state_to_json,
    update_state,
)
from .simulation import (
    ArlResult,
    ContaminationModel,
    Scenario,
    ShiftModel,
    correlation_matrix,
    correlation_sensitivity,
    known_parameters,
    learning_time_experiment,
    run_arl,
    sample_batch,
    sample_observation,
    shift_for_eta,
)
