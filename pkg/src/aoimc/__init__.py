"""Age-of-information toolkit for multi-connectivity short-packet links.

Library layers
--------------
``aoimc.fbl``        finite-blocklength block-error model over Rayleigh/MRC
``aoimc.aoi``        closed-form average AoI/PAoI and the PAoI tail law
``aoimc.sim``        event-driven Monte Carlo oracle of the age sawtooth
``aoimc.optimizer``  EE-PAoI ratio and connection-count selection
``aoimc.control``    LTI plant driven by stale updates (age -> state risk)
``aoimc.config``     named defaults and JSON config round-trip
``aoimc.cli``        sweep/CSV command-line front-end (``aoimc`` entry point)
"""

from .aoi import (
    AoiMetrics,
    TrafficParams,
    arq_nr_gap,
    metrics_arq,
    metrics_kr,
    metrics_nr,
    paoi_cdf,
    paoi_distribution_mean,
    paoi_limits_nr,
    paoi_pdf,
    paoi_violation,
    violation_bounds,
)
from .config import ExperimentConfig
from .control import (
    PlantModel,
    StateTrace,
    aoi_trace_to_steps,
    calibrate_state_threshold,
    control_gain_lsq,
    covariance_from_aoi,
    estimation_error_cov,
    simulate_closed_loop,
)
from .errors import DivergenceError, InfeasibleError, NumericError
from .fbl import (
    FblConfig,
    LinkBudget,
    avg_blep_mrc,
    avg_blep_mrc_real,
    avg_blep_quadrature,
    avg_blep_single,
    blep_instantaneous,
    dbm_to_linear,
    erlang_pdf,
    linear_to_dbm,
    upper_incomplete_gamma_int,
)
from .optimizer import (
    OptimizerParams,
    OptimizerResult,
    ee_paoi_gain,
    ee_paoi_gain_approx,
    ee_paoi_ratio,
    feasible_range,
    max_connections_for_power,
    min_connections_for_risk,
    optimize_dinkelbach,
    optimize_exhaustive,
    snr_threshold,
)
from .sim import (
    SimConfig,
    SimResult,
    empirical_paoi_cdf,
    empirical_violation,
    run_seed,
    simulate,
)

__version__ = "0.1.0"
