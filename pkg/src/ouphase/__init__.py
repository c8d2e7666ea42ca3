"""Causal Wiener estimation of an Ornstein-Uhlenbeck optical phase measured
through SU(1,1) (nonlinear) and Mach-Zehnder interferometers: closed-form
tracking/prediction/smoothing errors, gain optimization, time-domain Monte
Carlo validation and a finite-window MMSE oracle."""

from .gain import (
    ReferenceBounds,
    ScalingPoint,
    asymptotic_optimal_gain_sq,
    asymptotic_smoothing_mse,
    asymptotic_tracking_mse,
    optimize_gain,
    reference_bounds,
    scaling_point,
    scaling_sweep,
)
from .interferometers import (
    MZI,
    NLI,
    InterferometerConfig,
    PhotocurrentModel,
    build_photocurrent_model,
    mzi_output_mode_mean,
    nli_output_mode_mean,
    nli_output_mode_variance,
    snr_ratio,
)
from .mse import (
    MseBreakdown,
    fixed_point_tracking_mse,
    lambda_info,
    offset_mse,
    smoothing_floor,
    tracking_mse,
    tracking_mse_mzi,
    tracking_mse_nli,
)
from .ou import PhasePath, ProcessParams, sample_path, step_coefficients
from .presets import ConfigError, ExperimentSpec, preset_defaults, validate_config
from .simulate import (
    EpsilonRecord,
    EstimationReport,
    SimConfig,
    WhitenessResult,
    brute_force_mmse,
    merge_reports,
    run_closed_loop,
    run_replicas,
    whiteness_diagnostic,
)
from .sweeps import run_experiment
from .wiener import (
    ObservationSpectrum,
    SpectralFactor,
    WienerSolution,
    cross_correlation_kdz,
    factorize,
    frequency_grid,
    observation_spectrum,
    realize_impulse_response,
    synthesize,
    whiten_stream,
)

__version__ = "0.1.0"
