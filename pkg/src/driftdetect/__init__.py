"""Bayesian quickest detection of drift changes in multivariate jump-diffusions.

Core pieces: measure-change machinery (`tilt`), the Generalized
Shiryaev-Roberts posterior statistic (`posterior`), the free-boundary alarm
threshold (`freeboundary`), a Monte Carlo validation harness (`simulate`),
and a life-table calibration/detection pipeline (`calibrate`, `pipeline`).
An HTTP service (`driftdetect.service`) and a thin-client CLI wrap them.
"""

__version__ = "0.1.0"

from .calibrate import (
    CalibrationResult,
    MortalitySeries,
    calibrate,
    load_mortality_csv,
    make_synthetic_series,
    residual_series,
)
from .errors import (
    BetaCollision,
    ConfigConflict,
    ConfigError,
    DataError,
    DegenerateSeries,
    DriftDetectError,
    NumericalError,
    PriorExhausted,
    QuadratureFailure,
    TiltInfeasible,
)
from .freeboundary import (
    Z,
    ThresholdSolution,
    integral_reduction,
    jump_generator_assemble,
    solve_threshold,
    y_eval,
)
from .model import (
    ConfigBundle,
    CostSpec,
    JumpSpec,
    ModelSpec,
    PriorSpec,
    ValidationReport,
    load_config,
    parse_config,
    validate,
)
from .pipeline import DetectionReport, emit_plot_data, run_detection
from .posterior import GsrState, generator_apply, gsr_init, gsr_oracle, gsr_run, gsr_step
from .simulate import (
    PathSample,
    RiskEstimate,
    estimate_risk,
    estimate_risk_profile,
    run_threshold_rule,
    sample_path,
    simulate_terminal,
)
from .tilt import (
    PostJumpLaw,
    TiltSolution,
    effective_diffusion,
    log_lr_increment,
    solve_tilt,
    tilted_jump_law,
)
