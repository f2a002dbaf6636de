"""Adaptive invariant Kalman filtering for legged-robot state estimation.

Library layers: ``liegroup`` (group math), ``core`` (generic right-invariant
EKF), ``model`` (legged plant and observations), ``adaptive`` (foot-noise
estimation), ``sliprej`` (slip gate), ``contact`` (contact detection),
``simulator`` (scenario synthesis and log I/O), ``pipeline`` (per-tick
composition), ``harness`` (replay and evaluation), ``cli`` (command line).
"""
from .adaptive import InnovationWindow, estimate_alpha, velocity_innovation
from .contact import ContactFilterConfig, ContactFuser, GaitSchedule, GmResidual
from .core import (
    FilterFaultError,
    FilterState,
    LinearizedDynamics,
    ObservationBlock,
    SingularUpdateError,
    check_group_affine,
    propagate,
    right_invariant_error,
    update,
)
from .harness import (
    EvalReport,
    Variant,
    calibrate_qv,
    emit_traces,
    gait_terrain_table,
    matched_noise,
    noise_sweep,
    preset_scenario,
    replay,
    rmse_metrics,
    run_eval,
)
from .liegroup import (
    GroupState,
    adjoint,
    compose,
    exp_se2n3,
    exp_so3,
    hat_so3,
    inverse,
    log_se2n3,
    log_so3,
)
from .model import ContactVector, ImuSample, LegKinSample, NoiseConfig
from .pipeline import DivergenceError, FilterPipeline, StepDiagnostics
from .simulator import (
    ScenarioConfig,
    SensorStream,
    SlipEvent,
    TruthStream,
    generate,
    read_log,
    seeded_slip_events,
    write_log,
)
from .sliprej import SlipDecision, apply_rejection, mahalanobis

__version__ = "0.1.0"
