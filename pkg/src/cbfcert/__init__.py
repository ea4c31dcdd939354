"""Neural discrete-time control barrier functions: synthesis and sample-based certification."""
from .controller import Controller, control_law
from .dynamics import Box, ControlSystem, benchmark_system, make_system, simulate
from .model import CbfModel, load_model, save_model
from .neural import Mlp, lipschitz_upper, spectral_norm
from .probabilistic import ProbReport, kappa, required_samples, verify_probabilistic
from .synthesis import SynthConfig, TrainResult, refine, train, violation_report
from .verifier import (
    LevelSchedule,
    VerificationReport,
    VerifyConfig,
    certify,
    gamma_hat,
    recursion_constants,
    schedule_recursive,
    schedule_uniform,
    verify,
    zeta,
)

__version__ = "0.1.0"
