"""Predictive Geo-HA arbitration with an adaptive Noisy-OR model."""

from .cascade import CascadeDetector, CascadeObservation, CascadeWindowConfig, FailureEvent, is_cascade
from .estimator import AdaptiveArbiter
from .exceptions import (
    ConfigError,
    ContractViolation,
    GeoHAError,
    MonotonicityError,
    OrderingError,
    QuorumLostError,
    UndefinedRatioError,
)
from .inference import EvidenceVector, InferenceConfig, RiskAssessment, bayesian_update, noisy_or, predict
from .learner import SWITCHOVER, CptEntry, CptStore, LearnerConfig, adaptive_rate, update_cpt
from .pipeline import ArbiterPipeline
from .policy import Decision, DecisionState, Thresholds, decide, threshold_from_costs
from .quorum import Persona, QuorumState, elect, fail_member, rejoin, step_personas
from .simulator import Scenario, Simulator, Strategy, compute_metrics, run_scenario, run_sequence
from .telemetry import DegradationReport, SiteBaseline, TelemetrySample, TelemetryStore, normalize

__version__ = "0.1.0"
