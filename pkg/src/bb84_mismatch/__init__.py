"""Detector-efficiency-mismatch (faked-state) attacks on a BB84 receiver.

Analytic click/squashing model for a four-detector polarization receiver,
an adversarial optimizer that matches the honest sifted rate while driving
the QBER, a Monte Carlo cross-check, and a CLI for loss sweeps.
"""

__version__ = "0.1.0"

from .attack import (
    EveMeasurementModel,
    GeneralizedStrategy,
    HonestChannel,
    Observables,
    RestrictedStrategy,
    ScramblingPolicy,
    conditional_error,
    conditional_rate,
    honest_baseline,
    honest_baseline_per_pol,
    observables,
    strategy_error,
    strategy_rate,
)
from .config import ConfigError, ScenarioConfig, load_config, parse_loss_range
from .optimizer import (
    CONSTRAINT_MODES,
    OptimizationResult,
    OptimizerConfig,
    STRATEGY_SPACES,
    Scenario,
    SweepPoint,
    objective,
    optimize,
    sweep,
)
from .oracle import (
    ComparisonReport,
    EmpiricalStats,
    TrialConfig,
    compare,
    simulate_protocol,
    simulate_pulse,
    validation_suite,
)
from .receiver import (
    CLICK_MODELS,
    SCRAMBLING_ANGLES,
    EfficiencyMap,
    ReceiverParams,
    basis,
    click_probability,
    conjugate_pair,
    logical_outcome,
    orthogonal,
    overlap_factor,
    raw_click_prob,
    rotate,
    unrotate,
)
from .squashing import (
    DECISIONS,
    basis_prob,
    decision_distribution,
    outcome_prob,
    pattern_probabilities,
)

__all__ = [
    "__version__",
    "CLICK_MODELS",
    "CONSTRAINT_MODES",
    "ComparisonReport",
    "ConfigError",
    "DECISIONS",
    "EfficiencyMap",
    "EmpiricalStats",
    "EveMeasurementModel",
    "GeneralizedStrategy",
    "HonestChannel",
    "Observables",
    "OptimizationResult",
    "OptimizerConfig",
    "ReceiverParams",
    "RestrictedStrategy",
    "SCRAMBLING_ANGLES",
    "STRATEGY_SPACES",
    "Scenario",
    "ScenarioConfig",
    "ScramblingPolicy",
    "SweepPoint",
    "TrialConfig",
    "basis",
    "basis_prob",
    "click_probability",
    "compare",
    "conditional_error",
    "conditional_rate",
    "conjugate_pair",
    "decision_distribution",
    "honest_baseline",
    "honest_baseline_per_pol",
    "load_config",
    "logical_outcome",
    "objective",
    "observables",
    "optimize",
    "orthogonal",
    "outcome_prob",
    "overlap_factor",
    "parse_loss_range",
    "pattern_probabilities",
    "raw_click_prob",
    "rotate",
    "simulate_protocol",
    "simulate_pulse",
    "strategy_error",
    "strategy_rate",
    "sweep",
    "unrotate",
    "validation_suite",
]
