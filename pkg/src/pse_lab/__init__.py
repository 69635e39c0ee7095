"""Adaptive estimation of progress-bar duration perception.

Library layout:

- `curves`: the five progress functions and their velocity analysis
- `quest`: grid-based Bayesian staircase for the point of subjective equality
- `observers`: simulated responders and the velocity-anchoring model
- `protocol`: the experiment state machine with persistence
- `service`: HTTP session API over the protocol
- `stats`: summaries, RM-ANOVA, t-tests, Holm correction, rank correlation
- `distributions`: self-contained t and F CDFs
- `plotting`: figure rendering for CLI reports
- `cli`: the `pse-lab` command
"""

__version__ = "0.1.0"

from .curves import CurveId, CurveSpec, NON_CONSTANT_CURVES, default_curves
from .quest import (
    PsychometricParams,
    QuestConfig,
    QuestState,
    Response,
    TrialObservation,
    calibration_offset,
    create_quest,
    estimate_pse,
    next_intensity,
    posterior_sd,
    psi,
    rebuild,
    update,
)
from .stats import BlinkRecord, PseTable, StatsReport, analyze_tables

__all__ = [
    "__version__",
    "CurveId",
    "CurveSpec",
    "NON_CONSTANT_CURVES",
    "default_curves",
    "PsychometricParams",
    "QuestConfig",
    "QuestState",
    "Response",
    "TrialObservation",
    "calibration_offset",
    "create_quest",
    "estimate_pse",
    "next_intensity",
    "posterior_sd",
    "psi",
    "rebuild",
    "update",
    "BlinkRecord",
    "PseTable",
    "StatsReport",
    "analyze_tables",
]
