"""Quasi-static simulator of a four-axis compliant-finger hand doing peg and lid insertion."""

from .compliance import (
    AxisLaw,
    ComplianceState,
    Dropped,
    FingerCompliance,
    MagnetConnector,
    NonConvergence,
    equilibrate,
    load_calibration,
    potential_energy,
    reaction,
)
from .geometry import (
    CrossSection,
    PlanarPose,
    TargetSite,
    contact_set,
    contains_at,
    load_catalog,
    rigid_insertability_limit,
)
from .harness import ExperimentConfig, SuccessMatrix, load_config, render_matrix, run_experiment
from .simulator import TrialOutcome, TrialSpec, plunge_sweep, run_trial

__all__ = [
    "AxisLaw", "ComplianceState", "Dropped", "FingerCompliance", "MagnetConnector",
    "NonConvergence", "equilibrate", "load_calibration", "potential_energy", "reaction",
    "CrossSection", "PlanarPose", "TargetSite", "contact_set", "contains_at", "load_catalog",
    "rigid_insertability_limit", "ExperimentConfig", "SuccessMatrix", "load_config",
    "render_matrix", "run_experiment", "TrialOutcome", "TrialSpec", "plunge_sweep", "run_trial",
]

__version__ = "0.1.0"
