"""Posterior beliefs, hiring thresholds and fairness audits for a two-stage
screening pipeline with Gaussian types, exam scores and grades."""

from __future__ import annotations

__version__ = "0.1.0"

from .audit import FairnessReport, SweepResult, SweepTarget, audit, eo_gap, igm_violation, sigm_gap, sweep_impossibility
from .calibration import (
    CalibrationResult,
    PreconditionError,
    calibrate_single_threshold_igm,
    eo_fixed_point_gamma1,
    no_grades_threshold,
    noiseless_rule,
)
from .gauss_core import NEG_INF, POS_INF, GaussianParams, hazard, log_hazard, truncated_mean
from .mc_oracle import McEstimate, UnderSampledError, mc_hire_rate_given_type, mc_mean_given_admission, mc_posterior_mean
from .model import (
    AdmitAll,
    AdmitNone,
    CostSpec,
    GradingPolicy,
    MonotoneStep,
    PopulationPrior,
    Scenario,
    Threshold,
    acceptance_probability,
)
from .posterior import (
    NumericalPathologyError,
    hiring_grade_threshold,
    posterior_mean,
    posterior_moment,
    posterior_moments,
)
from .scenario_io import ScenarioError, load, loads

__all__ = [name for name in dir() if not name.startswith("_")]
