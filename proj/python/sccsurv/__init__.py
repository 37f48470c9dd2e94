"""Two-arm survival and discrete-hazard curves under a single-crossing constraint."""

from ._core import (
    Cohort,
    DiscreteHazards,
    Error,
    InfeasibleConstraintsError,
    InputError,
    SccFit,
    SmoothedHazards,
    SolverFailureError,
    StepSurvival,
    ZeroSurvivalError,
    avg_hazard_ratios,
    bootstrap,
    conditional_survival,
    estimands,
    joint_test,
    kaplan_meier,
    milestone_diff,
    permutation_test,
    rmst,
    rrml,
    scc_fit,
    scc_hazard_fit,
    smooth_hazards,
    surv_at_crossing,
)

__all__ = [
    "Cohort",
    "DiscreteHazards",
    "Error",
    "InfeasibleConstraintsError",
    "InputError",
    "SccFit",
    "SmoothedHazards",
    "SolverFailureError",
    "StepSurvival",
    "ZeroSurvivalError",
    "avg_hazard_ratios",
    "bootstrap",
    "conditional_survival",
    "estimands",
    "joint_test",
    "kaplan_meier",
    "milestone_diff",
    "permutation_test",
    "rmst",
    "rrml",
    "scc_fit",
    "scc_hazard_fit",
    "smooth_hazards",
    "surv_at_crossing",
]
