"""Counterfactual survival analysis on censored two-period panels.

The package estimates how a treated unit's survival trajectory would have
evolved under control by weighting the curves of donor units that stayed
under control, with weights learned from the pre-period by principal
component regression. It also ships a conditional-hazards route for fully
observed confounders, a latent-factor simulation harness with ground truth,
and metrics plus balance diagnostics for validation studies.
"""

__version__ = "0.1.0"

from .cox import CoxFit, MarginalHazard, cox_fit, marginal_counterfactual_hazard, predict_survival
from .km import StepSurvival, km_fit, subsample_on_grid
from .lowrank import PCRWeights, SVDFactors, pcr_weights, select_rank, svd
from .metrics import ErrorSummary, smd, summarize_errors, sup_norm_error, two_sample_tests
from .panel import (
    CensoredObservation,
    DonorPool,
    PanelDataset,
    load_csv,
    summarize_cells,
    validate_panel,
    write_csv,
)
from .simulate import (
    DGPConfig,
    LatentFactors,
    SyntheticPanel,
    generate_panel,
    oracle_estimate,
    sample_events,
    sample_factors,
    true_survival,
    tune_censoring,
)
from .synth import (
    BootstrapBand,
    CounterfactualEstimate,
    EvaluationGrid,
    bootstrap,
    estimate,
    estimate_from_curves,
    make_grid,
)

__all__ = [
    "__version__",
    "BootstrapBand", "CensoredObservation", "CounterfactualEstimate", "CoxFit",
    "DGPConfig", "DonorPool", "ErrorSummary", "EvaluationGrid", "LatentFactors",
    "MarginalHazard", "PCRWeights", "PanelDataset", "SVDFactors", "StepSurvival",
    "SyntheticPanel", "bootstrap", "cox_fit", "estimate", "estimate_from_curves",
    "generate_panel", "km_fit", "load_csv", "make_grid",
    "marginal_counterfactual_hazard", "oracle_estimate", "pcr_weights",
    "predict_survival", "sample_events", "sample_factors", "select_rank", "smd",
    "subsample_on_grid", "summarize_cells", "summarize_errors", "sup_norm_error",
    "svd", "true_survival", "tune_censoring", "two_sample_tests", "validate_panel",
    "write_csv",
]
