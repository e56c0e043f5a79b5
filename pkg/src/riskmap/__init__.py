"""Discrete risk-level mapping for areal count data.

Counts over a spatial graph are modeled as Poisson draws whose rates are
population size times one of K latent risk levels; the latent class map
follows a pairwise Markov random field that favors equal or nearby risk
levels in neighboring units.  Fitting is mean-field variational EM with
robust multi-start initialization; the number of classes is selected by an
information criterion on the surrogate likelihood.
"""

from .evaluate import (
    EvalReport,
    StudyResult,
    align_classes,
    dice,
    evaluate_fit,
    evaluate_labels,
    replicate_study,
)
from .graph import SelfLoopError, SpatialGraph, build_hex_lattice, load_edge_list, read_edge_csv
from .inference import (
    FitOptions,
    FitResult,
    bic,
    mean_field_estep,
    mean_field_log_likelihood,
    mstep_beta,
    mstep_lambda,
    vem_fit,
)
from .model import (
    LAMBDA_FLOOR,
    DegenerateSpecError,
    HmrfParams,
    InteractionKind,
    InteractionSpec,
    NonFiniteError,
    ObservedData,
    TooLargeError,
    emission_log_pmf,
    exact_oracle,
    interaction_matrix,
    one_hot,
    poisson_log_pmf,
    prior_energy,
)
from .simulate import Scenario, make_blob_scenario, permute_risks, sample_counts
from .strategies import (
    AllRestartsFailedError,
    EmptyPopulationError,
    InitDraw,
    RejectionExhaustedError,
    StrategyKind,
    StrategySpec,
    average_risk,
    draw_rand,
    draw_tra,
    search_run_select,
)

__version__ = "0.1.0"

__all__ = [
    "AllRestartsFailedError",
    "DegenerateSpecError",
    "EmptyPopulationError",
    "EvalReport",
    "FitOptions",
    "FitResult",
    "HmrfParams",
    "InitDraw",
    "InteractionKind",
    "InteractionSpec",
    "LAMBDA_FLOOR",
    "NonFiniteError",
    "ObservedData",
    "RejectionExhaustedError",
    "Scenario",
    "SelfLoopError",
    "SpatialGraph",
    "StrategyKind",
    "StrategySpec",
    "StudyResult",
    "TooLargeError",
    "align_classes",
    "average_risk",
    "bic",
    "build_hex_lattice",
    "dice",
    "draw_rand",
    "draw_tra",
    "emission_log_pmf",
    "evaluate_fit",
    "evaluate_labels",
    "exact_oracle",
    "interaction_matrix",
    "load_edge_list",
    "make_blob_scenario",
    "mean_field_estep",
    "mean_field_log_likelihood",
    "mstep_beta",
    "mstep_lambda",
    "one_hot",
    "permute_risks",
    "poisson_log_pmf",
    "prior_energy",
    "read_edge_csv",
    "replicate_study",
    "sample_counts",
    "search_run_select",
    "vem_fit",
]
