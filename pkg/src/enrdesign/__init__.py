"""Design toolkit for egocentric network-based randomized (ENR) trials.

Computes analytic power, required egonetwork counts, minimum detectable
effects, required network sizes, and optimal allocation probabilities for
tests of individual, spillover, joint, conjunctive, and overall causal
effects, and validates the analytic formulas with a built-in Monte Carlo
simulator.
"""

from .core_model import (
    AltVarianceComponents,
    DesignParams,
    EffectSizes,
    ModelCoefficients,
    VarianceComponents,
    alt_variance_components,
    information_matrix,
    variance_components,
)
from .errors import (
    DegenerateDesign,
    DomainError,
    Infeasible,
    InsufficientData,
    InvalidBracket,
    NoSolution,
    NotFoundWithinBound,
    ZeroEffect,
)
from .power import (
    KRatios,
    SampleSizeResult,
    TestKind,
    TestSpec,
    analytic_power,
    conjunctive_power,
    k_ratios,
    mde,
    optimal_p,
    required_k,
    solve_network_size,
)
from .simulate import (
    AltFit,
    EgoNetworkDataset,
    GlsFit,
    SimulationReport,
    alt_fit,
    dataset_from_csv,
    dataset_to_csv,
    empirical_power,
    estimate_icc,
    generate_dataset,
    gls_fit,
    run_tests,
)

__version__ = "0.1.0"

__all__ = [
    "AltFit",
    "AltVarianceComponents",
    "DegenerateDesign",
    "DesignParams",
    "DomainError",
    "EffectSizes",
    "EgoNetworkDataset",
    "GlsFit",
    "Infeasible",
    "InsufficientData",
    "InvalidBracket",
    "KRatios",
    "ModelCoefficients",
    "NoSolution",
    "NotFoundWithinBound",
    "SampleSizeResult",
    "SimulationReport",
    "TestKind",
    "TestSpec",
    "VarianceComponents",
    "ZeroEffect",
    "alt_fit",
    "alt_variance_components",
    "analytic_power",
    "conjunctive_power",
    "dataset_from_csv",
    "dataset_to_csv",
    "empirical_power",
    "estimate_icc",
    "generate_dataset",
    "gls_fit",
    "information_matrix",
    "k_ratios",
    "mde",
    "optimal_p",
    "required_k",
    "run_tests",
    "solve_network_size",
    "variance_components",
    "__version__",
]
