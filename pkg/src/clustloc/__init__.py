"""Score-based location inference for cluster-correlated multivariate data.

Spatial sign, rank, and signed-rank (plus classical identity) scores with
cluster-robust quadratic-form tests, sign-change and permutation resampling,
estimating-equation location estimates with sandwich covariances, optimal
observation weights, Pitman efficiency curves, and a Monte Carlo study
harness.  The ``clustloc`` console script exposes the same functionality on
files; see the ``cli`` module.
"""

from .design import (
    DataSet,
    Design,
    build_design,
    equivalent_in_structure,
    estimate_rho,
    normalize_weights,
    optimal_weights_one_sample,
    optimal_weights_two_sample,
)
from .efficiency import (
    DesignSpec,
    PopulationModel,
    are_curve,
    default_rho_grid,
    noncentrality_c_sample,
    noncentrality_one_sample,
    score_moments,
)
from .errors import (
    ClustlocError,
    DataFormatError,
    DegenerateDataError,
    DesignError,
    EstimationError,
)
from .location import weighted_geometric_median
from .multisample import (
    c_sample_test,
    design_limits,
    group_centers,
    group_differences,
    pairwise_difference,
    permutation_pvalue,
)
from .numerics import RNG_FAMILY, RandomStream
from .onesample import (
    estimate_bc,
    estimate_location,
    one_sample_test,
    sign_change_pvalue,
)
from .scores import (
    ODD_SCORE_KINDS,
    SCORE_KINDS,
    centered_scores,
    spatial_ranks,
    spatial_sign,
    spatial_signed_ranks,
    spatial_signs,
)
from .sim import (
    DEFAULT_EFFECT_SCALE,
    SimConfig,
    StudyCell,
    default_delta0,
    generate_dataset,
    run_cell,
    run_table,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "DataSet",
    "Design",
    "build_design",
    "equivalent_in_structure",
    "estimate_rho",
    "normalize_weights",
    "optimal_weights_one_sample",
    "optimal_weights_two_sample",
    "DesignSpec",
    "PopulationModel",
    "are_curve",
    "default_rho_grid",
    "noncentrality_c_sample",
    "noncentrality_one_sample",
    "score_moments",
    "ClustlocError",
    "DataFormatError",
    "DegenerateDataError",
    "DesignError",
    "EstimationError",
    "weighted_geometric_median",
    "c_sample_test",
    "design_limits",
    "group_centers",
    "group_differences",
    "pairwise_difference",
    "permutation_pvalue",
    "RNG_FAMILY",
    "RandomStream",
    "estimate_bc",
    "estimate_location",
    "one_sample_test",
    "sign_change_pvalue",
    "ODD_SCORE_KINDS",
    "SCORE_KINDS",
    "centered_scores",
    "spatial_ranks",
    "spatial_sign",
    "spatial_signed_ranks",
    "spatial_signs",
    "DEFAULT_EFFECT_SCALE",
    "SimConfig",
    "StudyCell",
    "default_delta0",
    "generate_dataset",
    "run_cell",
    "run_table",
]
