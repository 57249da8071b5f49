"""Exact k-median site selection with minimax-regret guarantees."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapExceededError,
    DataError,
    InfeasibleError,
    SiteMedianError,
    ThresholdError,
    UsageError,
)
from .ingest import ProblemInstance, Role, Site, from_arrays, load_csv, standardize, validate  # noqa: E402
from .metric import (  # noqa: E402
    DistanceMatrix,
    MetricKind,
    MetricSpec,
    check_metric_axioms,
    distance,
    distance_matrix,
    nearest_neighbor,
)
from .randomized import SamplingScheme, verify_lemma3, worst_case_regret  # noqa: E402
from .regret import (  # noqa: E402
    b_constant,
    c_star,
    c_threshold,
    heterogeneity_bounds,
    min_lipschitz,
    regret_bounds,
    regret_lower_bound,
    regret_upper_bound,
    relative_error_bounds,
    sigma_tilde,
    theorem_slack,
    treatment_rule,
)
from .solver import (  # noqa: E402
    Selection,
    Solution,
    enumerate_optima,
    export_ilp,
    objective,
    solve_bnb,
    solve_enumerate,
    solve_facility_location,
)
