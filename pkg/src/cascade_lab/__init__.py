"""Random multiplicative cascades on complete m-ary trees.

Construction of cascade martingales without self-similarity assumptions,
exact and Monte Carlo moment engines, orbit combinatorics of leaf tuples
under tree automorphisms, and verifiers for the moment-criterion estimates.
"""

from .errors import (
    CascadeLabError,
    ConfigError,
    InconclusiveDataError,
    ResourceCapError,
    UnsupportedLawError,
    VerdictError,
)
from .words import (
    BaseMeasure,
    ROOT,
    TreeShape,
    Word,
    curtail,
    distance,
    is_prefix,
    level_vertices,
    meet,
)
from .laws import (
    ConstantLaw,
    DiscreteLaw,
    LognormalLaw,
    TwoPointLaw,
    WeightLaw,
    WeightModel,
    law_from_json_dict,
)
from .cascade import (
    CascadeRealization,
    MomentOrder,
    PrefixOutcome,
    cascade_mass,
    conditional_mass_expectation,
    conditional_window_expectation,
    exact_moment_discrete,
    exact_moment_integer,
    level_moment_sum,
    mc_mass_table,
    mc_moment,
    outcome_count,
    path_product,
    prefix_atoms,
    sample_realization,
    total_mass,
    window_mass_distribution,
)
from .orbits import (
    CensusReport,
    JoinClass,
    LeafTuple,
    MarkedJoinClass,
    MarkedLeafTuple,
    build_census,
    census_sum_bound,
    canonical_class,
    canonical_marked_class,
    class_members,
    count_classes,
    count_marked_classes,
    enumerate_classes,
    enumerate_marked_classes,
    join_levels,
    join_set,
    marked_census_sum_bound,
    marked_class_members,
    meet_with_spanned_tree,
    orbit_partition,
    partition_count,
    spanned_tree_vertices,
    top_join,
)
from .criteria import (
    CriterionProfile,
    GeometricBound,
    ReportRow,
    VerificationReport,
    criterion_profile,
    fit_geometric_bound,
    marked_representative_of,
    moment_bound_report,
    necessity_check,
    representative_of,
    verify_census_bounds,
    verify_class_bound,
    verify_mass_identity,
    verify_orbit_bound,
    verify_power_bound,
)

__version__ = "0.1.0"
