"""walklab: simulation and verification of q-fold self-intersection
local times of transient simple random walks on Z^d."""

from .analytic import (
    StrategyCost,
    Subdivision,
    alpha0,
    build_subdivision,
    critical_q,
    crossover,
    dyadic_ladder,
    geometric_moment,
    kappa_predict,
    psi,
    strategy_costs,
)
from .decomposition import (
    DyadicSplit,
    SandwichReport,
    StrandTree,
    build_strand_tree,
    elementary_inequality_check,
    intersection_term,
    quasi_dyadic_split,
    reconstruction_holds,
    split_strands,
    verify_sandwich,
    verify_truncated_sandwich,
)
from .lattice import (
    IncrementSequence,
    RngStream,
    derive_rng_stream,
    generate_increments,
    increments_for,
    positions,
)
from .local_times import (
    LevelSet,
    LocalTimeField,
    accumulate,
    field_from_dict,
    field_to_csv,
    level_set,
    q_norm,
    range_size,
    restricted_q_norm,
    truncated_q_norm,
    visit_counts,
)
from .records import EstimateRecord, TailCurve, config_hash

__version__ = "0.1.0"
