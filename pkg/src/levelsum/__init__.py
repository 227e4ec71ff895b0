"""Sum estimation over vector datasets from logarithmically many retrieved neighbors."""

from .baselines import CombinedEstimate, estimate_combined, estimate_random, estimate_topk
from .estimator import (
    BoundParams,
    EstimateReport,
    compute_bound,
    control_variate_c,
    corrected_estimate,
    estimate_query,
    fast_estimate,
)
from .kernels import ScoreFn, exact_sum, for_dataset, score, scores, similarity_key
from .levels import (
    LevelAssignment,
    LeveledIndex,
    UnionResult,
    assign_levels,
    build,
    load_index,
    save_index,
    union_topk,
)
from .oracle import IvfIndex, ScoredHit, exact_topk, ivf_build, ivf_topk, recall_at_k
from .vecstore import (
    Dataset,
    binary_planted,
    gaussian_clusters,
    gen_synthetic,
    load_vectors,
    save_vectors,
    uniform_sample,
    unit_sphere,
)

__version__ = "0.1.0"
