"""Sparse-vector maximum inner product search over a windowed inverted index."""

from .core import (
    FormatError,
    HeaderError,
    IndexRangeError,
    IndptrError,
    RowOrderError,
    SparseDataset,
    SparseVector,
    ZeroValueError,
    alpha_mass_subvector,
    dataset_stats,
    gen_random,
    load_csr,
    mass,
    save_csr,
    sparse_dot,
)
from .index import (
    DEFAULT_WINDOW_SIZE,
    InvertedIndex,
    PostingWindow,
    SearchScratch,
    TopKResult,
    build_full,
    load_index,
    postings_visited,
    save_index,
    search_full,
)
from .pruning import (
    ListLength,
    MassRatio,
    PruneErrorReport,
    PruneStrategy,
    VectorNumber,
    apply_strategy,
    computation_reduction,
    inner_product_error,
    prune_list,
    prune_mass_ratio,
    prune_vector_number,
)
from .approx import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_GAMMA,
    ApproxIndex,
    ApproxSearchParams,
    build_approx,
    exact_scores,
    load_approx,
    save_approx,
    search_approx,
    search_no_reorder,
)
from .evaluate import (
    BenchReport,
    GroundTruth,
    SweepPoint,
    WindowModelFit,
    brute_force_topk,
    compute_ground_truth,
    fit_window_model,
    load_ground_truth,
    recall,
    run_bench,
    save_ground_truth,
    sweep_window,
)

__version__ = "0.1.0"
