"""Approximate search: pruned coarse index plus exact reordering.

Build: prune the dataset (mass-ratio by default), index the pruned
copy, keep the original dataset alongside for the reorder stage.
Search: trim the query to its beta-mass prefix, rank gamma coarse
candidates on the pruned index, reorder those candidates by exact
float64 inner products against the original dataset, and return the
top k by (exact score desc, id asc).

Scores returned by search_approx are raw inner products of the
candidates with the full query, not the coarse float32 partial sums.
"""
from __future__ import annotations

import dataclasses
import json
import os
import time

import numpy as np

from .core import SparseDataset, SparseVector, alpha_mass_subvector, load_csr, save_csr
from .index import (
    DEFAULT_WINDOW_SIZE,
    InvertedIndex,
    SearchScratch,
    TopKResult,
    build_full,
    load_index,
    save_index,
    search_full,
)
from .pruning import (
    MassRatio,
    PruneStrategy,
    apply_strategy,
    strategy_from_dict,
    strategy_to_dict,
)

DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 0.2
DEFAULT_GAMMA = 500

_BUNDLE_VERSION = 1
_INDEX_FILE = "index.bin"
_DATA_FILE = "dataset.csr"
_META_FILE = "meta.json"


@dataclasses.dataclass(frozen=True)
class ApproxSearchParams:
    """Per-query knobs: result size k, query mass ratio beta, candidate
    pool size gamma."""

    k: int
    beta: float = DEFAULT_BETA
    gamma: int = DEFAULT_GAMMA

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.gamma < self.k:
            raise ValueError(f"gamma must be >= k, got gamma={self.gamma} k={self.k}")


@dataclasses.dataclass
class ApproxIndex:
    """Coarse index over the pruned dataset plus the original for reordering."""

    index: InvertedIndex
    dataset: SparseDataset
    strategy: PruneStrategy


def build_approx(
    ds: SparseDataset,
    window_size: int = DEFAULT_WINDOW_SIZE,
    alpha: float = DEFAULT_ALPHA,
    strategy: PruneStrategy | None = None,
) -> ApproxIndex:
    """Prune, index the pruned copy, retain the original dataset.

    The default pruning is MassRatio(alpha); pass a strategy to use
    vector-number or list pruning instead, in which case alpha is ignored.
    """
    if strategy is None:
        strategy = MassRatio(alpha)
    pruned = apply_strategy(ds, strategy)
    return ApproxIndex(
        index=build_full(pruned, window_size), dataset=ds, strategy=strategy
    )


def exact_scores(ds: SparseDataset, ids: np.ndarray, q: SparseVector) -> np.ndarray:
    """Float64 inner products of the given rows with q, via a dense gather.

    Per row the products are summed left to right in ascending dimension
    order, the same order sparse_dot enumerates.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return np.empty(0, np.float64)
    qdense = np.zeros(ds.d, dtype=np.float64)
    qdense[q.dims] = q.vals.astype(np.float64)
    starts = ds.indptr[ids]
    lens = ds.indptr[ids + 1] - starts
    total = int(lens.sum())
    scores = np.zeros(ids.size, dtype=np.float64)
    if total == 0:
        return scores
    # Flatten the candidate rows' entry ranges into one position array.
    pos = np.repeat(starts - np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
    pos += np.arange(total, dtype=np.int64)
    contrib = ds.data[pos].astype(np.float64) * qdense[ds.indices[pos]]
    nonempty = np.flatnonzero(lens)
    offsets = np.zeros(nonempty.size, dtype=np.int64)
    np.cumsum(lens[nonempty][:-1], out=offsets[1:])
    scores[nonempty] = np.add.reduceat(contrib, offsets)
    return scores


def search_approx(
    aidx: ApproxIndex,
    q: SparseVector,
    params: ApproxSearchParams,
    scratch: SearchScratch | None = None,
    timing: dict | None = None,
) -> TopKResult:
    """Coarse-rank gamma candidates, reorder them by exact score, return top k.

    With beta=1 and gamma=n over an unpruned build this is exact.  Pass
    a dict as timing to receive coarse_s and reorder_s wall times.
    """
    t0 = time.perf_counter()
    coarse_q = alpha_mass_subvector(q, params.beta)
    coarse = search_full(aidx.index, coarse_q, params.gamma, scratch)
    t1 = time.perf_counter()
    scores = exact_scores(aidx.dataset, coarse.ids, q)
    keep = np.lexsort((coarse.ids, -scores))[: params.k]
    result = TopKResult(coarse.ids[keep], scores[keep])
    t2 = time.perf_counter()
    if timing is not None:
        timing["coarse_s"] = t1 - t0
        timing["reorder_s"] = t2 - t1
    return result


def search_no_reorder(
    aidx: ApproxIndex,
    q: SparseVector,
    beta: float,
    k: int,
    scratch: SearchScratch | None = None,
) -> TopKResult:
    """Ablation path: coarse top-k only, float32 partial scores, no reorder."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    coarse_q = alpha_mass_subvector(q, beta)
    return search_full(aidx.index, coarse_q, k, scratch)


def save_approx(aidx: ApproxIndex, dirpath) -> None:
    """Write the bundle: coarse index, original dataset, strategy metadata."""
    os.makedirs(dirpath, exist_ok=True)
    save_index(aidx.index, os.path.join(dirpath, _INDEX_FILE))
    save_csr(aidx.dataset, os.path.join(dirpath, _DATA_FILE))
    meta = {
        "format_version": _BUNDLE_VERSION,
        "window_size": aidx.index.window_size,
        "strategy": strategy_to_dict(aidx.strategy),
    }
    with open(os.path.join(dirpath, _META_FILE), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_approx(dirpath) -> ApproxIndex:
    """Read a bundle written by save_approx."""
    with open(os.path.join(dirpath, _META_FILE)) as f:
        meta = json.load(f)
    version = meta.get("format_version")
    if version != _BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle format_version {version!r}")
    index = load_index(os.path.join(dirpath, _INDEX_FILE))
    dataset = load_csr(os.path.join(dirpath, _DATA_FILE))
    if index.n != dataset.n or index.d != dataset.d:
        raise ValueError(
            f"bundle mismatch: index is {index.n}x{index.d}, "
            f"dataset is {dataset.n}x{dataset.d}"
        )
    return ApproxIndex(
        index=index, dataset=dataset, strategy=strategy_from_dict(meta["strategy"])
    )
