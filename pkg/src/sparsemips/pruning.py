"""Static pruning strategies and their cost/error accounting.

Three ways to drop low-weight postings before indexing:

* MassRatio: per vector, keep the shortest largest-|value| prefix whose
  mass reaches alpha * mass(vector).
* VectorNumber: per vector, keep the top vn entries by |value|.
* ListLength: per dimension, keep the top l_max entries by |value|.

Ties always break toward ascending dimension (within a vector) or
ascending id (within a list).  Pruning never reorders surviving
entries, so outputs are valid CSR datasets over the same (n, d).
"""
from __future__ import annotations

import dataclasses
from typing import Union

import numpy as np

from .core import SparseDataset, SparseVector, dataset_stats


@dataclasses.dataclass(frozen=True)
class MassRatio:
    """Keep the alpha-mass prefix of each vector."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclasses.dataclass(frozen=True)
class VectorNumber:
    """Keep the vn largest-|value| entries of each vector."""

    vn: int

    def __post_init__(self):
        if self.vn < 1:
            raise ValueError(f"vn must be >= 1, got {self.vn}")


@dataclasses.dataclass(frozen=True)
class ListLength:
    """Keep the l_max largest-|value| postings of each inverted list."""

    l_max: int

    def __post_init__(self):
        if self.l_max < 1:
            raise ValueError(f"l_max must be >= 1, got {self.l_max}")


PruneStrategy = Union[MassRatio, VectorNumber, ListLength]


def _subset(ds: SparseDataset, positions: np.ndarray) -> SparseDataset:
    """Dataset restricted to the given ascending entry positions."""
    kept_rows = ds.row_ids()[positions]
    lens = np.bincount(kept_rows, minlength=ds.n)
    indptr = np.zeros(ds.n + 1, dtype=np.int64)
    np.cumsum(lens, out=indptr[1:])
    return SparseDataset(
        ds.n, ds.d, indptr, ds.indices[positions], ds.data[positions],
        validate=False,
    )


def prune_mass_ratio(ds: SparseDataset, alpha: float) -> SparseDataset:
    """Apply the alpha-mass prefix row by row (alpha 1.0 keeps everything).

    Runs the same ranking and float64 cumulative mass as
    alpha_mass_subvector, so each output row equals
    alpha_mass_subvector(row, alpha) exactly.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if alpha == 1.0 or ds.nnz == 0:
        return ds
    kept = []
    indptr = ds.indptr
    for i in range(ds.n):
        s, e = int(indptr[i]), int(indptr[i + 1])
        if s == e:
            continue
        dims = ds.indices[s:e]
        av = np.abs(ds.data[s:e])
        order = np.lexsort((dims, -av))
        cum = np.cumsum(av[order].astype(np.float64))
        r = int(np.searchsorted(cum, alpha * cum[-1], side="left")) + 1
        kept.append(s + np.sort(order[: min(r, e - s)]))
    positions = np.concatenate(kept) if kept else np.empty(0, np.int64)
    return _subset(ds, positions)


def prune_vector_number(ds: SparseDataset, vn: int) -> SparseDataset:
    """Keep each row's top vn entries by |value|, ties toward lower dimension."""
    if vn < 1:
        raise ValueError(f"vn must be >= 1, got {vn}")
    if ds.nnz == 0 or vn >= int(np.max(ds.row_lens, initial=0)):
        return ds
    order = np.lexsort((ds.indices, -np.abs(ds.data), ds.row_ids()))
    # Primary key is the row id, so sorted entries sit in row blocks of
    # the original lengths; rank inside a block is rank inside the row.
    rank = np.arange(ds.nnz, dtype=np.int64) - np.repeat(ds.indptr[:-1], ds.row_lens)
    positions = np.sort(order[rank < vn])
    return _subset(ds, positions)


def prune_list(ds: SparseDataset, l_max: int) -> SparseDataset:
    """Keep each inverted list's top l_max postings by |value|, ties toward
    lower id."""
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    if ds.nnz == 0:
        return ds
    counts = np.bincount(ds.indices, minlength=ds.d)
    if l_max >= int(counts.max(initial=0)):
        return ds
    order = np.lexsort((ds.row_ids(), -np.abs(ds.data), ds.indices))
    starts = np.zeros(ds.d, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    rank = np.arange(ds.nnz, dtype=np.int64) - np.repeat(starts, counts)
    positions = np.sort(order[rank < l_max])
    return _subset(ds, positions)


def apply_strategy(ds: SparseDataset, strategy: PruneStrategy) -> SparseDataset:
    if isinstance(strategy, MassRatio):
        return prune_mass_ratio(ds, strategy.alpha)
    if isinstance(strategy, VectorNumber):
        return prune_vector_number(ds, strategy.vn)
    if isinstance(strategy, ListLength):
        return prune_list(ds, strategy.l_max)
    raise TypeError(f"unknown pruning strategy {strategy!r}")


def strategy_to_dict(strategy: PruneStrategy) -> dict:
    if isinstance(strategy, MassRatio):
        return {"kind": "mass_ratio", "alpha": strategy.alpha}
    if isinstance(strategy, VectorNumber):
        return {"kind": "vector_number", "vn": strategy.vn}
    if isinstance(strategy, ListLength):
        return {"kind": "list_length", "l_max": strategy.l_max}
    raise TypeError(f"unknown pruning strategy {strategy!r}")


def strategy_from_dict(spec: dict) -> PruneStrategy:
    kind = spec.get("kind")
    if kind == "mass_ratio":
        return MassRatio(float(spec["alpha"]))
    if kind == "vector_number":
        return VectorNumber(int(spec["vn"]))
    if kind == "list_length":
        return ListLength(int(spec["l_max"]))
    raise ValueError(f"unknown pruning strategy kind {kind!r}")


def computation_reduction(
    ds: SparseDataset,
    pruned: SparseDataset,
    queries: SparseDataset,
    pruned_queries: SparseDataset,
) -> float:
    """Drop in expected work per query: avg query length times avg list
    length, before minus after pruning."""
    before = dataset_stats(queries).avg_nnz * dataset_stats(ds).avg_list_len
    after = dataset_stats(pruned_queries).avg_nnz * dataset_stats(pruned).avg_list_len
    return before - after


@dataclasses.dataclass(frozen=True)
class PruneErrorReport:
    """Aggregate inner-product error a pruning pair introduces per query."""

    errors: np.ndarray       # per query: sum over docs of (exact - pruned) dot
    normalized: np.ndarray   # errors / per-query aggregate exact dot
    mean_error: float
    mean_normalized: float


def _column_sums(ds: SparseDataset) -> np.ndarray:
    if ds.nnz == 0:
        return np.zeros(ds.d, dtype=np.float64)
    return np.bincount(
        ds.indices, weights=ds.data.astype(np.float64), minlength=ds.d
    )


def inner_product_error(
    ds: SparseDataset,
    queries: SparseDataset,
    doc_strategy: PruneStrategy,
    query_strategy: PruneStrategy,
) -> PruneErrorReport:
    """Per-query aggregate error sum_i [dot(x_i, q) - dot(x_i', q')].

    Both sums are linear in the documents, so each side collapses to one
    column-sum vector dotted with the (pruned) query; the result is
    exact for the aggregate without touching per-document pairs.
    """
    pruned = apply_strategy(ds, doc_strategy)
    pruned_q = apply_strategy(queries, query_strategy)
    col = _column_sums(ds)
    col_p = _column_sums(pruned)
    nq = queries.n
    errors = np.zeros(nq, dtype=np.float64)
    normalized = np.zeros(nq, dtype=np.float64)
    for i in range(nq):
        q = queries.row(i)
        qp = pruned_q.row(i)
        base = float(np.sum(col[q.dims] * q.vals.astype(np.float64)))
        approx = float(np.sum(col_p[qp.dims] * qp.vals.astype(np.float64)))
        errors[i] = base - approx
        normalized[i] = (base - approx) / base if base != 0.0 else 0.0
    return PruneErrorReport(
        errors=errors,
        normalized=normalized,
        mean_error=float(np.mean(errors)) if nq else 0.0,
        mean_normalized=float(np.mean(normalized)) if nq else 0.0,
    )
