"""Value-storing inverted index over fixed-size id windows, and exact top-k search.

The index holds, per dimension, the (id, value) postings sorted by id and
partitioned into sigma = ceil(n / window_size) windows of window_size
consecutive ids.  Postings store the local slot (id modulo window_size)
so a search can accumulate every window into one shared float32 array of
length window_size and read candidates back out by slot.

Search runs window-major: for each window, multiply each query value
against the value run of its (dimension, window) posting block, add the
products into the shared accumulator at the stored slots, then collect
the window's top candidates and reset the touched prefix.  Per-id
accumulation order is the query's dimension order whatever the window
size, so scores are bit-identical across window sizes.

Result ordering contract everywhere: score descending, id ascending on
ties.  When fewer than k ids score above zero, untouched ids fill the
tail with score 0.0 in ascending id order.
"""
from __future__ import annotations

import dataclasses
from typing import NamedTuple

import numpy as np

from .core import (
    HeaderError,
    IndexRangeError,
    RowOrderError,
    SparseDataset,
    SparseVector,
)

DEFAULT_WINDOW_SIZE = 100_000

_U64 = np.dtype("<u8")
_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


class PostingWindow(NamedTuple):
    """One (dimension, window) posting block: parallel slot/value arrays.

    Slots are strictly increasing local offsets (id modulo window_size),
    each below the window size.
    """

    slots: np.ndarray  # intp
    vals: np.ndarray   # float32


@dataclasses.dataclass
class TopKResult:
    """Search hits: parallel arrays sorted by (score desc, id asc)."""

    ids: np.ndarray  # int64
    scores: np.ndarray  # float32 from index search, float64 after rescoring

    def __len__(self) -> int:
        return int(self.ids.size)

    @classmethod
    def empty(cls) -> "TopKResult":
        return cls(np.empty(0, np.int64), np.empty(0, np.float32))


class InvertedIndex:
    """Windowed inverted index; build with build_full, query with search_full."""

    __slots__ = ("n", "d", "window_size", "sigma", "slots", "vals", "bounds",
                 "list_lens", "max_window_len")

    def __init__(self, n, d, window_size, sigma, slots, vals, bounds, list_lens):
        self.n = int(n)
        self.d = int(d)
        self.window_size = int(window_size)
        self.sigma = int(sigma)
        self.slots = slots          # intp, local slot per posting
        self.vals = vals            # float32 value per posting
        self.bounds = bounds        # int64, flat (d * sigma + 1) window offsets
        self.list_lens = list_lens  # int64 postings per dimension
        if sigma:
            self.max_window_len = int(np.max(np.diff(bounds), initial=0))
        else:
            self.max_window_len = 0

    @property
    def nnz(self) -> int:
        return int(self.slots.size)

    def window(self, dim: int, w: int) -> PostingWindow:
        """Views of one (dimension, window) posting block."""
        if not 0 <= dim < self.d:
            raise IndexError(f"dimension {dim} out of range [0, {self.d})")
        if not 0 <= w < self.sigma:
            raise IndexError(f"window {w} out of range [0, {self.sigma})")
        b = dim * self.sigma + w
        s, e = int(self.bounds[b]), int(self.bounds[b + 1])
        return PostingWindow(self.slots[s:e], self.vals[s:e])

    def __repr__(self) -> str:
        return (
            f"InvertedIndex(n={self.n}, d={self.d}, "
            f"window_size={self.window_size}, sigma={self.sigma}, nnz={self.nnz})"
        )


def build_full(ds: SparseDataset, window_size: int = DEFAULT_WINDOW_SIZE) -> InvertedIndex:
    """Transpose a dataset into the windowed inverted index.

    Equivalent to appending (id, value) to each dimension's list in id
    order and cutting the lists at multiples of window_size; implemented
    as one stable sort by dimension plus a counting pass.
    """
    if window_size < 1:
        raise ValueError(f"window_size must be >= 1, got {window_size}")
    n, d = ds.n, ds.d
    if n:
        window_size = min(window_size, n)  # one window already covers every id
    sigma = -(-n // window_size)  # ceil; 0 when the dataset is empty
    if sigma == 0:
        return InvertedIndex(
            n, d, window_size, 0,
            np.empty(0, np.intp), np.empty(0, np.float32),
            np.zeros(1, np.int64), np.zeros(d, np.int64),
        )
    order = np.argsort(ds.indices, kind="stable")  # rows were id-ascending per dim
    ids = ds.row_ids()[order]
    dims = ds.indices[order]
    win = ids // window_size
    key = dims * sigma + win
    counts = np.bincount(key, minlength=d * sigma)
    bounds = np.zeros(d * sigma + 1, dtype=np.int64)
    np.cumsum(counts, out=bounds[1:])
    slots = (ids - win * window_size).astype(np.intp)
    vals = ds.data[order]
    list_lens = bounds[sigma::sigma].copy()
    list_lens[1:] -= bounds[sigma:-1:sigma]
    return InvertedIndex(n, d, window_size, sigma, slots, vals, bounds, list_lens)


def postings_visited(index: InvertedIndex, q: SparseVector) -> int:
    """Postings a search for q touches: total list length over q's dimensions."""
    qd = q.dims[q.dims < index.d]
    return int(np.sum(index.list_lens[qd], initial=0))


class SearchScratch:
    """Reusable per-thread search buffers: the shared accumulator and a
    product scratch.  Never share one scratch between concurrent searches."""

    __slots__ = ("acc", "prod")

    def __init__(self, window_size: int, max_window_len: int):
        self.acc = np.zeros(window_size, dtype=np.float32)
        self.prod = np.empty(max(max_window_len, 1), dtype=np.float32)

    @classmethod
    def for_index(cls, index: InvertedIndex) -> "SearchScratch":
        return cls(index.window_size, index.max_window_len)


def _window_topk(acc: np.ndarray, limit: int, k: int):
    """Top-k candidates of one window under (score desc, slot asc).

    Returns (slots, scores) unsorted; scores are copies so the caller
    may reset the accumulator.
    """
    a = acc[:limit]
    if limit <= k:
        return np.arange(limit, dtype=np.int64), a.copy()
    kth = np.partition(a, limit - k)[limit - k]
    above = np.flatnonzero(a > kth)     # at most k - 1 entries
    ties = np.flatnonzero(a == kth)[: k - above.size]
    loc = np.concatenate([above, ties])
    return loc, a[loc]


def search_full(
    index: InvertedIndex,
    q: SparseVector,
    k: int,
    scratch: SearchScratch | None = None,
) -> TopKResult:
    """Exact top-k over the whole index by (score desc, id asc).

    Scores are float32 inner products restricted to the query dimensions
    present in the index.  Returns min(k, n) hits; ids the query never
    touches count as score 0.0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if scratch is None:
        scratch = SearchScratch.for_index(index)
    if scratch.acc.size != index.window_size:
        raise ValueError(
            f"scratch sized for window_size={scratch.acc.size}, "
            f"index has {index.window_size}"
        )
    if scratch.prod.size < index.max_window_len:
        raise ValueError("scratch product buffer smaller than the largest window")
    if index.sigma == 0:
        return TopKResult.empty()

    present = q.dims < index.d
    qd = q.dims[present]
    qv = q.vals[present]
    nonempty = index.list_lens[qd] > 0
    qd = qd[nonempty]
    qv = qv[nonempty]

    n, lam, sigma = index.n, index.window_size, index.sigma
    bounds = index.bounds
    bases = qd * sigma
    acc = scratch.acc
    prod = scratch.prod

    best_ids = np.empty(0, np.int64)
    best_scores = np.empty(0, np.float32)
    try:
        for w in range(sigma):
            touched = False
            for t in range(qd.size):
                b = int(bases[t]) + w
                s, e = bounds[b], bounds[b + 1]
                if s == e:
                    continue
                run = prod[: e - s]
                np.multiply(index.vals[s:e], qv[t], out=run)
                acc[index.slots[s:e]] += run
                touched = True
            full = best_ids.size >= k
            if not touched and full and best_scores[-1] >= 0.0:
                continue  # only zero scores here; nothing can displace the heap
            limit = lam if (w + 1) * lam <= n else n - w * lam
            loc, sc = _window_topk(acc, limit, k)
            if touched:
                acc[:limit] = 0.0
            ids = np.concatenate([best_ids, loc + w * lam])
            scores = np.concatenate([best_scores, sc])
            keep = np.lexsort((ids, -scores))[:k]
            best_ids = ids[keep]
            best_scores = scores[keep]
    except Exception:
        acc[:] = 0.0  # keep the scratch reusable after a failed search
        raise
    return TopKResult(best_ids, best_scores)


# ---------------------------------------------------------------------------
# Index file format, little-endian:
#   u64 n, d, window_size, sigma
#   per non-empty dimension, ascending:
#     u32 dim, u32 present_window_count
#     per non-empty window, ascending:
#       u32 w, u64 len, len x u32 slots, len x f32 vals


def save_index(index: InvertedIndex, path) -> None:
    """Write the index; only non-empty dimensions and windows are stored."""
    sigma = index.sigma
    with open(path, "wb") as f:
        f.write(
            np.array(
                [index.n, index.d, index.window_size, max(sigma, 0)], dtype=_U64
            ).tobytes()
        )
        if sigma == 0:
            return
        for dim in np.flatnonzero(index.list_lens):
            lens = np.diff(index.bounds[dim * sigma : (dim + 1) * sigma + 1])
            present = np.flatnonzero(lens)
            f.write(np.array([dim, present.size], dtype=_U32).tobytes())
            for w in present:
                s = int(index.bounds[dim * sigma + w])
                e = s + int(lens[w])
                f.write(np.array([w], dtype=_U32).tobytes())
                f.write(np.array([e - s], dtype=_U64).tobytes())
                f.write(index.slots[s:e].astype(_U32).tobytes())
                f.write(index.vals[s:e].astype(_F32).tobytes())


def load_index(path) -> InvertedIndex:
    """Read an index written by save_index, validating structure throughout."""
    with open(path, "rb") as f:
        buf = memoryview(f.read())

    def take(offset, dtype, count, what):
        nbytes = dtype.itemsize * count
        if offset + nbytes > len(buf):
            raise HeaderError(f"truncated index: {what} needs {nbytes} bytes at {offset}")
        return np.frombuffer(buf, dtype, count=count, offset=offset), offset + nbytes

    header, off = take(0, _U64, 4, "header")
    n, d, window_size, sigma = (int(v) for v in header)
    if window_size < 1:
        raise HeaderError(f"window_size must be >= 1, got {window_size}")
    if sigma != -(-n // window_size):
        raise HeaderError(
            f"sigma={sigma} inconsistent with n={n}, window_size={window_size}"
        )
    counts = np.zeros(d * sigma, dtype=np.int64)
    slot_parts = []
    val_parts = []
    last_dim = -1
    while off < len(buf):
        head, off = take(off, _U32, 2, "dimension header")
        dim, n_windows = int(head[0]), int(head[1])
        if dim <= last_dim or dim >= d:
            raise HeaderError(f"dimension {dim} out of order or out of range")
        last_dim = dim
        last_w = -1
        for _ in range(n_windows):
            warr, off = take(off, _U32, 1, "window id")
            w = int(warr[0])
            if w <= last_w or w >= sigma:
                raise HeaderError(f"window {w} out of order or out of range")
            last_w = w
            larr, off = take(off, _U64, 1, "window length")
            wlen = int(larr[0])
            wslots, off = take(off, _U32, wlen, "slots")
            wvals, off = take(off, _F32, wlen, "values")
            if wlen == 0:
                raise HeaderError(f"empty window {w} stored for dimension {dim}")
            if int(wslots[-1]) >= window_size:
                raise IndexRangeError(
                    f"slot {int(wslots[-1])} outside window_size {window_size}"
                )
            if np.any(np.diff(wslots.astype(np.int64)) <= 0):
                raise RowOrderError(
                    f"slots not strictly increasing in dim {dim} window {w}"
                )
            if w * window_size + int(wslots[-1]) >= n:
                raise IndexRangeError(
                    f"id {w * window_size + int(wslots[-1])} >= n={n} "
                    f"in dim {dim} window {w}"
                )
            counts[dim * sigma + w] = wlen
            slot_parts.append(wslots.astype(np.intp))
            val_parts.append(wvals.astype(np.float32))
    bounds = np.zeros(d * sigma + 1, dtype=np.int64)
    np.cumsum(counts, out=bounds[1:])
    if slot_parts:
        slots = np.concatenate(slot_parts)
        vals = np.concatenate(val_parts)
    else:
        slots = np.empty(0, np.intp)
        vals = np.empty(0, np.float32)
    if sigma:
        list_lens = bounds[sigma::sigma].copy()
        list_lens[1:] -= bounds[sigma:-1:sigma]
    else:
        list_lens = np.zeros(d, np.int64)
    return InvertedIndex(n, d, window_size, sigma, slots, vals, bounds, list_lens)
