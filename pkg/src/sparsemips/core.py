"""Core sparse-vector types: exact inner products, mass math, CSR file I/O.

A sparse vector is a pair of parallel arrays (dims, vals) sorted by
dimension, with no duplicates and no explicitly stored zeros.  A dataset
is the usual CSR triple (indptr, indices, data) over n rows of dimension
d.  Dimensions are int64 in memory and uint32 on disk; values are
float32 in memory and on disk.  Reductions that feed user-visible
numbers (dot products, masses, cumulative sums) run in float64.
"""
from __future__ import annotations

import dataclasses
from typing import Iterator, Mapping, Sequence

import numpy as np


class FormatError(ValueError):
    """Base class for malformed sparse data, in memory or on disk."""


class HeaderError(FormatError):
    """File header is malformed, truncated, or inconsistent with the payload."""


class IndptrError(FormatError):
    """Row-pointer array is not a valid monotone partition of the entries."""


class IndexRangeError(FormatError):
    """A stored dimension index falls outside [0, d)."""


class RowOrderError(FormatError):
    """Dimension indices inside a row are not strictly increasing."""


class ZeroValueError(FormatError):
    """An explicitly stored zero value was found."""


class SparseVector:
    """One sparse vector: parallel (dims, vals) arrays sorted by dimension."""

    __slots__ = ("dims", "vals")

    def __init__(self, dims, vals, *, validate: bool = True):
        dims = np.ascontiguousarray(dims, dtype=np.int64)
        vals = np.ascontiguousarray(vals, dtype=np.float32)
        if validate:
            if dims.ndim != 1 or vals.ndim != 1 or dims.shape != vals.shape:
                raise FormatError("dims and vals must be 1-d arrays of equal length")
            if dims.size:
                if dims[0] < 0:
                    raise IndexRangeError(f"negative dimension {int(dims[0])}")
                if np.any(np.diff(dims) <= 0):
                    raise RowOrderError("dimensions must be strictly increasing")
            if np.any(vals == 0.0):
                raise ZeroValueError("explicit zeros are not stored")
        self.dims = dims
        self.vals = vals

    @classmethod
    def from_dict(cls, entries: Mapping[int, float]) -> "SparseVector":
        """Build from a {dimension: value} mapping (test and demo convenience)."""
        dims = np.array(sorted(entries), dtype=np.int64)
        vals = np.array([entries[int(j)] for j in dims], dtype=np.float32)
        return cls(dims, vals)

    @classmethod
    def empty(cls) -> "SparseVector":
        return cls(np.empty(0, np.int64), np.empty(0, np.float32), validate=False)

    @property
    def nnz(self) -> int:
        return int(self.dims.size)

    def __len__(self) -> int:
        return int(self.dims.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return np.array_equal(self.dims, other.dims) and np.array_equal(
            self.vals, other.vals
        )

    def __repr__(self) -> str:
        return f"SparseVector(nnz={self.nnz})"


def sparse_dot(a: SparseVector, b: SparseVector) -> float:
    """Inner product over the common dimensions, accumulated in float64.

    Symmetric by construction: the common dimensions are enumerated in
    ascending order regardless of argument order, so sparse_dot(a, b)
    and sparse_dot(b, a) run the identical float operations.
    """
    _, ia, ib = np.intersect1d(a.dims, b.dims, assume_unique=True, return_indices=True)
    if ia.size == 0:
        return 0.0
    prods = a.vals[ia].astype(np.float64) * b.vals[ib].astype(np.float64)
    return float(np.sum(prods))


def mass(x: SparseVector) -> float:
    """Sum of absolute values of the stored entries, in float64."""
    if x.nnz == 0:
        return 0.0
    return float(np.sum(np.abs(x.vals), dtype=np.float64))


def alpha_mass_subvector(x: SparseVector, alpha: float) -> SparseVector:
    """Shortest prefix of the largest-|value| entries reaching alpha * mass(x).

    Entries are ranked by |value| descending, ties broken by ascending
    dimension; the kept entries are returned in dimension order.  The
    cumulative mass is accumulated in float64 in that same descending
    order, so alpha == 1.0 keeps every entry exactly.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if x.nnz == 0 or alpha == 1.0:
        # Full-mass prefix is the whole vector; skip the sort.
        return x
    order = np.lexsort((x.dims, -np.abs(x.vals)))
    cum = np.cumsum(np.abs(x.vals[order]).astype(np.float64))
    r = int(np.searchsorted(cum, alpha * cum[-1], side="left")) + 1
    keep = np.sort(order[: min(r, x.nnz)])
    return SparseVector(x.dims[keep], x.vals[keep], validate=False)


class SparseDataset:
    """n sparse vectors of dimension d in CSR form.  Treated as immutable."""

    __slots__ = ("n", "d", "indptr", "indices", "data", "_row_ids")

    def __init__(self, n: int, d: int, indptr, indices, data, *, validate: bool = True):
        self.n = int(n)
        self.d = int(d)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float32)
        self._row_ids = None
        if validate:
            self.validate()

    def validate(self) -> None:
        """Check the CSR invariants, raising a distinct error per failure kind."""
        if self.n < 0 or self.d < 0:
            raise HeaderError(f"negative shape n={self.n} d={self.d}")
        if self.indptr.shape != (self.n + 1,):
            raise IndptrError(
                f"indptr has length {self.indptr.size}, expected n+1={self.n + 1}"
            )
        if self.indptr[0] != 0:
            raise IndptrError("indptr must start at 0")
        if np.any(np.diff(self.indptr) < 0):
            row = int(np.argmax(np.diff(self.indptr) < 0))
            raise IndptrError(f"indptr decreases at row {row}")
        if self.indptr[-1] != self.indices.size or self.indices.size != self.data.size:
            raise IndptrError(
                f"indptr ends at {int(self.indptr[-1])} but nnz is "
                f"{self.indices.size} indices / {self.data.size} values"
            )
        if self.indices.size:
            bad = (self.indices < 0) | (self.indices >= self.d)
            if np.any(bad):
                pos = int(np.argmax(bad))
                raise IndexRangeError(
                    f"dimension {int(self.indices[pos])} out of range [0, {self.d}) "
                    f"at row {self._row_of(pos)}, offset {pos}"
                )
            # Strict ascent inside each row; row boundaries are exempt.
            diffs = np.diff(self.indices)
            boundary = np.zeros(diffs.size, dtype=bool)
            inner = self.indptr[1:-1]
            inner = inner[(inner > 0) & (inner < self.indices.size)]
            boundary[inner - 1] = True
            bad_order = (diffs <= 0) & ~boundary
            if np.any(bad_order):
                pos = int(np.argmax(bad_order)) + 1
                raise RowOrderError(
                    f"dimensions not strictly increasing at row "
                    f"{self._row_of(pos)}, offset {pos}"
                )
        if np.any(self.data == 0.0):
            pos = int(np.argmax(self.data == 0.0))
            raise ZeroValueError(
                f"stored zero at row {self._row_of(pos)}, offset {pos}"
            )

    def _row_of(self, pos: int) -> int:
        return int(np.searchsorted(self.indptr, pos, side="right")) - 1

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def row_lens(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row_ids(self) -> np.ndarray:
        """Row id of every stored entry, cached after first use."""
        if self._row_ids is None:
            self._row_ids = np.repeat(
                np.arange(self.n, dtype=np.int64), self.row_lens
            )
        return self._row_ids

    def row(self, i: int) -> SparseVector:
        if not 0 <= i < self.n:
            raise IndexError(f"row {i} out of range [0, {self.n})")
        s, e = int(self.indptr[i]), int(self.indptr[i + 1])
        return SparseVector(self.indices[s:e], self.data[s:e], validate=False)

    def rows(self) -> Iterator[SparseVector]:
        for i in range(self.n):
            yield self.row(i)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseDataset):
            return NotImplemented
        return (
            self.n == other.n
            and self.d == other.d
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"SparseDataset(n={self.n}, d={self.d}, nnz={self.nnz})"

    @classmethod
    def from_rows(cls, rows: Sequence, d: int) -> "SparseDataset":
        """Build from SparseVector or {dim: value} rows."""
        vecs = [
            r if isinstance(r, SparseVector) else SparseVector.from_dict(r)
            for r in rows
        ]
        lens = np.array([v.nnz for v in vecs], dtype=np.int64)
        indptr = np.zeros(len(vecs) + 1, dtype=np.int64)
        np.cumsum(lens, out=indptr[1:])
        if vecs:
            indices = np.concatenate([v.dims for v in vecs])
            data = np.concatenate([v.vals for v in vecs])
        else:
            indices = np.empty(0, np.int64)
            data = np.empty(0, np.float32)
        return cls(len(vecs), d, indptr, indices, data)


@dataclasses.dataclass(frozen=True)
class DatasetStats:
    n: int
    d: int
    nnz: int
    avg_nnz: float
    avg_list_len: float
    nonempty_dims: int
    sparsity: float


def dataset_stats(ds: SparseDataset) -> DatasetStats:
    """Aggregate statistics: mean row length, mean inverted-list length, sparsity.

    avg_list_len averages over non-empty dimensions only; sparsity is
    1 - nnz / (n * d), the fraction of the dense grid left unstored.
    """
    if ds.nnz:
        counts = np.bincount(ds.indices, minlength=ds.d)
        nonempty = int(np.count_nonzero(counts))
    else:
        nonempty = 0
    avg_nnz = ds.nnz / ds.n if ds.n else 0.0
    avg_list = ds.nnz / nonempty if nonempty else 0.0
    sparsity = 1.0 - ds.nnz / (ds.n * ds.d) if ds.n and ds.d else 1.0
    return DatasetStats(
        n=ds.n,
        d=ds.d,
        nnz=ds.nnz,
        avg_nnz=avg_nnz,
        avg_list_len=avg_list,
        nonempty_dims=nonempty,
        sparsity=sparsity,
    )


def gen_random(n: int, d: int, nnz_per_vec: int, seed: int) -> SparseDataset:
    """Uniform random dataset: each row gets nnz_per_vec distinct dimensions.

    Values are drawn uniformly from (0, 1], so nothing underflows to a
    stored zero in float32.  Same (n, d, nnz_per_vec, seed) reproduces
    the same dataset byte for byte.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if nnz_per_vec < 0 or nnz_per_vec > d:
        raise ValueError(f"nnz_per_vec must be in [0, d={d}], got {nnz_per_vec}")
    rng = np.random.default_rng(seed)
    indptr = np.arange(n + 1, dtype=np.int64) * nnz_per_vec
    indices = np.empty(n * nnz_per_vec, dtype=np.int64)
    data = np.empty(n * nnz_per_vec, dtype=np.float32)
    for i in range(n):
        s = i * nnz_per_vec
        dims = rng.choice(d, size=nnz_per_vec, replace=False, shuffle=False)
        dims.sort()
        indices[s : s + nnz_per_vec] = dims
        data[s : s + nnz_per_vec] = 1.0 - rng.random(nnz_per_vec)
    return SparseDataset(n, d, indptr, indices, data, validate=False)


# ---------------------------------------------------------------------------
# CSR file format, little-endian throughout:
#   u64 n, u64 d, u64 nnz
#   (n+1) x u64 indptr
#   nnz   x u32 indices
#   nnz   x f32 data

_U64 = np.dtype("<u8")
_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


def save_csr(ds: SparseDataset, path) -> None:
    """Write a dataset to the binary CSR layout described above."""
    ds.validate()
    if ds.indices.size and int(ds.indices.max()) >= 2**32:
        raise IndexRangeError("dimension indices beyond uint32 cannot be saved")
    with open(path, "wb") as f:
        np.array([ds.n, ds.d, ds.nnz], dtype=_U64).tofile(f)
        ds.indptr.astype(_U64).tofile(f)
        ds.indices.astype(_U32).tofile(f)
        ds.data.astype(_F32).tofile(f)


def _take(buf: memoryview, offset: int, dtype: np.dtype, count: int, what: str):
    nbytes = dtype.itemsize * count
    if offset + nbytes > len(buf):
        raise HeaderError(f"truncated file: {what} needs {nbytes} bytes at {offset}")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    return arr, offset + nbytes


def load_csr(path) -> SparseDataset:
    """Read a dataset saved by save_csr, validating every invariant."""
    with open(path, "rb") as f:
        buf = memoryview(f.read())
    header, off = _take(buf, 0, _U64, 3, "header")
    n, d, nnz = (int(v) for v in header)
    indptr, off = _take(buf, off, _U64, n + 1, "indptr")
    indices, off = _take(buf, off, _U32, nnz, "indices")
    data, off = _take(buf, off, _F32, nnz, "data")
    if off != len(buf):
        raise HeaderError(f"trailing data: {len(buf) - off} unexpected bytes")
    if indptr.size and int(indptr[-1]) != nnz:
        raise IndptrError(
            f"header says nnz={nnz} but indptr ends at {int(indptr[-1])}"
        )
    return SparseDataset(n, d, indptr, indices, data, validate=True)
