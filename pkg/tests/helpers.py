"""Pure-python reference implementations used as oracles by the tests.

Everything here works on plain dicts and lists with python floats, no
numpy vectorisation, so the package's array code is checked against an
independently written route.
"""
from __future__ import annotations

import heapq


def as_dict(vec) -> dict:
    """SparseVector to {dim: float}."""
    return {int(j): float(v) for j, v in zip(vec.dims, vec.vals)}


def rows_of(ds) -> list:
    return [as_dict(ds.row(i)) for i in range(ds.n)]


def ref_dot(a: dict, b: dict) -> float:
    """Inner product over sorted common dims, plain float accumulation."""
    total = 0.0
    for j in sorted(a.keys() & b.keys()):
        total += a[j] * b[j]
    return total


def ref_mass(a: dict) -> float:
    return sum(abs(v) for v in a.values())


def ref_alpha_mass(a: dict, alpha: float) -> dict:
    """Shortest largest-|value| prefix reaching alpha * mass, ties to the
    lower dim, accumulated in the same descending order as the library."""
    if not a or alpha == 1.0:
        return dict(a)
    ranked = sorted(a.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    total = sum(abs(v) for _, v in ranked)
    kept, cum = [], 0.0
    for j, v in ranked:
        kept.append(j)
        cum += abs(v)
        if cum >= alpha * total:
            break
    return {j: a[j] for j in sorted(kept)}


def ref_topk(scores: list, k: int) -> list:
    """Top-k ids from a dense score list, score desc then id asc."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


def ref_heap_topk(scores: list, k: int) -> list:
    """Same contract via a bounded min-heap fed in ascending id order.

    The heap key (score, -id) evicts the highest id among tied minima,
    and only a strictly greater score displaces, so the surviving set
    matches ref_topk exactly.
    """
    heap = []  # (score, -id)
    for i, s in enumerate(scores):
        if len(heap) < k:
            heapq.heappush(heap, (s, -i))
        elif s > heap[0][0]:
            heapq.heapreplace(heap, (s, -i))
    out = sorted(((s, -ni) for s, ni in heap), key=lambda t: (-t[0], t[1]))
    return [i for _, i in out]


def ref_transpose(rows: list) -> dict:
    """dim -> [(id, value)] with ids ascending."""
    lists: dict = {}
    for i, row in enumerate(rows):
        for j, v in row.items():
            lists.setdefault(j, []).append((i, v))
    return lists


def ref_windows(rows: list, window_size: int) -> dict:
    """(dim, window) -> [(slot, value)] built by appending in id order."""
    out: dict = {}
    for i, row in enumerate(rows):
        w, slot = divmod(i, window_size)
        for j, v in row.items():
            out.setdefault((j, w), []).append((slot, v))
    return out


def ref_postings_visited(rows: list, qdims, d: int) -> int:
    lists = ref_transpose(rows)
    return sum(len(lists.get(j, [])) for j in set(qdims) if 0 <= j < d)


def ref_prune_vn(row: dict, vn: int) -> dict:
    ranked = sorted(row.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    return dict(sorted(ranked[:vn]))


def ref_prune_list(rows: list, l_max: int) -> list:
    """ListLength pruning on dict rows, ties to the lower id."""
    lists = ref_transpose(rows)
    keep = set()
    for j, postings in lists.items():
        ranked = sorted(postings, key=lambda iv: (-abs(iv[1]), iv[0]))
        for i, _ in ranked[:l_max]:
            keep.add((i, j))
    return [
        {j: v for j, v in row.items() if (i, j) in keep}
        for i, row in enumerate(rows)
    ]


def ref_aggregate_error(rows, pruned_rows, q: dict, pruned_q: dict) -> float:
    """Per-doc route: sum_i [dot(x_i, q) - dot(x_i', q')]."""
    return sum(
        ref_dot(r, q) - ref_dot(rp, pruned_q)
        for r, rp in zip(rows, pruned_rows)
    )


def random_sparse_dict(rng, d: int, max_nnz: int, signed=False) -> dict:
    """Random dict vector for property tests."""
    nnz = int(rng.integers(0, max_nnz + 1))
    dims = rng.choice(d, size=min(nnz, d), replace=False)
    out = {}
    for j in dims:
        v = float(rng.uniform(0.05, 2.0))
        if signed and rng.random() < 0.5:
            v = -v
        out[int(j)] = v
    return out
