"""Evaluation harness: exact oracle, recall, benchmarks, window-size model.

The oracle (brute_force_topk) scans every stored entry of the dataset
with float64 accumulation and never consults an index, so it is a fair
referee for both the exact and the approximate search paths.
"""
from __future__ import annotations

import dataclasses
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit, minimize, nnls

from .approx import ApproxIndex, ApproxSearchParams, search_approx
from .core import HeaderError, SparseDataset, SparseVector, alpha_mass_subvector
from .index import SearchScratch, TopKResult, build_full, postings_visited, search_full

_U64 = np.dtype("<u8")
_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


def brute_force_topk(ds: SparseDataset, q: SparseVector, k: int) -> TopKResult:
    """Exact top-k by full scan: float64 scores, ties to the lower id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    qdense = np.zeros(ds.d, dtype=np.float64)
    qdense[q.dims] = q.vals.astype(np.float64)
    if ds.nnz:
        contrib = ds.data.astype(np.float64) * qdense[ds.indices]
        scores = np.bincount(ds.row_ids(), weights=contrib, minlength=ds.n)
    else:
        scores = np.zeros(ds.n, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")[: min(k, ds.n)]
    return TopKResult(order.astype(np.int64), scores[order])


@dataclasses.dataclass
class GroundTruth:
    """Exact top-k ids and scores for a query set, row per query."""

    ids: np.ndarray      # (nq, k) int64
    scores: np.ndarray   # (nq, k) float

    @property
    def nq(self) -> int:
        return int(self.ids.shape[0])

    @property
    def k(self) -> int:
        return int(self.ids.shape[1])


def compute_ground_truth(ds: SparseDataset, queries: SparseDataset, k: int) -> GroundTruth:
    """Oracle top-k for every query row."""
    if k < 1 or k > ds.n:
        raise ValueError(f"k must be in [1, n={ds.n}], got {k}")
    ids = np.empty((queries.n, k), dtype=np.int64)
    scores = np.empty((queries.n, k), dtype=np.float64)
    for i in range(queries.n):
        r = brute_force_topk(ds, queries.row(i), k)
        ids[i] = r.ids
        scores[i] = r.scores
    return GroundTruth(ids=ids, scores=scores)


# Ground-truth file format, little-endian:
#   u64 nq, u64 k, then per query k x u32 ids followed by k x f32 scores.


def save_ground_truth(gt: GroundTruth, path) -> None:
    nq, k = gt.ids.shape
    rec = np.dtype([("ids", _U32, (k,)), ("scores", _F32, (k,))])
    body = np.empty(nq, dtype=rec)
    body["ids"] = gt.ids
    body["scores"] = gt.scores
    with open(path, "wb") as f:
        f.write(np.array([nq, k], dtype=_U64).tobytes())
        f.write(body.tobytes())


def load_ground_truth(path) -> GroundTruth:
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 16:
        raise HeaderError("truncated ground-truth file: missing header")
    nq, k = (int(v) for v in np.frombuffer(buf, _U64, count=2))
    if k < 1:
        raise HeaderError(f"ground-truth k must be >= 1, got {k}")
    rec = np.dtype([("ids", _U32, (k,)), ("scores", _F32, (k,))])
    expect = 16 + nq * rec.itemsize
    if len(buf) != expect:
        raise HeaderError(
            f"ground-truth file is {len(buf)} bytes, expected {expect}"
        )
    body = np.frombuffer(buf, rec, count=nq, offset=16)
    return GroundTruth(
        ids=body["ids"].astype(np.int64), scores=body["scores"].astype(np.float64)
    )


def recall(
    result: TopKResult,
    truth_ids: np.ndarray,
    truth_scores: np.ndarray | None = None,
    tie_rel: float | None = None,
) -> float:
    """|returned ∩ exact| / |exact|, over the first |exact| returned hits.

    With truth_scores and tie_rel set, a returned id outside the exact
    set still counts when its score ties the exact k-th score within
    tie_rel relative tolerance.
    """
    truth_ids = np.asarray(truth_ids)
    k = int(truth_ids.size)
    if k == 0:
        return 1.0
    got = result.ids[:k]
    hits = int(np.isin(got, truth_ids).sum())
    if tie_rel is not None and truth_scores is not None and result.scores.size:
        kth = float(np.asarray(truth_scores)[k - 1])
        extra = ~np.isin(got, truth_ids)
        if np.any(extra):
            s = result.scores[:k][extra].astype(np.float64)
            denom = np.maximum(np.abs(kth), np.abs(s))
            denom[denom == 0.0] = 1.0
            hits += int(np.sum(np.abs(s - kth) <= tie_rel * denom))
    return hits / k


@dataclasses.dataclass
class BenchReport:
    """One benchmark run: throughput, latency, work, and optional recall."""

    n_queries: int
    threads: int
    k: int
    beta: float
    gamma: int
    wall_s: float
    qps: float
    per_core_qps: float
    mean_latency_ms: float
    p50_latency_ms: float
    mean_postings: float
    recall_at_k: float          # nan when no ground truth was supplied
    result_ids: list            # per query, in query order

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("result_ids")
        return out


def run_bench(
    aidx: ApproxIndex,
    queries: SparseDataset,
    params: ApproxSearchParams,
    threads: int = 1,
    truth: GroundTruth | None = None,
    warmup: bool = True,
) -> BenchReport:
    """Time search_approx over the query set with one scratch per worker.

    Queries are split into contiguous shards, one worker per shard, and
    results are reassembled in query order, so reported results do not
    depend on the thread count.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    if truth is not None and truth.nq != queries.n:
        raise ValueError(
            f"ground truth has {truth.nq} queries, query set has {queries.n}"
        )
    shards = [s for s in np.array_split(np.arange(queries.n), threads) if s.size]

    def work(shard):
        scratch = SearchScratch.for_index(aidx.index)
        ids_out = []
        lat = np.empty(shard.size, dtype=np.float64)
        visited = np.empty(shard.size, dtype=np.int64)
        for j, qi in enumerate(shard):
            q = queries.row(int(qi))
            t0 = time.perf_counter()
            r = search_approx(aidx, q, params, scratch)
            lat[j] = time.perf_counter() - t0
            ids_out.append(r.ids)
            visited[j] = postings_visited(
                aidx.index, alpha_mass_subvector(q, params.beta)
            )
        return ids_out, lat, visited

    with ThreadPoolExecutor(max_workers=threads) as ex:
        if warmup:
            list(ex.map(work, shards))
        t0 = time.perf_counter()
        parts = list(ex.map(work, shards))
        wall = time.perf_counter() - t0

    result_ids = [ids for p in parts for ids in p[0]]
    lat = np.concatenate([p[1] for p in parts]) if parts else np.empty(0)
    visited = np.concatenate([p[2] for p in parts]) if parts else np.empty(0)
    qps = queries.n / wall if wall > 0 else float("inf")
    rec = float("nan")
    if truth is not None and queries.n:
        kk = min(params.k, truth.k)
        vals = [
            recall(TopKResult(result_ids[i], np.empty(0, np.float32)),
                   truth.ids[i, :kk])
            for i in range(queries.n)
        ]
        rec = float(np.mean(vals))
    return BenchReport(
        n_queries=queries.n,
        threads=threads,
        k=params.k,
        beta=params.beta,
        gamma=params.gamma,
        wall_s=wall,
        qps=qps,
        per_core_qps=qps / threads,
        mean_latency_ms=float(lat.mean() * 1e3) if lat.size else 0.0,
        p50_latency_ms=float(np.median(lat) * 1e3) if lat.size else 0.0,
        mean_postings=float(visited.mean()) if visited.size else 0.0,
        recall_at_k=rec,
        result_ids=result_ids,
    )


@dataclasses.dataclass(frozen=True)
class SweepPoint:
    """One window size in a sweep: timings vary, results must not."""

    window_size: int
    sigma: int
    build_s: float
    search_s: float
    qps: float
    mean_postings: float


def sweep_window(
    ds: SparseDataset,
    queries: SparseDataset,
    window_sizes: Sequence[int],
    k: int,
) -> list[SweepPoint]:
    """Time exact search across window sizes on fresh indexes.

    Raises if any window size changes any result, id or score byte;
    search results are a function of the data alone.
    """
    if not window_sizes:
        raise ValueError("window_sizes must be non-empty")
    points = []
    reference = None
    for ws in window_sizes:
        t0 = time.perf_counter()
        index = build_full(ds, ws)
        build_s = time.perf_counter() - t0
        scratch = SearchScratch.for_index(index)
        results = []
        t0 = time.perf_counter()
        for q in queries.rows():
            results.append(search_full(index, q, k, scratch))
        search_s = time.perf_counter() - t0
        blob = b"".join(r.ids.tobytes() + r.scores.tobytes() for r in results)
        if reference is None:
            reference = blob
        elif blob != reference:
            raise RuntimeError(
                f"results changed at window_size={ws}; "
                "window partitioning must not affect output"
            )
        visited = np.mean(
            [postings_visited(index, q) for q in queries.rows()]
        ) if queries.n else 0.0
        points.append(
            SweepPoint(
                window_size=int(ws),
                sigma=index.sigma,
                build_s=build_s,
                search_s=search_s,
                qps=queries.n / search_s if search_s > 0 else float("inf"),
                mean_postings=float(visited),
            )
        )
    return points


@dataclasses.dataclass(frozen=True)
class WindowModelFit:
    """T(w) = rise_coef * w**rise_exp + decay_coef * w**-decay_exp + base.

    The rising term models per-window candidate collection growing with
    window size; the decaying term models per-window overhead shrinking
    as windows get larger; base is size-independent cost.
    """

    rise_coef: float
    rise_exp: float
    decay_coef: float
    decay_exp: float
    base: float
    best_window: float   # argmin of the fitted curve, nan if degenerate

    def predict(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return (
            self.rise_coef * w**self.rise_exp
            + self.decay_coef * w**-self.decay_exp
            + self.base
        )


def _model(w, rise_coef, rise_exp, decay_coef, decay_exp, base):
    return rise_coef * w**rise_exp + decay_coef * w**-decay_exp + base


def _flank_slope(lam: np.ndarray, t: np.ndarray) -> float:
    """log-log slope, for exponent initialisation."""
    if np.unique(lam).size < 2:
        return 1.0
    return float(np.polyfit(np.log(lam), np.log(t), 1)[0])


def fit_window_model(samples: Sequence[tuple[float, float]]) -> WindowModelFit:
    """Fit the two-power cost model to (window_size, seconds) samples.

    Needs at least 5 samples whose window sizes span two decades; times
    must be positive.  The fit weights residuals relative to the sample
    magnitude, which suits multiplicative timing noise.
    """
    samples = list(samples)
    if len(samples) < 5:
        raise ValueError(f"need at least 5 samples, got {len(samples)}")
    lam = np.array([s[0] for s in samples], dtype=np.float64)
    t = np.array([s[1] for s in samples], dtype=np.float64)
    if np.any(lam < 1):
        raise ValueError("window sizes must be >= 1")
    if np.any(t <= 0):
        raise ValueError("times must be positive")
    if np.unique(lam).size < 5 or lam.max() / lam.min() < 100.0:
        raise ValueError("window sizes must span at least two decades")

    order = np.argsort(lam)
    lam, t = lam[order], t[order]
    i0 = int(np.argmin(t))
    rise0 = float(np.clip(_flank_slope(lam[i0:], t[i0:]), 0.05, 5.0))
    decay0 = float(np.clip(-_flank_slope(lam[: i0 + 1], t[: i0 + 1]), 0.05, 5.0))

    # The coefficients enter linearly, so profile them out: search only the
    # two exponents and solve the non-negative least-squares subproblem at
    # each step.  Far better conditioned than a joint 5-parameter descent.
    weights = 1.0 / t

    def profiled_residual(exps):
        rise, decay = exps
        if not (1e-3 <= rise <= 10.0 and 1e-3 <= decay <= 10.0):
            return 1e30
        design = np.column_stack(
            [lam**rise, lam**-decay, np.ones_like(lam)]
        ) * weights[:, None]
        _, resid = nnls(design, t * weights)
        return resid

    opt = minimize(
        profiled_residual, [rise0, decay0], method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000},
    )
    rise0, decay0 = (float(v) for v in np.clip(opt.x, 1e-3, 10.0))
    design = np.column_stack(
        [lam**rise0, lam**-decay0, np.ones_like(lam)]
    ) * weights[:, None]
    coefs, _ = nnls(design, t * weights)
    p0 = [max(coefs[0], 1e-12), rise0, max(coefs[1], 1e-12), decay0, coefs[2]]
    bounds = ([0.0, 1e-3, 0.0, 1e-3, 0.0], [np.inf, 10.0, np.inf, 10.0, np.inf])
    try:
        with warnings.catch_warnings():
            # The covariance estimate is unused; silence its conditioning
            # complaints on rough timing data.
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(
                _model, lam, t, p0=p0, bounds=bounds, sigma=t,
                absolute_sigma=False, maxfev=20000,
            )
    except RuntimeError:
        popt = np.array(p0)  # keep the profiled solution if refinement stalls
    rise_coef, rise_exp, decay_coef, decay_exp, base = (float(v) for v in popt)
    if rise_coef > 0 and decay_coef > 0:
        best = (decay_coef * decay_exp / (rise_coef * rise_exp)) ** (
            1.0 / (rise_exp + decay_exp)
        )
    else:
        best = float("nan")
    return WindowModelFit(
        rise_coef=rise_coef,
        rise_exp=rise_exp,
        decay_coef=decay_coef,
        decay_exp=decay_exp,
        base=base,
        best_window=best,
    )
