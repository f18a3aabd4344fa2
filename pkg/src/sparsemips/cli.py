"""Command line front end.

Exit codes: 0 success, 2 invalid parameters, 3 file or format problems,
4 unexpected internal error.  Thread count for bench may also come from
the SPARSEMIPS_THREADS environment variable.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .approx import (
    DEFAULT_BETA,
    DEFAULT_GAMMA,
    ApproxSearchParams,
    build_approx,
    load_approx,
    save_approx,
    search_approx,
    search_no_reorder,
)
from .core import FormatError, dataset_stats, gen_random, load_csr, save_csr
from .evaluate import (
    GroundTruth,
    SweepPoint,
    compute_ground_truth,
    fit_window_model,
    load_ground_truth,
    recall,
    run_bench,
    save_ground_truth,
    sweep_window,
)
from .index import DEFAULT_WINDOW_SIZE, SearchScratch, TopKResult
from .pruning import (
    ListLength,
    MassRatio,
    VectorNumber,
    apply_strategy,
    computation_reduction,
    inner_product_error,
    strategy_to_dict,
)


def _emit(payload: dict) -> None:
    payload = {"tool": "sparsemips", "version": __version__, **payload}
    print(json.dumps(payload, sort_keys=True))


def _csv_header(f, command: str, params: dict) -> None:
    echo = " ".join(f"{k}={v}" for k, v in sorted(params.items()))
    f.write(f"# sparsemips {__version__} {command} {echo}\n")


def _parse_grid(text: str, cast) -> list:
    try:
        vals = [cast(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"could not parse list {text!r}")
    if not vals:
        raise ValueError(f"empty list {text!r}")
    return vals


def _strategy_from_args(args) -> object:
    if args.strategy == "mass":
        return MassRatio(args.alpha)
    if args.strategy == "vectors":
        if args.vn is None:
            raise ValueError("--vn is required with --strategy vectors")
        return VectorNumber(args.vn)
    if args.strategy == "lists":
        if args.l_max is None:
            raise ValueError("--l-max is required with --strategy lists")
        return ListLength(args.l_max)
    raise ValueError(f"unknown strategy {args.strategy!r}")


def _cmd_gen(args) -> None:
    ds = gen_random(args.n, args.d, args.nnz, args.seed)
    save_csr(ds, args.out)
    s = dataset_stats(ds)
    _emit({
        "command": "gen", "out": args.out, "n": s.n, "d": s.d, "nnz": s.nnz,
        "seed": args.seed, "sparsity": s.sparsity,
    })


def _cmd_stats(args) -> None:
    ds = load_csr(args.data)
    s = dataset_stats(ds)
    _emit({
        "command": "stats", "data": args.data, "n": s.n, "d": s.d,
        "nnz": s.nnz, "avg_nnz": s.avg_nnz, "avg_list_len": s.avg_list_len,
        "nonempty_dims": s.nonempty_dims, "sparsity": s.sparsity,
    })


def _cmd_groundtruth(args) -> None:
    ds = load_csr(args.data)
    queries = load_csr(args.queries)
    gt = compute_ground_truth(ds, queries, args.k)
    save_ground_truth(gt, args.out)
    _emit({
        "command": "groundtruth", "out": args.out, "n_queries": gt.nq, "k": gt.k,
    })


def _cmd_build(args) -> None:
    ds = load_csr(args.data)
    strategy = _strategy_from_args(args)
    aidx = build_approx(ds, window_size=args.window_size, strategy=strategy)
    save_approx(aidx, args.out)
    _emit({
        "command": "build", "out": args.out, "n": ds.n, "d": ds.d,
        "window_size": args.window_size, "sigma": aidx.index.sigma,
        "strategy": strategy_to_dict(strategy),
        "postings_kept": aidx.index.nnz, "postings_total": ds.nnz,
    })


def _cmd_search(args) -> None:
    aidx = load_approx(args.index)
    queries = load_csr(args.queries)
    params = ApproxSearchParams(k=args.k, beta=args.beta, gamma=args.gamma)
    scratch = SearchScratch.for_index(aidx.index)
    ids = np.zeros((queries.n, args.k), dtype=np.int64)
    scores = np.zeros((queries.n, args.k), dtype=np.float64)
    for i in range(queries.n):
        q = queries.row(i)
        if args.no_reorder:
            r = search_no_reorder(aidx, q, args.beta, args.k, scratch)
        else:
            r = search_approx(aidx, q, params, scratch)
        ids[i, : len(r)] = r.ids
        scores[i, : len(r)] = r.scores
    save_ground_truth(GroundTruth(ids=ids, scores=scores), args.out)
    _emit({
        "command": "search", "out": args.out, "n_queries": queries.n,
        "k": args.k, "beta": args.beta, "gamma": args.gamma,
        "reorder": not args.no_reorder,
    })


def _cmd_bench(args) -> None:
    aidx = load_approx(args.index)
    queries = load_csr(args.queries)
    truth = load_ground_truth(args.truth) if args.truth else None
    params = ApproxSearchParams(k=args.k, beta=args.beta, gamma=args.gamma)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("SPARSEMIPS_THREADS", "1"))
    report = run_bench(aidx, queries, params, threads=threads, truth=truth)
    payload = {"command": "bench", **report.to_dict()}
    _emit(payload)
    if args.csv:
        fields = sorted(report.to_dict())
        with open(args.csv, "w") as f:
            _csv_header(f, "bench", {
                "index": args.index, "queries": args.queries, "threads": threads,
            })
            f.write(",".join(fields) + "\n")
            row = report.to_dict()
            f.write(",".join(str(row[k]) for k in fields) + "\n")


def _cmd_sweep(args) -> None:
    ds = load_csr(args.data)
    queries = load_csr(args.queries)
    sizes = _parse_grid(args.window_sizes, int)
    points = sweep_window(ds, queries, sizes, args.k)
    with open(args.out, "w") as f:
        _csv_header(f, "sweep", {
            "data": args.data, "queries": args.queries, "k": args.k,
        })
        fields = [x.name for x in SweepPoint.__dataclass_fields__.values()]
        f.write(",".join(fields) + "\n")
        for p in points:
            f.write(",".join(str(getattr(p, k)) for k in fields) + "\n")
    payload = {"command": "sweep", "out": args.out, "points": len(points)}
    if args.fit and len(points) >= 5:
        fit = fit_window_model([(p.window_size, p.search_s) for p in points])
        payload["model"] = {
            "rise_coef": fit.rise_coef, "rise_exp": fit.rise_exp,
            "decay_coef": fit.decay_coef, "decay_exp": fit.decay_exp,
            "base": fit.base, "best_window": fit.best_window,
        }
    _emit(payload)


def _cmd_prune_study(args) -> None:
    ds = load_csr(args.data)
    queries = load_csr(args.queries)
    grid_cast = float if args.strategy == "mass" else int
    grid = _parse_grid(args.grid, grid_cast)
    if args.truth:
        truth = load_ground_truth(args.truth)
        if truth.k < args.k:
            raise ValueError(f"ground truth k={truth.k} smaller than --k {args.k}")
    else:
        truth = compute_ground_truth(ds, queries, args.k)
    params = ApproxSearchParams(k=args.k, beta=args.beta, gamma=args.gamma)
    rows = []
    for value in grid:
        if args.strategy == "mass":
            strategy = MassRatio(value)
        elif args.strategy == "vectors":
            strategy = VectorNumber(value)
        else:
            strategy = ListLength(value)
        aidx = build_approx(ds, window_size=args.window_size, strategy=strategy)
        pruned_q = apply_strategy(queries, MassRatio(args.beta))
        reduction = computation_reduction(
            ds, apply_strategy(ds, strategy), queries, pruned_q
        )
        err = inner_product_error(ds, queries, strategy, MassRatio(args.beta))
        scratch = SearchScratch.for_index(aidx.index)
        recalls = []
        t0 = time.perf_counter()
        for i in range(queries.n):
            r = search_approx(aidx, queries.row(i), params, scratch)
            recalls.append(recall(r, truth.ids[i, : args.k]))
        elapsed = time.perf_counter() - t0
        rows.append({
            "strategy": args.strategy, "value": value,
            "recall": float(np.mean(recalls)) if recalls else float("nan"),
            "qps": queries.n / elapsed if elapsed > 0 else float("inf"),
            "computation_reduction": reduction,
            "mean_normalized_error": err.mean_normalized,
            "postings_kept": aidx.index.nnz,
        })
    with open(args.out, "w") as f:
        _csv_header(f, "prune-study", {
            "data": args.data, "queries": args.queries, "k": args.k,
            "beta": args.beta, "gamma": args.gamma,
        })
        fields = list(rows[0])
        f.write(",".join(fields) + "\n")
        for row in rows:
            f.write(",".join(str(row[k]) for k in fields) + "\n")
    _emit({"command": "prune-study", "out": args.out, "points": len(rows)})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sparsemips",
        description="Sparse maximum inner product search over a windowed "
                    "inverted index.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a uniform random CSR dataset")
    g.add_argument("--n", type=int, required=True, help="number of vectors")
    g.add_argument("--d", type=int, required=True, help="dimensionality")
    g.add_argument("--nnz", type=int, required=True, help="entries per vector")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output .csr path")
    g.set_defaults(func=_cmd_gen)

    g = sub.add_parser("stats", help="print dataset statistics as JSON")
    g.add_argument("--data", required=True)
    g.set_defaults(func=_cmd_stats)

    g = sub.add_parser("groundtruth", help="exact top-k by brute force")
    g.add_argument("--data", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_groundtruth)

    g = sub.add_parser("build", help="build an approximate-search bundle")
    g.add_argument("--data", required=True)
    g.add_argument("--out", required=True, help="output bundle directory")
    g.add_argument("--window-size", type=int, default=DEFAULT_WINDOW_SIZE)
    g.add_argument("--strategy", choices=["mass", "vectors", "lists"],
                   default="mass")
    g.add_argument("--alpha", type=float, default=0.5,
                   help="mass ratio for --strategy mass")
    g.add_argument("--vn", type=int, help="entries per vector for --strategy vectors")
    g.add_argument("--l-max", type=int, help="list cap for --strategy lists")
    g.set_defaults(func=_cmd_build)

    g = sub.add_parser("search", help="batch search, results in ground-truth format")
    g.add_argument("--index", required=True, help="bundle directory")
    g.add_argument("--queries", required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--beta", type=float, default=DEFAULT_BETA)
    g.add_argument("--gamma", type=int, default=DEFAULT_GAMMA)
    g.add_argument("--no-reorder", action="store_true",
                   help="return coarse scores without the exact reorder stage")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_search)

    g = sub.add_parser("bench", help="throughput and recall benchmark")
    g.add_argument("--index", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--truth", help="ground-truth file for recall")
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--beta", type=float, default=DEFAULT_BETA)
    g.add_argument("--gamma", type=int, default=DEFAULT_GAMMA)
    g.add_argument("--threads", type=int,
                   help="worker threads (default SPARSEMIPS_THREADS or 1)")
    g.add_argument("--csv", help="also append the report to this CSV file")
    g.set_defaults(func=_cmd_bench)

    g = sub.add_parser("sweep", help="time exact search across window sizes")
    g.add_argument("--data", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--window-sizes", required=True,
                   help="comma separated, e.g. 1000,10000,100000")
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--fit", action="store_true",
                   help="fit the cost model when five or more sizes are given")
    g.add_argument("--out", required=True, help="output CSV path")
    g.set_defaults(func=_cmd_sweep)

    g = sub.add_parser("prune-study", help="recall and error across pruning levels")
    g.add_argument("--data", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--strategy", choices=["mass", "vectors", "lists"],
                   default="mass")
    g.add_argument("--grid", required=True,
                   help="comma separated strategy values, e.g. 0.3,0.5,0.7")
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--beta", type=float, default=DEFAULT_BETA)
    g.add_argument("--gamma", type=int, default=DEFAULT_GAMMA)
    g.add_argument("--window-size", type=int, default=DEFAULT_WINDOW_SIZE)
    g.add_argument("--truth", help="precomputed ground-truth file")
    g.add_argument("--out", required=True, help="output CSV path")
    g.set_defaults(func=_cmd_prune_study)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
