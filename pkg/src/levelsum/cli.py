"""Command line interface: synth, build-index, query, estimate, bound, sweep,
bound-exp, summarize."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, estimator, harness, kernels, levels, oracle, vecstore


def _comma_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _comma_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levelsum")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic vector file")
    p.add_argument("--kind", choices=vecstore.SYNTHETIC_KINDS, default=vecstore.GAUSSIAN_CLUSTER)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=vecstore.FORMATS, default=vecstore.RAW_F32)
    p.add_argument("--n-clusters", type=int, default=8)
    p.add_argument("--cluster-std", type=float, default=0.25)
    p.add_argument("--m", type=int, help="planted inside count (binary-planted)")
    p.add_argument("--radius", type=float, default=1.0, help="planted ball radius")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-index", help="build and persist a leveled index")
    _add_data_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", choices=oracle.ORACLE_KINDS, default=oracle.EXACT)
    p.add_argument("--nlist", type=int)
    p.add_argument("--nprobe", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("query", help="run one union-of-top-k query on a persisted index")
    _add_data_args(p)
    p.add_argument("--index", required=True)
    p.add_argument("--task", choices=kernels.TASKS, required=True)
    p.add_argument("--param", type=float, required=True)
    p.add_argument("--query-id", type=int, help="use this dataset vector as the query")
    p.add_argument("--query", help="comma-separated query components")
    p.add_argument("--k", type=int, help="override the index k")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("estimate", help="end-to-end sum estimate for one query")
    _add_data_args(p)
    p.add_argument("--index", help="persisted index (default: build in memory)")
    p.add_argument("--task", choices=kernels.TASKS, required=True)
    p.add_argument("--param", type=float, required=True)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", choices=oracle.ORACLE_KINDS, default=oracle.EXACT)
    p.add_argument("--nlist", type=int)
    p.add_argument("--nprobe", type=int)
    p.add_argument("--delta", type=float, help="also report the error bound at this delta")
    p.add_argument("--corrected", action="store_true")
    p.add_argument("--trace-out", help="write the per-hit (id,f,level,p) trace CSV here")
    p.add_argument("--query-id", type=int, help="use this dataset vector as the query")
    p.add_argument("--query", help="comma-separated query components")
    p.add_argument("--with-exact", action="store_true", help="also run the full scan")
    p.add_argument(
        "--method",
        choices=harness.METHODS,
        default=harness.OURS,
        help="estimator to run (baselines use --k/--m)",
    )
    p.add_argument("--m", type=int, help="sample size for random/combined")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bound", help="print the (l*, b, relative-error bound) for n, k, delta")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="run an experiment sweep from a TOML/JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--task", choices=kernels.TASKS)
    p.add_argument("--params", help="comma list of task parameters")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--oracle", choices=oracle.ORACLE_KINDS)
    p.add_argument("--nlist", type=int)
    p.add_argument("--nprobe", type=int)
    p.add_argument("--n-queries", type=int)
    p.add_argument("--scale", type=float)
    p.add_argument("--method", choices=harness.METHODS, help="replace the config methods")
    p.add_argument("--k", help="comma list of k for --method")
    p.add_argument("--m", help="comma list of m for --method")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bound-exp", help="synthetic 0/1 experiment vs the analytic bound")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m-list", required=True, help="comma list of planted counts")
    p.add_argument("--k", type=int, default=200)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bound_exp)

    p = sub.add_parser("summarize", help="aggregate a results CSV into summary CSV+JSON")
    p.add_argument("--results", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_summarize)

    return parser


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="vector file path")
    p.add_argument("--format", choices=vecstore.FORMATS, default=vecstore.RAW_F32)


def _load_data(args) -> vecstore.Dataset:
    return vecstore.load_vectors(args.data, args.format)


def _resolve_query(args, ds: vecstore.Dataset) -> np.ndarray:
    if args.query is not None:
        return np.asarray(_comma_floats(args.query))
    if args.query_id is not None:
        return ds.vectors[args.query_id]
    return ds.vectors[0]


def cmd_synth(args) -> int:
    params: dict = {}
    if args.kind == vecstore.GAUSSIAN_CLUSTER:
        params = {"n_clusters": args.n_clusters, "cluster_std": args.cluster_std}
    elif args.kind == vecstore.BINARY_PLANTED:
        if args.m is None:
            parser_error("binary-planted requires --m")
        params = {"m": args.m, "radius": args.radius}
    ds, meta = vecstore.gen_synthetic(args.kind, args.n, args.d, args.seed, **params)
    vecstore.save_vectors(ds, args.out, args.format)
    if meta:
        Path(args.out + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps({"out": args.out, "n": ds.n, "d": ds.dim, "meta": bool(meta)}))
    return 0


def cmd_build_index(args) -> int:
    ds = _load_data(args)
    assignment = levels.assign_levels(ds, args.seed)
    index = levels.build(
        ds,
        assignment,
        k=args.k,
        oracle_kind=args.oracle,
        seed=args.seed,
        nlist=args.nlist,
        nprobe=args.nprobe,
    )
    levels.save_index(index, args.out)
    print(
        json.dumps(
            {
                "out": args.out,
                "n": index.n,
                "levels": len(index.oracles),
                "max_level": index.max_level,
                "oracle": args.oracle,
                "k": args.k,
            }
        )
    )
    return 0


def cmd_query(args) -> int:
    ds = _load_data(args)
    index = levels.load_index(args.index, ds)
    fn = kernels.for_dataset(args.task, args.param, ds)
    q = _resolve_query(args, ds)
    u = levels.union_topk(index, fn, q, k=args.k)
    print(
        json.dumps(
            {
                "union_size": u.size,
                "per_level_counts": {str(k): v for k, v in sorted(u.per_level_counts.items())},
                "hits": [
                    {"id": h.id, "score": h.score, "level": h.level} for h in u.hits
                ],
            }
        )
    )
    return 0


def cmd_estimate(args) -> int:
    ds = _load_data(args)
    fn = kernels.for_dataset(args.task, args.param, ds)
    q = _resolve_query(args, ds)
    out: dict = {"task": args.task, "param": args.param, "method": args.method}

    if args.method in (harness.OURS, harness.OURS_CORRECTED):
        if args.index:
            index = levels.load_index(args.index, ds)
        else:
            assignment = levels.assign_levels(ds, args.seed)
            index = levels.build(
                ds,
                assignment,
                k=args.k,
                oracle_kind=args.oracle,
                seed=args.seed,
                nlist=args.nlist,
                nprobe=args.nprobe,
            )
        corrected = args.corrected or args.method == harness.OURS_CORRECTED
        report = estimator.estimate_query(
            index, fn, q, k=args.k, corrected=corrected, keep_trace=bool(args.trace_out)
        )
        out.update(
            estimate=report.estimate,
            corrected=report.corrected,
            control_value=report.control_value,
            control_sample_size=report.control_sample_size,
            control_skipped=report.control_skipped,
            sum_inv_p=report.sum_inv_p,
            union_size=report.union_size,
            k=report.k,
            retrieval_time=report.retrieval_time,
            estimate_time=report.estimate_time,
        )
        if args.trace_out:
            with open(args.trace_out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["id", "f", "level", "p"])
                for row in report.trace:
                    writer.writerow([row.id, repr(row.score), row.level, repr(row.p)])
            out["trace_out"] = args.trace_out
    elif args.method == harness.TOPK:
        out["estimate"] = baselines.estimate_topk(ds, fn, q, args.k)
    elif args.method == harness.RANDOM:
        if args.m is None:
            parser_error("--method random requires --m")
        out["estimate"] = baselines.estimate_random(ds, fn, q, args.m, args.seed)
    else:
        if args.m is None:
            parser_error("--method combined requires --m")
        combined = baselines.estimate_combined(ds, fn, q, args.k, args.m, args.seed)
        out.update(estimate=combined.value, tail_size=combined.tail_size,
                   used_fallback=combined.used_fallback)

    if args.delta is not None:
        try:
            bound = estimator.compute_bound(ds.n, args.k, args.delta)
            out["bound"] = {"ell_star": bound.ell_star, "b": bound.b, "rel_bound": bound.rel_bound}
        except estimator.KTooSmallError as exc:
            out["bound"] = {"error": str(exc), "min_feasible_k": exc.min_feasible_k}
    if args.with_exact:
        F = kernels.exact_sum(fn, ds, q)
        out["exact"] = F
        if F > 0:
            out["rel_err"] = abs(out["estimate"] - F) / F
    print(json.dumps(out))
    return 0


def cmd_bound(args) -> int:
    try:
        bound = estimator.compute_bound(args.n, args.k, args.delta)
    except estimator.KTooSmallError as exc:
        print(json.dumps({"error": str(exc), "min_feasible_k": exc.min_feasible_k}))
        return 1
    print(
        json.dumps(
            {
                "n": bound.n,
                "k": bound.k,
                "delta": bound.delta,
                "ell_star": bound.ell_star,
                "b": bound.b,
                "rel_bound": bound.rel_bound,
            }
        )
    )
    return 0


def cmd_sweep(args) -> int:
    overrides: dict = {
        "task": args.task,
        "seed": args.seed,
        "out": args.out,
        "oracle": args.oracle,
        "nlist": args.nlist,
        "nprobe": args.nprobe,
        "n_queries": args.n_queries,
        "scale": args.scale,
    }
    if args.params:
        overrides["params"] = _comma_floats(args.params)
    if args.method:
        overrides["methods"] = [
            {
                "method": args.method,
                "k": _comma_ints(args.k) if args.k else [],
                "m": _comma_ints(args.m) if args.m else [],
            }
        ]
    spec = harness.load_spec(args.config, overrides)
    out = harness.run_sweep(spec)
    print(json.dumps({"out": str(out)}))
    return 0


def cmd_bound_exp(args) -> int:
    out = harness.run_bound_experiment(
        n=args.n,
        m_list=_comma_ints(args.m_list),
        k=args.k,
        delta=args.delta,
        reps=args.reps,
        seed=args.seed,
        out=args.out,
    )
    print(json.dumps({"out": str(out)}))
    return 0


def cmd_summarize(args) -> int:
    csv_path, json_path = harness.summarize(args.results, args.out_prefix)
    print(json.dumps({"csv": str(csv_path), "json": str(json_path)}))
    return 0


def parser_error(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(2)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
