#!/usr/bin/env python3
"""Error/runtime trade-off at the worst task parameter, across budget grids.

Runs one task over a parameter sweep for every method and budget, then
reports each (method, budget) at the parameter that maximizes its median
relative error. The full grids mirror production-scale ratios; --scale
shrinks them for a quick desk run."""

import argparse
import json

from levelsum import harness

SIGMAS = [0.05, 0.2, 0.8, 3.2]
OURS_K = [25, 50, 100, 200]
FLAT_K = [250, 500, 1000, 2000]
SAMPLE_M = [1000, 2000, 5000]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--task", default="kde-gaussian")
    ap.add_argument("--params", default=",".join(str(s) for s in SIGMAS))
    ap.add_argument("--scale", type=float, default=1.0, help="shrink every k/m grid")
    ap.add_argument("--n-queries", type=int, default=30)
    ap.add_argument("--seed", type=int, default=23)
    ap.add_argument("--out-dir", default="results/tradeoff")
    args = ap.parse_args()

    spec = harness.spec_from_dict(
        {
            "task": args.task,
            "params": [float(p) for p in args.params.split(",")],
            "data": {"kind": "gaussian-cluster", "n": args.n, "d": args.d},
            "methods": [
                {"method": "ours", "k": OURS_K},
                {"method": "topk", "k": FLAT_K},
                {"method": "random", "m": SAMPLE_M},
                {"method": "combined", "k": FLAT_K[:2], "m": SAMPLE_M[:2]},
            ],
            "n_queries": args.n_queries,
            "seed": args.seed,
            "scale": args.scale,
            "out": f"{args.out_dir}/rows.csv",
        }
    )
    rows_path = harness.run_sweep(spec)
    csv_path, json_path = harness.summarize(rows_path, f"{args.out_dir}/summary")
    print(f"rows:    {rows_path}")
    print(f"summary: {csv_path}, {json_path}")
    worst = json.loads(json_path.read_text())["worst_param_summary"]
    print(f"{'method/budget':<28} {'worst param':>11} {'median err':>11} {'runtime ms':>11}")
    for key, entry in sorted(worst.items()):
        print(
            f"{key:<28} {entry['worst_param']:>11} "
            f"{entry['median_rel_err']:>11.4f} {entry['median_runtime'] * 1e3:>11.2f}"
        )


if __name__ == "__main__":
    main()
