#!/usr/bin/env python3
"""Desk-scale flat/peaky crossover: median relative error per method as the
kde bandwidth sweeps from peaky to flat. Writes rows + summary CSVs."""

import argparse
import json

from levelsum import harness

DEFAULT_SIGMAS = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--d", type=int, default=8)
    ap.add_argument("--task", default="kde-gaussian")
    ap.add_argument("--params", default=",".join(str(s) for s in DEFAULT_SIGMAS))
    ap.add_argument("--n-queries", type=int, default=30)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out-dir", default="results/crossover")
    args = ap.parse_args()

    spec = harness.spec_from_dict(
        {
            "task": args.task,
            "params": [float(p) for p in args.params.split(",")],
            "data": {"kind": "gaussian-cluster", "n": args.n, "d": args.d},
            "methods": [
                {"method": "ours", "k": [50]},
                {"method": "ours-corrected", "k": [50]},
                {"method": "topk", "k": [1000]},
                {"method": "random", "m": [1000]},
                {"method": "combined", "k": [100], "m": [1000]},
            ],
            "n_queries": args.n_queries,
            "seed": args.seed,
            "out": f"{args.out_dir}/rows.csv",
        }
    )
    rows_path = harness.run_sweep(spec)
    csv_path, json_path = harness.summarize(rows_path, f"{args.out_dir}/summary")
    print(f"rows:    {rows_path}")
    print(f"summary: {csv_path}, {json_path}")
    worst = json.loads(json_path.read_text())["worst_param_summary"]
    for key, entry in sorted(worst.items()):
        print(
            f"  {key:<24} worst param={entry['worst_param']:<6} "
            f"median rel err={entry['median_rel_err']:.4f} "
            f"median runtime={entry['median_runtime'] * 1e3:.2f} ms"
        )


if __name__ == "__main__":
    main()
