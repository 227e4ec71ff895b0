"""Experiment driver: parameter sweeps, the synthetic 0/1 bound experiment,
and order-statistic summaries, all emitting machine-readable files."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, estimator, kernels, levels, oracle, vecstore
from .vecstore import (
    Dataset,
    STREAM_KMEANS,
    STREAM_LEVELS,
    STREAM_QUERY,
    rng_stream,
)

RESULTS_SCHEMA = 1
RESULTS_COMMENT = f"# levelsum-results v{RESULTS_SCHEMA}"
BOUND_COMMENT = f"# levelsum-bound-exp v{RESULTS_SCHEMA}"

OURS = "ours"
OURS_CORRECTED = "ours-corrected"
TOPK = "topk"
RANDOM = "random"
COMBINED = "combined"
METHODS = (OURS, OURS_CORRECTED, TOPK, RANDOM, COMBINED)

RESULT_COLUMNS = [
    "method",
    "task",
    "param",
    "k",
    "m",
    "query_id",
    "estimate",
    "exact",
    "rel_err",
    "f_zero",
    "retrieval_time",
    "estimate_time",
    "union_size",
    "recall",
]
TIMING_COLUMNS = ("retrieval_time", "estimate_time")

BOUND_COLUMNS = [
    "n",
    "k",
    "delta",
    "m",
    "reps",
    "rel_bound",
    "p95_rel_err",
    "ci_lo",
    "ci_hi",
    "ci_lo_rank",
    "ci_hi_rank",
    "ci_degenerate",
    "mean_rel_err",
    "max_rel_err",
    "exact_runs",
]


# --- experiment configuration -------------------------------------------------


@dataclass(frozen=True)
class DataSpec:
    """Where the vectors come from: a synthetic generator or a file."""

    kind: str = vecstore.GAUSSIAN_CLUSTER
    n: int = 10_000
    d: int = 8
    params: dict = field(default_factory=dict)
    path: str | None = None
    format: str = vecstore.RAW_F32

    def load(self, seed: int) -> tuple[Dataset, dict]:
        if self.kind == "file":
            if self.path is None:
                raise ValueError("data.kind='file' requires data.path")
            return vecstore.load_vectors(self.path, self.format), {}
        return vecstore.gen_synthetic(self.kind, self.n, self.d, seed, **self.params)


@dataclass(frozen=True)
class MethodGrid:
    """One method plus its budget grid (k for retrieval, m for sampling)."""

    method: str
    k: tuple[int, ...] = ()
    m: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        needs_k = self.method in (OURS, OURS_CORRECTED, TOPK, COMBINED)
        needs_m = self.method in (RANDOM, COMBINED)
        if needs_k and not self.k:
            raise ValueError(f"method {self.method} needs a k grid")
        if needs_m and not self.m:
            raise ValueError(f"method {self.method} needs an m grid")

    def points(self, scale: float = 1.0) -> list[tuple[int | None, int | None]]:
        def sc(v: int) -> int:
            return max(1, round(v * scale))

        ks = [sc(v) for v in self.k]
        ms = [sc(v) for v in self.m]
        if self.method in (OURS, OURS_CORRECTED, TOPK):
            return [(k, None) for k in ks]
        if self.method == RANDOM:
            return [(None, m) for m in ms]
        return [(k, m) for k in ks for m in ms]


@dataclass(frozen=True)
class ExperimentSpec:
    """A full sweep: task x parameter list x method grids x queries."""

    task: str
    params: tuple[float, ...]
    data: DataSpec
    methods: tuple[MethodGrid, ...]
    out: str
    n_queries: int = 30
    seed: int = 0
    oracle: str = oracle.EXACT
    nlist: int | None = None
    nprobe: int | None = None
    scale: float = 1.0
    query_source: str = "data"

    def __post_init__(self) -> None:
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")
        if self.task not in kernels.TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if not self.params:
            raise ValueError("params must be non-empty")
        if self.oracle not in oracle.ORACLE_KINDS:
            raise ValueError(f"unknown oracle {self.oracle!r}")
        if self.query_source not in ("data", "gaussian"):
            raise ValueError("query_source must be 'data' or 'gaussian'")


def load_spec(path: str | Path, overrides: dict | None = None) -> ExperimentSpec:
    """Read an ExperimentSpec from a TOML or JSON file, applying flat overrides."""
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        raw = tomllib.loads(path.read_text())
    else:
        raw = json.loads(path.read_text())
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return spec_from_dict(raw)


def spec_from_dict(raw: dict) -> ExperimentSpec:
    data = DataSpec(**raw.get("data", {}))
    if not raw.get("methods"):
        raise ValueError("experiment config needs a non-empty methods list")
    methods = tuple(
        MethodGrid(
            method=m["method"],
            k=tuple(m.get("k", ())),
            m=tuple(m.get("m", ())),
        )
        for m in raw["methods"]
    )
    return ExperimentSpec(
        task=raw["task"],
        params=tuple(float(p) for p in raw["params"]),
        data=data,
        methods=methods,
        out=raw["out"],
        n_queries=int(raw.get("n_queries", 30)),
        seed=int(raw.get("seed", 0)),
        oracle=raw.get("oracle", oracle.EXACT),
        nlist=raw.get("nlist"),
        nprobe=raw.get("nprobe"),
        scale=float(raw.get("scale", 1.0)),
        query_source=raw.get("query_source", "data"),
    )


# --- sweep --------------------------------------------------------------------


def _method_queries(spec: ExperimentSpec, ds: Dataset, method_idx: int) -> np.ndarray:
    """A fresh query set per method (avoids any cross-method caching effects)."""
    rng = rng_stream(spec.seed, STREAM_QUERY, method_idx)
    if spec.query_source == "data":
        ids = rng.choice(ds.n, size=spec.n_queries, replace=spec.n_queries > ds.n)
        return ds.vectors[ids]
    return rng.standard_normal((spec.n_queries, ds.dim))


def run_sweep(spec: ExperimentSpec) -> Path:
    """Run every (method, param, grid point, query) cell and write one row each."""
    ds, _meta = spec.data.load(spec.seed)
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    flat_ivf = None
    if spec.oracle == oracle.IVF:
        flat_ivf = oracle.ivf_build(
            ds,
            nlist=spec.nlist,
            seed=rng_stream(spec.seed, STREAM_KMEANS, 0),
            nprobe=spec.nprobe,
        )

    rows: list[dict] = []
    for mi, grid in enumerate(spec.methods):
        queries = _method_queries(spec, ds, mi)
        exact_cache: dict[tuple[int, int], float] = {}
        for gi, (k, m) in enumerate(grid.points(spec.scale)):
            ours_index = exact_twin = None
            if grid.method in (OURS, OURS_CORRECTED):
                assignment = levels.assign_levels(ds, rng_stream(spec.seed, STREAM_LEVELS, mi, gi))
                ours_index = levels.build(
                    ds,
                    assignment,
                    k=k,
                    oracle_kind=spec.oracle,
                    seed=rng_stream(spec.seed, STREAM_KMEANS, mi, gi),
                    nlist=spec.nlist,
                    nprobe=spec.nprobe,
                )
                if spec.oracle == oracle.IVF:
                    exact_twin = levels.build(ds, assignment, k=k, oracle_kind=oracle.EXACT)
            for pi, param in enumerate(spec.params):
                fn = kernels.for_dataset(spec.task, param, ds)
                for qi in range(spec.n_queries):
                    q = queries[qi]
                    key = (pi, qi)
                    if key not in exact_cache:
                        exact_cache[key] = kernels.exact_sum(fn, ds, q)
                    F = exact_cache[key]
                    cell = _run_cell(
                        spec, ds, grid.method, fn, q, k, m, flat_ivf, ours_index, exact_twin,
                        sample_seed=rng_stream(spec.seed, vecstore.STREAM_SAMPLE, mi, gi, pi, qi),
                    )
                    rel_err = abs(cell["estimate"] - F) / F if F > 0 else None
                    rows.append(
                        {
                            "method": grid.method,
                            "task": spec.task,
                            "param": param,
                            "k": k,
                            "m": m,
                            "query_id": qi,
                            "estimate": cell["estimate"],
                            "exact": F,
                            "rel_err": rel_err,
                            "f_zero": int(F == 0),
                            "retrieval_time": cell["retrieval_time"],
                            "estimate_time": cell["estimate_time"],
                            "union_size": cell["union_size"],
                            "recall": cell["recall"],
                        }
                    )
    _write_rows(out, RESULTS_COMMENT, RESULT_COLUMNS, rows)
    return out


def _run_cell(
    spec: ExperimentSpec,
    ds: Dataset,
    method: str,
    fn: kernels.ScoreFn,
    q: np.ndarray,
    k: int | None,
    m: int | None,
    flat_ivf,
    ours_index,
    exact_twin,
    sample_seed: np.random.Generator,
) -> dict:
    """One estimate plus timing/recall bookkeeping for a single sweep cell."""
    union_size = recall = None
    if method in (OURS, OURS_CORRECTED):
        report = estimator.estimate_query(ours_index, fn, q, corrected=method == OURS_CORRECTED)
        est = report.corrected if method == OURS_CORRECTED else report.estimate
        union_size = report.union_size
        if exact_twin is not None:
            exact_union = levels.union_topk(exact_twin, fn, q)
            approx_union = levels.union_topk(ours_index, fn, q)
            recall = oracle.recall_at_k(
                [oracle.ScoredHit(h.id, h.score, h.key) for h in approx_union.hits],
                [oracle.ScoredHit(h.id, h.score, h.key) for h in exact_union.hits],
            )
        return {
            "estimate": est,
            "retrieval_time": report.retrieval_time,
            "estimate_time": report.estimate_time,
            "union_size": union_size,
            "recall": recall,
        }

    t0 = time.perf_counter()
    hits = None
    if method in (TOPK, COMBINED) and flat_ivf is not None:
        hits = oracle.ivf_topk(flat_ivf, ds, fn, q, k, nprobe=spec.nprobe)
    elif method in (TOPK, COMBINED):
        hits = oracle.exact_topk(ds, fn, q, k)
    t1 = time.perf_counter()
    if hits is not None and flat_ivf is not None:
        recall = oracle.recall_at_k(hits, oracle.exact_topk(ds, fn, q, k))
    if method == TOPK:
        est = baselines.estimate_topk(ds, fn, q, k, hits=hits)
    elif method == RANDOM:
        est = baselines.estimate_random(ds, fn, q, m, sample_seed)
    else:
        est = baselines.estimate_combined(ds, fn, q, k, m, sample_seed, hits=hits).value
    t2 = time.perf_counter()
    return {
        "estimate": est,
        "retrieval_time": t1 - t0,
        "estimate_time": t2 - t1,
        "union_size": union_size,
        "recall": recall,
    }


# --- synthetic 0/1 bound experiment ---------------------------------------------


def binary_union(level_table: np.ndarray, m: int, k: int) -> levels.UnionResult:
    """Analytic union of per-level top-k for a 0/1 score vector.

    Position i of level_table is the i-th element in decreasing-score order
    (the m ones first, ids ascending within ties), so union membership is
    exactly 'among the first k occurrences of its level' and needs no
    retrieval structure.
    """
    members = np.flatnonzero(levels.first_k_mask(level_table, k))
    counts = np.bincount(level_table, minlength=level_table.max() + 1)
    per_level = {
        int(lv): int(min(c, k)) for lv, c in enumerate(counts) if lv >= 1 and c > 0
    }
    hits = [
        levels.UnionHit(int(i), 1.0 if i < m else 0.0, 1.0 if i < m else 0.0, int(level_table[i]))
        for i in members
    ]
    return levels.UnionResult(hits=hits, per_level_counts=per_level)


def run_bound_experiment(
    n: int,
    m_list: list[int],
    k: int,
    delta: float,
    reps: int,
    seed: int,
    out: str | Path,
) -> Path:
    """Reseeded 0/1 runs per planted count m: empirical 95th-percentile relative
    error with its binomial-tail CI next to the analytic bound."""
    if any(m > n for m in m_list):
        raise ValueError(f"every m must be <= n={n}")
    if any(m < 1 for m in m_list):
        raise ValueError("every m must be >= 1")
    if reps < 20:
        warnings.warn(f"reps={reps} < 20: the 95th-percentile CI is degenerate", stacklevel=2)
    bound = estimator.compute_bound(n, k, delta)
    rows = []
    for mi, m in enumerate(m_list):
        rels = []
        for rep in range(reps):
            assignment = levels.assign_levels(n, rng_stream(seed, STREAM_LEVELS, mi, rep))
            u = binary_union(assignment.levels, m, k)
            est = estimator.fast_estimate(u, k).estimate
            rels.append(abs(est - m) / m)
        qci = quantile_with_ci(rels, q=0.95, conf=0.95)
        rows.append(
            {
                "n": n,
                "k": k,
                "delta": delta,
                "m": m,
                "reps": reps,
                "rel_bound": bound.rel_bound,
                "p95_rel_err": qci.point,
                "ci_lo": qci.lo,
                "ci_hi": qci.hi,
                "ci_lo_rank": qci.lo_rank,
                "ci_hi_rank": qci.hi_rank,
                "ci_degenerate": int(qci.degenerate),
                "mean_rel_err": math.fsum(rels) / len(rels),
                "max_rel_err": max(rels),
                "exact_runs": sum(1 for r in rels if r == 0.0),
            }
        )
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_rows(out, BOUND_COMMENT, BOUND_COLUMNS, rows)
    return out


# --- order-statistic confidence intervals ---------------------------------------


def binom_cdf(j: int, n: int, p: float) -> float:
    """P(Binomial(n, p) <= j) by direct summation."""
    if j < 0:
        return 0.0
    if j >= n:
        return 1.0
    total = 0.0
    for i in range(j + 1):
        total += math.comb(n, i) * p**i * (1.0 - p) ** (n - i)
    return min(total, 1.0)


def quantile_ci_ranks(n: int, q: float, conf: float = 0.95) -> tuple[int, int, bool]:
    """1-indexed order-statistic ranks (lo, hi) whose interval covers the
    q-quantile with probability >= conf, plus a degeneracy flag when no such
    pair exists within the sample."""
    alpha2 = (1.0 - conf) / 2.0
    lo = 1
    for cand in range(1, n + 1):
        if binom_cdf(cand - 1, n, q) <= alpha2:
            lo = cand
        else:
            break
    hi = n
    for cand in range(n, 0, -1):
        if 1.0 - binom_cdf(cand - 1, n, q) <= alpha2:
            hi = cand
        else:
            break
    coverage = binom_cdf(hi - 1, n, q) - binom_cdf(lo - 1, n, q)
    return lo, hi, coverage < conf


@dataclass(frozen=True)
class QuantileCI:
    point: float
    lo: float
    hi: float
    lo_rank: int
    hi_rank: int
    degenerate: bool


def empirical_quantile(sorted_values: list[float], q: float) -> float:
    """Order-statistic quantile: the ceil(q*n)-th smallest value."""
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


def quantile_with_ci(values: list[float], q: float, conf: float = 0.95) -> QuantileCI:
    s = sorted(values)
    lo_rank, hi_rank, degenerate = quantile_ci_ranks(len(s), q, conf)
    point = float(np.median(s)) if q == 0.5 else empirical_quantile(s, q)
    return QuantileCI(
        point=point,
        lo=s[lo_rank - 1],
        hi=s[hi_rank - 1],
        lo_rank=lo_rank,
        hi_rank=hi_rank,
        degenerate=degenerate,
    )


def median_with_ci(values: list[float], conf: float = 0.95) -> QuantileCI:
    return quantile_with_ci(values, q=0.5, conf=conf)


# --- summaries ------------------------------------------------------------------


SUPPRESS_ZERO_FRACTION = 0.75

SUMMARY_COLUMNS = [
    "method",
    "budget",
    "param",
    "rows",
    "zero_rows",
    "suppressed",
    "median_rel_err",
    "rel_err_ci_lo",
    "rel_err_ci_hi",
    "ci_degenerate",
    "median_runtime",
    "runtime_ci_lo",
    "runtime_ci_hi",
]


def _budget_label(method: str, k, m) -> str:
    if method == RANDOM:
        return f"m={m}"
    if method == COMBINED:
        return f"k={k},m={m}"
    return f"k={k}"


def read_rows(path: str | Path) -> list[dict]:
    """Read a results CSV written by this module (skipping the schema comment)."""
    with Path(path).open() as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.DictReader(fh)
        return list(reader)


def summarize(results_path: str | Path, out_prefix: str | Path) -> tuple[Path, Path]:
    """Aggregate a sweep: per (method, budget, param) medians with binomial-tail
    CIs, and per (method, budget) the param that maximizes the median error.

    Rows with F=0 are excluded from medians; a cell is suppressed outright when
    more than 75% of its runs have F=0.
    """
    rows = read_rows(results_path)
    if not rows:
        raise ValueError(f"no rows in {results_path}")
    groups: dict[tuple[str, str, str], list[dict]] = {}
    for r in rows:
        key = (r["method"], _budget_label(r["method"], r["k"], r["m"]), r["param"])
        groups.setdefault(key, []).append(r)

    summary_rows = []
    by_budget: dict[tuple[str, str], list[dict]] = {}
    for (method, budget, param), cell in sorted(groups.items()):
        valid = [r for r in cell if r["f_zero"] == "0"]
        zero_rows = len(cell) - len(valid)
        suppressed = zero_rows > SUPPRESS_ZERO_FRACTION * len(cell)
        entry = {
            "method": method,
            "budget": budget,
            "param": param,
            "rows": len(cell),
            "zero_rows": zero_rows,
            "suppressed": int(suppressed),
            "median_rel_err": None,
            "rel_err_ci_lo": None,
            "rel_err_ci_hi": None,
            "ci_degenerate": None,
            "median_runtime": None,
            "runtime_ci_lo": None,
            "runtime_ci_hi": None,
        }
        if valid and not suppressed:
            errs = [float(r["rel_err"]) for r in valid]
            times = [
                float(r["retrieval_time"]) + float(r["estimate_time"]) for r in valid
            ]
            eci = median_with_ci(errs)
            tci = median_with_ci(times)
            entry.update(
                median_rel_err=eci.point,
                rel_err_ci_lo=eci.lo,
                rel_err_ci_hi=eci.hi,
                ci_degenerate=int(eci.degenerate),
                median_runtime=tci.point,
                runtime_ci_lo=tci.lo,
                runtime_ci_hi=tci.hi,
            )
            by_budget.setdefault((method, budget), []).append(entry)
        summary_rows.append(entry)

    worst: dict[str, dict] = {}
    for (method, budget), entries in sorted(by_budget.items()):
        pick = max(entries, key=lambda e: e["median_rel_err"])
        worst[f"{method}|{budget}"] = {
            "method": method,
            "budget": budget,
            "worst_param": pick["param"],
            "median_rel_err": pick["median_rel_err"],
            "rel_err_ci": [pick["rel_err_ci_lo"], pick["rel_err_ci_hi"]],
            "median_runtime": pick["median_runtime"],
            "runtime_ci": [pick["runtime_ci_lo"], pick["runtime_ci_hi"]],
        }

    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out_prefix.with_suffix(".csv")
    json_path = out_prefix.with_suffix(".json")
    _write_rows(csv_path, f"# levelsum-summary v{RESULTS_SCHEMA}", SUMMARY_COLUMNS, summary_rows)
    json_path.write_text(
        json.dumps(
            {"schema_version": RESULTS_SCHEMA, "worst_param_summary": worst}, indent=2
        )
        + "\n"
    )
    return csv_path, json_path


def _write_rows(path: Path, comment: str, columns: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        fh.write(comment + "\n")
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _fmt(row.get(c)) for c in columns})


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)
