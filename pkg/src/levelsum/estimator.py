"""Unbiased sum estimation from a union of per-level top-k hits.

The estimate is sum(f(x)/p(x)) over retrieved hits, where p(x) is the
probability (over level assignment) that x landed on a level whose top-k
quota was still open when x was reached in decreasing-score order. p is
maintained in one pass: start at 1 and subtract 2**-l the moment level l
fills. Elements outside the union contribute zero.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .kernels import ScoreFn
from .levels import MAX_LEVEL, LeveledIndex, UnionResult, union_topk


class CorruptUnionError(ValueError):
    """The union violates its invariants (ordering, level range, or p ledger)."""


class KTooSmallError(ValueError):
    """k is below the feasibility threshold of the error bound."""

    def __init__(self, message: str, min_feasible_k: int | None):
        super().__init__(message)
        self.min_feasible_k = min_feasible_k


class TraceRow(NamedTuple):
    id: int
    score: float
    level: int
    p: float


@dataclass
class EstimateReport:
    """One estimate with the bookkeeping needed for correction and audits."""

    estimate: float
    sum_inv_p: float
    union_size: int
    k: int
    corrected: float | None = None
    control_value: float | None = None
    control_sample_size: int = 0
    control_skipped: str | None = None
    retrieval_time: float = 0.0
    estimate_time: float = 0.0
    trace: list[TraceRow] | None = field(default=None, repr=False)


def fast_estimate(u: UnionResult, k: int, keep_trace: bool = False) -> EstimateReport:
    """Single O(|U|) pass over hits sorted by decreasing score.

    Each hit contributes score/p at the p in force when it is processed;
    when a hit is the k-th processed element of its level, that level's
    2**-level mass leaves p afterwards.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    estimate = 0.0
    sum_inv_p = 0.0
    p = 1.0
    counts: dict[int, int] = {}
    trace: list[TraceRow] | None = [] if keep_trace else None
    prev_score = math.inf
    for hit in u.hits:
        if hit.score > prev_score:
            raise CorruptUnionError("hits are not sorted by decreasing score")
        prev_score = hit.score
        if not 1 <= hit.level <= MAX_LEVEL:
            raise CorruptUnionError(f"hit level {hit.level} outside [1, {MAX_LEVEL}]")
        if p <= 0.0:
            raise CorruptUnionError("availability p exhausted before the union ended")
        estimate += hit.score / p
        sum_inv_p += 1.0 / p
        if trace is not None:
            trace.append(TraceRow(hit.id, hit.score, hit.level, p))
        c = counts.get(hit.level, 0) + 1
        counts[hit.level] = c
        if c == k:
            p -= 2.0 ** -hit.level
    return EstimateReport(
        estimate=estimate,
        sum_inv_p=sum_inv_p,
        union_size=u.size,
        k=k,
        trace=trace,
    )


@dataclass(frozen=True)
class ControlVariate:
    """Plug-in c: mean of the lower half of a uniform sample of f values.

    The sample is the union of levels whose quota never filled; with an
    exact oracle those levels were retrieved in full, so their members form
    a uniform random sample of the dataset.
    """

    value: float
    sample_size: int
    all_filled: bool


def control_variate_c(index: LeveledIndex, u: UnionResult, k: int | None = None) -> ControlVariate:
    k = index.k if k is None else k
    sample: list[float] = []
    for level, count in u.per_level_counts.items():
        # unfilled quota and complete retrieval; the second check only
        # matters for approximate oracles that may under-retrieve
        if count < k and count == index.level_size(level):
            sample.extend(h.score for h in u.hits if h.level == level)
    if not sample:
        return ControlVariate(value=0.0, sample_size=0, all_filled=True)
    sample.sort()
    lower = sample[: math.ceil(len(sample) / 2)]
    return ControlVariate(
        value=math.fsum(lower) / len(lower),
        sample_size=len(sample),
        all_filled=False,
    )


def corrected_estimate(report: EstimateReport, c: float, n: int) -> float:
    """Variance-reduced estimate c*(n - sum(1/p)) + E; exact when f is constant
    c and nothing fills."""
    return c * (n - report.sum_inv_p) + report.estimate


# --- error bound ---------------------------------------------------------------


@dataclass(frozen=True)
class BoundParams:
    """High-probability relative error bound for (n, k, delta)."""

    n: int
    k: int
    delta: float
    ell_star: int
    b: int
    rel_bound: float


def _ell_star(n: int, k: int) -> int:
    return math.floor(math.log2(n / k))


def _feasible(n: int, k: int, delta: float) -> bool:
    return k >= 8.0 * math.log(3.0 * (_ell_star(n, k) + 3) / delta)


def min_feasible_k(n: int, delta: float) -> int | None:
    """Smallest k accepted by compute_bound, or None if no k <= n works."""
    if not _feasible(n, n, delta):
        return None
    lo, hi = 1, n
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible(n, mid, delta):
            hi = mid
        else:
            lo = mid + 1
    return lo


def compute_bound(n: int, k: int, delta: float) -> BoundParams:
    """Relative error bound holding with probability 1 - delta.

    With l* = floor(log2(n/k)) and b = k - ceil(sqrt(2k ln(3(l*+3)/delta))),
    the bound is sqrt(3 ln(3/delta) / (4b)) + 2 ln(3/delta) / (3b). Requires
    k >= 8 ln(3(l*+3)/delta).
    """
    if n < 1 or not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    ell = _ell_star(n, k)
    if not _feasible(n, k, delta):
        kmin = min_feasible_k(n, delta)
        hint = f"; smallest feasible k is {kmin}" if kmin is not None else ""
        raise KTooSmallError(
            f"k={k} too small for delta={delta} at n={n} "
            f"(needs k >= 8*ln(3*(l*+3)/delta) = "
            f"{8.0 * math.log(3.0 * (ell + 3) / delta):.2f}){hint}",
            min_feasible_k=kmin,
        )
    b = k - math.ceil(math.sqrt(2.0 * k * math.log(3.0 * (ell + 3) / delta)))
    log3d = math.log(3.0 / delta)
    rel = math.sqrt(3.0 * log3d / (4.0 * b)) + 2.0 * log3d / (3.0 * b)
    return BoundParams(n=n, k=k, delta=delta, ell_star=ell, b=b, rel_bound=rel)


# --- end-to-end query ------------------------------------------------------------


def estimate_query(
    index: LeveledIndex,
    fn: ScoreFn,
    q: np.ndarray,
    k: int | None = None,
    corrected: bool = False,
    min_control_sample: int = 10,
    keep_trace: bool = False,
    threads: int | None = None,
) -> EstimateReport:
    """Retrieve the union, run the estimation pass, optionally correct.

    The correction is skipped (corrected falls back to the plain estimate)
    when every level filled or the uniform sample is smaller than
    min_control_sample, where the plug-in c is noise-dominated.
    """
    k = index.k if k is None else k
    t0 = time.perf_counter()
    u = union_topk(index, fn, q, k=k, threads=threads)
    t1 = time.perf_counter()
    report = fast_estimate(u, k, keep_trace=keep_trace)
    if corrected:
        cv = control_variate_c(index, u, k=k)
        report.control_value = cv.value
        report.control_sample_size = cv.sample_size
        if cv.all_filled:
            report.control_skipped = "all-levels-filled"
            report.corrected = report.estimate
        elif cv.sample_size < min_control_sample:
            report.control_skipped = "sample-too-small"
            report.corrected = report.estimate
        else:
            report.corrected = corrected_estimate(report, cv.value, index.n)
    t2 = time.perf_counter()
    report.retrieval_time = t1 - t0
    report.estimate_time = t2 - t1
    return report
