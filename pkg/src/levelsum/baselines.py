"""Comparison estimators: top-k partial sum, scaled random sample, and their combination."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .kernels import ScoreFn
from .oracle import ScoredHit, exact_topk
from .vecstore import Dataset, uniform_sample


def estimate_topk(
    ds: Dataset,
    fn: ScoreFn,
    q: np.ndarray,
    k: int,
    hits: list[ScoredHit] | None = None,
) -> float:
    """Sum of the k largest scores. Never exceeds the true sum.

    Pass precomputed hits to score against an approximate oracle's result
    instead of the exact scan.
    """
    if hits is None:
        hits = exact_topk(ds, fn, q, k)
    return math.fsum(h.score for h in hits)


def estimate_random(
    ds: Dataset,
    fn: ScoreFn,
    q: np.ndarray,
    m: int,
    seed: int | np.random.Generator,
) -> float:
    """(n/m) times the score sum over a without-replacement sample of size m."""
    if m < 1:
        raise ValueError(f"sample size must be >= 1, got {m}")
    sample = uniform_sample(ds, m, seed, replacement=False)
    sample_scores = kernels.scores(fn, ds.vectors[sample], q)
    return (ds.n / m) * math.fsum(sample_scores)


@dataclass(frozen=True)
class CombinedEstimate:
    """Top-k sum plus a scaled tail sample; used_fallback marks an empty tail."""

    value: float
    tail_size: int
    used_fallback: bool


def estimate_combined(
    ds: Dataset,
    fn: ScoreFn,
    q: np.ndarray,
    k: int,
    m: int,
    seed: int | np.random.Generator,
    hits: list[ScoredHit] | None = None,
) -> CombinedEstimate:
    """Exact top-k head plus (n-k)/|T| times the sample tail T = S \\ top-k.

    When the whole sample lands inside the top-k the tail term is undefined;
    the result falls back to the bare top-k sum and flags it.
    """
    if not 1 <= k < ds.n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={ds.n}")
    if m < 1:
        raise ValueError(f"sample size must be >= 1, got {m}")
    if hits is None:
        hits = exact_topk(ds, fn, q, k)
    top_ids = {h.id for h in hits}
    sample = uniform_sample(ds, m, seed, replacement=False)
    tail = sample[~np.isin(sample, list(top_ids))]
    top_scores = [h.score for h in hits]
    if len(tail) == 0:
        return CombinedEstimate(value=math.fsum(top_scores), tail_size=0, used_fallback=True)
    scale = (ds.n - k) / len(tail)
    tail_scores = kernels.scores(fn, ds.vectors[tail], q)
    value = math.fsum(top_scores + [scale * s for s in tail_scores])
    return CombinedEstimate(value=value, tail_size=int(len(tail)), used_fallback=False)
