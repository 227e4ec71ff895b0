"""Top-k maximization oracles: exact bounded-heap scan and an IVF approximation.

Both oracles share one total order: similarity key descending, id ascending.
Everything downstream (level unions, estimator processing order) relies on
that order being identical across oracle implementations.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import NamedTuple, Protocol, Sequence

import numpy as np

from . import kernels
from .kernels import ScoreFn
from .vecstore import Dataset, STREAM_KMEANS, _as_rng

EXACT = "exact"
IVF = "ivf"
ORACLE_KINDS = (EXACT, IVF)

DEFAULT_KMEANS_ITERS = 20


class ScoredHit(NamedTuple):
    id: int
    score: float
    key: float


def topk_scan(
    vectors: np.ndarray,
    ids: np.ndarray,
    fn: ScoreFn,
    q: np.ndarray,
    k: int,
) -> list[ScoredHit]:
    """Top-k of the given rows in a single scan with a size-k heap.

    Returns min(k, len(ids)) hits sorted by key descending, id ascending.
    Scores are recomputed from the winning vectors so hit scores match a
    direct f(x, q) evaluation bit for bit.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(ids) == 0:
        return []
    keys = kernels.similarity_keys(fn, vectors, q)
    best = heapq.nsmallest(k, zip((-keys).tolist(), ids.tolist(), range(len(ids))))
    rows = [pos for _, _, pos in best]
    hit_scores = kernels.scores(fn, vectors[rows], q)
    return [
        ScoredHit(id=int(i), score=float(s), key=-neg)
        for (neg, i, _), s in zip(best, hit_scores)
    ]


def exact_topk(ds: Dataset, fn: ScoreFn, q: np.ndarray, k: int) -> list[ScoredHit]:
    """Exact top-k over a whole dataset."""
    return topk_scan(ds.vectors, ds.ids(), fn, q, k)


# --- IVF ---------------------------------------------------------------------


def kmeans(
    vectors: np.ndarray,
    nlist: int,
    iters: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's k-means with a fixed iteration budget.

    Initialized from nlist distinct sampled points. Returns (centroids,
    assignments, objective history); the history is the sum of squared
    distances to the assigned centroid after each assignment step and is
    non-increasing. Empty clusters keep their previous centroid.
    """
    n = vectors.shape[0]
    if not 1 <= nlist <= n:
        raise ValueError(f"nlist must be in [1, {n}], got {nlist}")
    init = rng.choice(n, size=nlist, replace=False)
    centroids = vectors[init].copy()
    assignments = np.zeros(n, dtype=np.int64)
    objective: list[float] = []
    for _ in range(max(iters, 1)):
        dists = _sq_dist_to_centroids(vectors, centroids)
        new_assign = np.argmin(dists, axis=1)
        objective.append(float(dists[np.arange(n), new_assign].sum()))
        if objective[-1] == 0.0 or (len(objective) > 1 and np.array_equal(new_assign, assignments)):
            assignments = new_assign
            break
        assignments = new_assign
        for c in range(nlist):
            members = assignments == c
            if members.any():
                centroids[c] = vectors[members].mean(axis=0)
    return centroids, assignments, objective


def _sq_dist_to_centroids(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # chunked ||x - c||^2 so the (n, c) matrix never gets large
    n = vectors.shape[0]
    out = np.empty((n, centroids.shape[0]))
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    for start in range(0, n, 8192):
        chunk = vectors[start : start + 8192]
        x_sq = np.einsum("ij,ij->i", chunk, chunk)
        out[start : start + 8192] = x_sq[:, None] - 2.0 * chunk @ centroids.T + c_sq
    return out


@dataclass
class IvfIndex:
    """Inverted-file index: k-means centroids plus per-point list assignment."""

    centroids: np.ndarray
    assignments: np.ndarray
    nlist: int
    nprobe: int

    def __post_init__(self) -> None:
        if not 1 <= self.nprobe <= self.nlist:
            raise ValueError(f"nprobe must be in [1, {self.nlist}], got {self.nprobe}")


def default_nlist(n: int) -> int:
    return int(np.ceil(np.sqrt(n)))


def ivf_build(
    ds: Dataset,
    nlist: int | None = None,
    iters: int = DEFAULT_KMEANS_ITERS,
    seed: int | np.random.Generator = 0,
    nprobe: int | None = None,
) -> IvfIndex:
    """Cluster a dataset into nlist inverted lists (default ceil(sqrt(n)))."""
    nlist = default_nlist(ds.n) if nlist is None else nlist
    rng = _as_rng(seed, STREAM_KMEANS)
    centroids, assignments, _ = kmeans(ds.vectors, nlist, iters, rng)
    return IvfIndex(
        centroids=centroids,
        assignments=assignments,
        nlist=nlist,
        nprobe=nprobe if nprobe is not None else max(1, nlist // 8),
    )


def _probe(centroids: np.ndarray, fn: ScoreFn, q: np.ndarray, nprobe: int) -> np.ndarray:
    if not 1 <= nprobe <= centroids.shape[0]:
        raise ValueError(f"nprobe must be in [1, {centroids.shape[0]}], got {nprobe}")
    if fn.similarity == kernels.DOT_MAX:
        affinity = -(centroids @ np.asarray(q, dtype=np.float64))
    else:
        diff = centroids - np.asarray(q, dtype=np.float64)
        affinity = np.einsum("ij,ij->i", diff, diff)
    return np.argsort(affinity, kind="stable")[:nprobe]


def probe_lists(index: IvfIndex, fn: ScoreFn, q: np.ndarray, nprobe: int) -> np.ndarray:
    """The nprobe most promising list ids for this query, by the fn similarity."""
    return _probe(index.centroids, fn, q, nprobe)


def ivf_topk(
    index: IvfIndex,
    ds: Dataset,
    fn: ScoreFn,
    q: np.ndarray,
    k: int,
    nprobe: int | None = None,
) -> list[ScoredHit]:
    """exact top-k restricted to the union of the probed inverted lists."""
    nprobe = index.nprobe if nprobe is None else nprobe
    probed = probe_lists(index, fn, q, nprobe)
    mask = np.isin(index.assignments, probed)
    if not mask.any():
        return []
    rows = np.flatnonzero(mask)
    return topk_scan(ds.vectors[rows], rows.astype(np.int64), fn, q, k)


def recall_at_k(approx: Sequence[ScoredHit], exact: Sequence[ScoredHit]) -> float:
    """|approx ids ∩ exact ids| / |exact ids|; 1.0 when exact is empty."""
    exact_ids = {h.id for h in exact}
    if not exact_ids:
        return 1.0
    approx_ids = {h.id for h in approx}
    return len(approx_ids & exact_ids) / len(exact_ids)


# --- per-subset oracles used by the leveled index -----------------------------


class SubsetOracle(Protocol):
    """Read-only top-k retrieval over a fixed subset of a dataset."""

    @property
    def size(self) -> int: ...

    def topk(self, fn: ScoreFn, q: np.ndarray, k: int) -> list[ScoredHit]: ...


class ExactOracle:
    def __init__(self, vectors: np.ndarray, ids: np.ndarray):
        self.vectors = vectors
        self.ids = ids

    @property
    def size(self) -> int:
        return len(self.ids)

    def topk(self, fn: ScoreFn, q: np.ndarray, k: int) -> list[ScoredHit]:
        return topk_scan(self.vectors, self.ids, fn, q, k)


class IvfOracle:
    def __init__(
        self,
        vectors: np.ndarray,
        ids: np.ndarray,
        centroids: np.ndarray,
        assignments: np.ndarray,
        nprobe: int,
    ):
        self.vectors = vectors
        self.ids = ids
        self.centroids = centroids
        self.assignments = assignments
        self.nlist = centroids.shape[0]
        self.nprobe = min(nprobe, self.nlist)

    @classmethod
    def build(
        cls,
        vectors: np.ndarray,
        ids: np.ndarray,
        rng: np.random.Generator,
        nlist: int | None = None,
        iters: int = DEFAULT_KMEANS_ITERS,
        nprobe: int | None = None,
    ) -> "IvfOracle":
        nlist = min(default_nlist(len(ids)) if nlist is None else nlist, len(ids))
        centroids, assignments, _ = kmeans(vectors, nlist, iters, rng)
        return cls(
            vectors,
            ids,
            centroids,
            assignments,
            nprobe=nprobe if nprobe is not None else max(1, nlist // 8),
        )

    @property
    def size(self) -> int:
        return len(self.ids)

    def topk(self, fn: ScoreFn, q: np.ndarray, k: int, nprobe: int | None = None) -> list[ScoredHit]:
        probed = _probe(self.centroids, fn, q, self.nprobe if nprobe is None else nprobe)
        mask = np.isin(self.assignments, probed)
        if not mask.any():
            return []
        rows = np.flatnonzero(mask)
        return topk_scan(self.vectors[rows], self.ids[rows], fn, q, k)
