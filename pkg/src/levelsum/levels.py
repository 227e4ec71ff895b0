"""Geometric level assignment and the union-of-top-k query over level indexes.

Every point lands on level l >= 1 with probability 2**-l, each nonempty level
gets its own retrieval structure, and one query retrieves the top k from every
level. The union grows like k * log(n) instead of n.
"""

from __future__ import annotations

import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .kernels import ScoreFn
from .oracle import EXACT, IVF, ORACLE_KINDS, ExactOracle, IvfOracle, ScoredHit, SubsetOracle
from .vecstore import Dataset, STREAM_KMEANS, STREAM_LEVELS, _as_rng

MAX_LEVEL = 64
THREADS_ENV = "LEVELSUM_THREADS"
INDEX_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LevelAssignment:
    """One level per id, 1-based; overflow_count is how many draws hit the cap."""

    levels: np.ndarray
    overflow_count: int = 0

    def __post_init__(self) -> None:
        lv = np.ascontiguousarray(self.levels, dtype=np.int64)
        if lv.ndim != 1 or lv.size < 1:
            raise ValueError("levels must be a non-empty 1-d array")
        if lv.min() < 1 or lv.max() > MAX_LEVEL:
            raise ValueError(f"levels must lie in [1, {MAX_LEVEL}]")
        lv.flags.writeable = False
        object.__setattr__(self, "levels", lv)

    @property
    def n(self) -> int:
        return self.levels.shape[0]

    @property
    def max_level(self) -> int:
        return int(self.levels.max())

    def counts(self) -> np.ndarray:
        """Occupancy per level, indexed by level (index 0 unused)."""
        return np.bincount(self.levels, minlength=self.max_level + 1)

    def ids_at(self, level: int) -> np.ndarray:
        return np.flatnonzero(self.levels == level).astype(np.int64)


def assign_levels(ds: Dataset | int, seed: int | np.random.Generator) -> LevelAssignment:
    """Draw i.i.d. geometric levels: l = 1 + floor(-log2(u)), u uniform in (0, 1]."""
    n = ds if isinstance(ds, int) else ds.n
    rng = _as_rng(seed, STREAM_LEVELS)
    u = 1.0 - rng.random(n)
    lv = 1 + np.floor(-np.log2(u)).astype(np.int64)
    overflow = int(np.count_nonzero(lv > MAX_LEVEL))
    if overflow:
        lv = np.minimum(lv, MAX_LEVEL)
    return LevelAssignment(levels=lv, overflow_count=overflow)


@dataclass
class LeveledIndex:
    """One retrieval structure per nonempty level plus the level table."""

    dataset: Dataset
    assignment: LevelAssignment
    k: int
    oracle_kind: str
    oracles: dict[int, SubsetOracle] = field(repr=False)

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def max_level(self) -> int:
        return self.assignment.max_level

    def level_size(self, level: int) -> int:
        o = self.oracles.get(level)
        return o.size if o is not None else 0


def build(
    ds: Dataset,
    assignment: LevelAssignment,
    k: int,
    oracle_kind: str = EXACT,
    seed: int | np.random.Generator = 0,
    nlist: int | None = None,
    nprobe: int | None = None,
) -> LeveledIndex:
    """Build the per-level oracle structures for one assignment."""
    if assignment.n != ds.n:
        raise ValueError(f"assignment covers {assignment.n} ids, dataset has {ds.n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if oracle_kind not in ORACLE_KINDS:
        raise ValueError(f"unknown oracle kind {oracle_kind!r}; expected one of {ORACLE_KINDS}")
    rng = _as_rng(seed, STREAM_KMEANS)
    oracles: dict[int, SubsetOracle] = {}
    for level in range(1, assignment.max_level + 1):
        ids = assignment.ids_at(level)
        if len(ids) == 0:
            continue
        vectors = ds.vectors[ids]
        if oracle_kind == EXACT:
            oracles[level] = ExactOracle(vectors, ids)
        else:
            oracles[level] = IvfOracle.build(vectors, ids, rng, nlist=nlist, nprobe=nprobe)
    return LeveledIndex(dataset=ds, assignment=assignment, k=k, oracle_kind=oracle_kind, oracles=oracles)


class UnionHit(NamedTuple):
    id: int
    score: float
    key: float
    level: int


@dataclass
class UnionResult:
    """Merged per-level top-k hits, sorted by key descending then id ascending."""

    hits: list[UnionHit]
    per_level_counts: dict[int, int]

    @property
    def size(self) -> int:
        return len(self.hits)


def _thread_count(threads: int | None) -> int:
    if threads is not None:
        return max(1, threads)
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def union_topk(
    index: LeveledIndex,
    fn: ScoreFn,
    q: np.ndarray,
    k: int | None = None,
    threads: int | None = None,
) -> UnionResult:
    """Retrieve the top k from every level and merge deterministically.

    Per-level queries are independent reads and may run on a thread pool
    (LEVELSUM_THREADS or the threads argument); the merged order never
    depends on completion order.
    """
    k = index.k if k is None else k
    levels_present = sorted(index.oracles)
    workers = min(_thread_count(threads), max(len(levels_present), 1))

    def query(level: int) -> tuple[int, list[ScoredHit]]:
        return level, index.oracles[level].topk(fn, q, k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_level = list(pool.map(query, levels_present))
    else:
        per_level = [query(level) for level in levels_present]

    merged: list[UnionHit] = []
    counts: dict[int, int] = {}
    for level, hits in per_level:
        counts[level] = len(hits)
        merged.extend(UnionHit(h.id, h.score, h.key, level) for h in hits)
    merged.sort(key=lambda h: (-h.key, h.id))
    return UnionResult(hits=merged, per_level_counts=counts)


def union_size_bound(n: int, k: int) -> float:
    """Expected-union-size ceiling (floor(log2(n/k)) + 2) * k."""
    return (math.floor(math.log2(n / k)) + 2) * k


def first_k_mask(level_seq: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask: is position i among the first k occurrences of its level?

    level_seq must already be in processing order (decreasing score, ids
    ascending within ties); the mask is then exactly union membership.
    """
    n = level_seq.shape[0]
    order = np.argsort(level_seq, kind="stable")
    sorted_lv = level_seq[order]
    run_start = np.r_[True, sorted_lv[1:] != sorted_lv[:-1]]
    starts = np.flatnonzero(run_start)
    occ_sorted = np.arange(n) - starts[np.cumsum(run_start) - 1]
    occ = np.empty(n, dtype=np.int64)
    occ[order] = occ_sorted
    return occ < k


def union_from_scores(
    scores: np.ndarray,
    assignment: LevelAssignment,
    k: int,
) -> UnionResult:
    """Analytic union of per-level top-k for known scores, no retrieval at all.

    The total order is (score descending, id ascending); scores double as
    keys. Used wherever top-k can be computed in closed form: fixed-level
    hand traces and the synthetic 0/1 experiment.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != assignment.levels.shape:
        raise ValueError("scores and level assignment must have the same length")
    n = scores.shape[0]
    order = np.lexsort((np.arange(n), -scores))
    lv_in_order = assignment.levels[order]
    members = order[first_k_mask(lv_in_order, k)]
    counts = np.bincount(assignment.levels, minlength=assignment.max_level + 1)
    per_level = {int(lv): int(min(c, k)) for lv, c in enumerate(counts) if lv >= 1 and c > 0}
    hits = [
        UnionHit(int(i), float(scores[i]), float(scores[i]), int(assignment.levels[i]))
        for i in members
    ]
    return UnionResult(hits=hits, per_level_counts=per_level)


# --- persistence ---------------------------------------------------------------


def save_index(index: LeveledIndex, path: str | Path) -> None:
    """Persist the level table and per-level oracle payloads (not the vectors)."""
    header = {
        "schema_version": INDEX_SCHEMA_VERSION,
        "oracle_kind": index.oracle_kind,
        "k": index.k,
        "n": index.n,
        "dim": index.dataset.dim,
        "overflow_count": index.assignment.overflow_count,
    }
    arrays: dict[str, np.ndarray] = {"levels": index.assignment.levels}
    if index.oracle_kind == IVF:
        for level, o in index.oracles.items():
            assert isinstance(o, IvfOracle)
            arrays[f"centroids_{level}"] = o.centroids
            arrays[f"list_assign_{level}"] = o.assignments
            header[f"nprobe_{level}"] = o.nprobe
    buf = io.BytesIO()
    np.savez(buf, header=np.array(json.dumps(header)), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_index(path: str | Path, ds: Dataset) -> LeveledIndex:
    """Rebuild a LeveledIndex from disk against the same dataset."""
    with np.load(path, allow_pickle=False) as payload:
        header = json.loads(str(payload["header"][()]))
        if header.get("schema_version") != INDEX_SCHEMA_VERSION:
            raise ValueError(f"unsupported index schema {header.get('schema_version')}")
        if header["n"] != ds.n or header["dim"] != ds.dim:
            raise ValueError(
                f"index was built for n={header['n']}, d={header['dim']}; "
                f"dataset has n={ds.n}, d={ds.dim}"
            )
        assignment = LevelAssignment(
            levels=payload["levels"], overflow_count=header["overflow_count"]
        )
        oracle_kind = header["oracle_kind"]
        oracles: dict[int, SubsetOracle] = {}
        for level in range(1, assignment.max_level + 1):
            ids = assignment.ids_at(level)
            if len(ids) == 0:
                continue
            vectors = ds.vectors[ids]
            if oracle_kind == EXACT:
                oracles[level] = ExactOracle(vectors, ids)
            else:
                oracles[level] = IvfOracle(
                    vectors,
                    ids,
                    centroids=payload[f"centroids_{level}"],
                    assignments=payload[f"list_assign_{level}"],
                    nprobe=header[f"nprobe_{level}"],
                )
    return LeveledIndex(
        dataset=ds,
        assignment=assignment,
        k=header["k"],
        oracle_kind=oracle_kind,
        oracles=oracles,
    )
