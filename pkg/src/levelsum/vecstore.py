"""Dataset container, vector file I/O, synthetic generators, seeded sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

RAW_F32 = "raw-f32"
CSV = "csv"
FORMATS = (RAW_F32, CSV)

# Purpose-specific RNG streams derived from one global seed. Stream i of seed s
# is np.random.SeedSequence(s, spawn_key=(i, *extra)), so every consumer of the
# same (seed, stream, extra) triple sees the same bit stream and streams never
# collide across purposes or repetition indices.
STREAM_SYNTH = 0
STREAM_LEVELS = 1
STREAM_SAMPLE = 2
STREAM_QUERY = 3
STREAM_KMEANS = 4


class DataFormatError(ValueError):
    """Raised for malformed vector files: ragged dims, non-finite values, truncation."""


def rng_stream(seed: int, stream: int, *key: int) -> np.random.Generator:
    """Return the generator for one purpose-specific stream of a global seed."""
    if seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, *key)))


def _as_rng(seed_or_rng: int | np.random.Generator, stream: int) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return rng_stream(seed_or_rng, stream)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of n d-dimensional vectors with dense ids 0..n-1.

    Vectors are held as float64 for score arithmetic regardless of on-disk
    precision; the array is marked read-only after construction.
    """

    vectors: np.ndarray

    def __post_init__(self) -> None:
        # copy unless the input is already frozen, so freezing never reaches
        # back into a caller-owned writable array
        v = np.asarray(self.vectors)
        if v.dtype != np.float64 or not v.flags.c_contiguous or v.flags.writeable:
            v = np.array(v, dtype=np.float64, order="C")
        if v.ndim != 2:
            raise ValueError(f"expected a 2-d array of vectors, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"dataset must be at least 1x1, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("dataset contains non-finite components")
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def ids(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.int64)


def load_vectors(path: str | Path, format: str = RAW_F32) -> Dataset:
    """Load a vector file into a Dataset with ids assigned in file order.

    raw-f32 records are a 4-byte little-endian unsigned dimension count
    followed by that many little-endian IEEE-754 single-precision floats;
    csv is one vector per line, comma-separated decimals.
    """
    path = Path(path)
    if format == RAW_F32:
        return _load_raw_f32(path)
    if format == CSV:
        return _load_csv(path)
    raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")


def _load_raw_f32(path: Path) -> Dataset:
    buf = path.read_bytes()
    if len(buf) == 0:
        raise DataFormatError(f"{path}: empty file")
    if len(buf) < 4:
        raise DataFormatError(f"{path}: truncated record header")
    dim = int(np.frombuffer(buf[:4], dtype="<u4")[0])
    if dim < 1:
        raise DataFormatError(f"{path}: record 0 declares dimension {dim}")
    rec_bytes = 4 * (dim + 1)
    if len(buf) % rec_bytes != 0:
        # either a truncated tail or a dimension change mid-file; disambiguate
        # by scanning record headers until the layout breaks
        _scan_for_dim_mismatch(path, buf, dim)
        raise DataFormatError(f"{path}: file size {len(buf)} is not a multiple of the record size {rec_bytes}")
    raw = np.frombuffer(buf, dtype="<u4").reshape(-1, dim + 1)
    dims = raw[:, 0]
    if not (dims == dim).all():
        bad = int(np.flatnonzero(dims != dim)[0])
        raise DataFormatError(
            f"{path}: dimension mismatch at record {bad}: expected {dim}, got {int(dims[bad])}"
        )
    vectors = raw[:, 1:].view("<f4").astype(np.float64)
    if not np.isfinite(vectors).all():
        bad = int(np.flatnonzero(~np.isfinite(vectors).all(axis=1))[0])
        raise DataFormatError(f"{path}: non-finite component in record {bad}")
    return Dataset(vectors)


def _scan_for_dim_mismatch(path: Path, buf: bytes, first_dim: int) -> None:
    off, rec = 0, 0
    while off + 4 <= len(buf):
        d = int(np.frombuffer(buf[off : off + 4], dtype="<u4")[0])
        if d != first_dim:
            raise DataFormatError(
                f"{path}: dimension mismatch at record {rec}: expected {first_dim}, got {d}"
            )
        off += 4 * (d + 1)
        rec += 1


def _load_csv(path: Path) -> Dataset:
    rows: list[list[float]] = []
    dim: int | None = None
    with path.open() as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if dim is None:
                dim = len(parts)
            elif len(parts) != dim:
                raise DataFormatError(
                    f"{path}: dimension mismatch at line {lineno}: expected {dim}, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataFormatError(f"{path}: unparsable value at line {lineno}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    vectors = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(vectors).all():
        bad = int(np.flatnonzero(~np.isfinite(vectors).all(axis=1))[0])
        raise DataFormatError(f"{path}: non-finite component in record {bad}")
    return Dataset(vectors)


def save_vectors(ds: Dataset, path: str | Path, format: str = RAW_F32) -> None:
    """Write a dataset to disk. raw-f32 stores single precision (round-trips
    bit-exactly for datasets whose values are f32-representable, which all
    loaders and generators here guarantee)."""
    path = Path(path)
    if format == RAW_F32:
        n, d = ds.n, ds.dim
        out = np.empty((n, d + 1), dtype="<u4")
        out[:, 0] = d
        out[:, 1:] = ds.vectors.astype("<f4").view("<u4")
        path.write_bytes(out.tobytes())
    elif format == CSV:
        np.savetxt(path, ds.vectors, delimiter=",", fmt="%.17g")
    else:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")


# --- synthetic generators ---------------------------------------------------

GAUSSIAN_CLUSTER = "gaussian-cluster"
UNIT_SPHERE = "unit-sphere"
BINARY_PLANTED = "binary-planted"
SYNTHETIC_KINDS = (GAUSSIAN_CLUSTER, UNIT_SPHERE, BINARY_PLANTED)


@dataclass(frozen=True)
class PlantedBall:
    """A dataset with exactly `inside_count` vectors within `radius` of `query`."""

    dataset: Dataset
    query: np.ndarray
    radius: float
    inside_count: int

    def meta(self) -> dict:
        return {
            "query": self.query.tolist(),
            "radius": self.radius,
            "inside_count": self.inside_count,
        }


def _f32_exact(arr: np.ndarray) -> np.ndarray:
    # storage is single precision; keep in-memory doubles exactly representable
    return arr.astype(np.float32).astype(np.float64)


def gaussian_clusters(
    n: int,
    d: int,
    seed: int | np.random.Generator,
    n_clusters: int = 8,
    cluster_std: float = 0.25,
) -> Dataset:
    """n points drawn around n_clusters standard-normal centers."""
    rng = _as_rng(seed, STREAM_SYNTH)
    centers = rng.standard_normal((n_clusters, d))
    assign = rng.integers(0, n_clusters, size=n)
    pts = centers[assign] + cluster_std * rng.standard_normal((n, d))
    return Dataset(_f32_exact(pts))


def unit_sphere(n: int, d: int, seed: int | np.random.Generator) -> Dataset:
    """n points uniform on the unit sphere (normalized gaussians)."""
    rng = _as_rng(seed, STREAM_SYNTH)
    pts = rng.standard_normal((n, d))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return Dataset(_f32_exact(pts))


def binary_planted(
    n: int,
    d: int,
    m: int,
    seed: int | np.random.Generator,
    radius: float = 1.0,
) -> PlantedBall:
    """Plant exactly m of n points inside the ball of `radius` around a query.

    Inside points sit at <= 0.9*radius and outside points at >= 1.25*radius,
    so single-precision storage cannot move a point across the boundary.
    Inside points come first in id order.
    """
    if m > n:
        raise ValueError(f"planted count m={m} exceeds n={n}")
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = _as_rng(seed, STREAM_SYNTH)
    query = _f32_exact(rng.standard_normal(d))
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.empty(n)
    radii[:m] = rng.uniform(0.0, 0.9, size=m) * radius
    radii[m:] = rng.uniform(1.25, 4.0, size=n - m) * radius
    pts = _f32_exact(query + dirs * radii[:, None])
    ds = Dataset(pts)
    got = int(np.count_nonzero(((pts - query) ** 2).sum(axis=1) <= radius * radius))
    if got != m:
        raise RuntimeError(f"planted-ball construction produced {got} inside points, wanted {m}")
    return PlantedBall(dataset=ds, query=query, radius=float(radius), inside_count=m)


def gen_synthetic(kind: str, n: int, d: int, seed: int, **params) -> tuple[Dataset, dict]:
    """Dispatch to a synthetic generator; returns (dataset, metadata).

    Metadata is empty except for binary-planted, which reports the planted
    (query, radius, inside_count).
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if kind == GAUSSIAN_CLUSTER:
        return gaussian_clusters(n, d, seed, **params), {}
    if kind == UNIT_SPHERE:
        return unit_sphere(n, d, seed, **params), {}
    if kind == BINARY_PLANTED:
        planted = binary_planted(n, d, seed=seed, **params)
        return planted.dataset, planted.meta()
    raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {SYNTHETIC_KINDS}")


def uniform_sample(
    ds: Dataset,
    m: int,
    seed: int | np.random.Generator,
    replacement: bool = False,
) -> np.ndarray:
    """Sample m vector ids uniformly, deterministic per seed."""
    if m < 0:
        raise ValueError("sample size must be non-negative")
    if not replacement and m > ds.n:
        raise ValueError(f"cannot sample {m} of {ds.n} ids without replacement")
    rng = _as_rng(seed, STREAM_SAMPLE)
    return rng.choice(ds.n, size=m, replace=replacement).astype(np.int64)
