"""The three score functions and the monotone similarity each reduces to.

Every task's f(x, q) is non-negative and monotone in a single similarity
(negated euclidean distance or raw dot product), so one top-k retrieval
structure serves all of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vecstore import Dataset

KDE = "kde-gaussian"
SOFTMAX = "softmax"
COUNT = "count-ball"
TASKS = (KDE, SOFTMAX, COUNT)

EUCLIDEAN_MIN = "euclidean-min"
DOT_MAX = "dot-max"

PARAM_NAMES = {KDE: "sigma", SOFTMAX: "temperature", COUNT: "radius"}


class ScoreOverflowError(FloatingPointError):
    """A score exponentiation overflowed to +inf; the sum would be meaningless."""


@dataclass(frozen=True)
class ScoreFn:
    """A query-conditioned score f(x, q) for one task.

    param is the bandwidth sigma (kde-gaussian), temperature (softmax) or
    radius (count-ball). dataset_size is the n folded into the kde
    normalization.
    """

    task: str
    param: float
    dim: int
    dataset_size: int

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.task == COUNT:
            if self.param < 0:
                raise ValueError("count-ball radius must be >= 0")
        elif self.param <= 0:
            raise ValueError(f"{PARAM_NAMES[self.task]} must be > 0, got {self.param}")
        if self.dim < 1 or self.dataset_size < 1:
            raise ValueError("dim and dataset_size must be >= 1")

    @property
    def similarity(self) -> str:
        return DOT_MAX if self.task == SOFTMAX else EUCLIDEAN_MIN


def for_dataset(task: str, param: float, ds: Dataset) -> ScoreFn:
    return ScoreFn(task=task, param=float(param), dim=ds.dim, dataset_size=ds.n)


def _check_dims(fn: ScoreFn, X: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if X.shape[1] != fn.dim or q.shape[0] != fn.dim:
        raise ValueError(
            f"dimension mismatch: fn.dim={fn.dim}, vectors dim={X.shape[1]}, query dim={q.shape[0]}"
        )
    return X, q


def _sq_dists(X: np.ndarray, q: np.ndarray) -> np.ndarray:
    diff = X - q
    return np.einsum("ij,ij->i", diff, diff)


def scores(fn: ScoreFn, X: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vectorized f(x, q) over the rows of X.

    kde and softmax are evaluated in log space and exponentiated per element,
    so peaky parameters underflow gracefully to 0 instead of corrupting the
    whole batch. Overflow to +inf raises ScoreOverflowError.
    """
    X, q = _check_dims(fn, X, q)
    # overflow to inf is detected and raised below; let exp produce it quietly
    with np.errstate(over="ignore"):
        if fn.task == KDE:
            sigma2 = fn.param * fn.param
            log_norm = -math.log(fn.dataset_size) - 0.5 * fn.dim * math.log(2.0 * math.pi * sigma2)
            logf = log_norm - _sq_dists(X, q) / (2.0 * sigma2)
            out = np.exp(logf)
        elif fn.task == SOFTMAX:
            logf = (X @ q) / fn.param
            out = np.exp(logf)
        else:
            out = (_sq_dists(X, q) <= fn.param * fn.param).astype(np.float64)
    if np.isinf(out).any():
        raise ScoreOverflowError(
            f"{fn.task} score overflowed for param={fn.param} (max log score "
            f"{float(np.max(logf)):.3f}); the parameter is too peaky for this data"
        )
    return out


def score(fn: ScoreFn, x: np.ndarray, q: np.ndarray) -> float:
    """f(x, q) for a single vector."""
    return float(scores(fn, np.atleast_2d(x), q)[0])


def exact_sum(fn: ScoreFn, ds: Dataset, q: np.ndarray) -> float:
    """Ground-truth F = sum_x f(x, q) by full scan.

    Uses exactly-rounded summation, so the result is independent of dataset
    order up to the final rounding.
    """
    return math.fsum(scores(fn, ds.vectors, q))


def similarity_keys(fn: ScoreFn, X: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Ordering keys: descending key order equals descending f order.

    Euclidean tasks use the negated distance, dot tasks the raw inner product.
    """
    X, q = _check_dims(fn, X, q)
    if fn.similarity == DOT_MAX:
        return X @ q
    return -np.sqrt(_sq_dists(X, q))


def similarity_key(fn: ScoreFn, x: np.ndarray, q: np.ndarray) -> float:
    return float(similarity_keys(fn, np.atleast_2d(x), q)[0])
