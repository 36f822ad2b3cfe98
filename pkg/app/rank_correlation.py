"""Kendall's tau (pairwise and full matrix) and the sine/cosine maps applied to it."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.errors import ConfigError, DataError, DimensionMismatch, LengthMismatch, TooFewSamples
from app.matrix_core import SquareMatrix, as_array
from app.utils import is_symmetric

logger = logging.getLogger(__name__)

# elements per sign block in the Gram accumulation
_GRAM_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class KendallMatrix(SquareMatrix):
    n: int = 0

    def __post_init__(self):
        super().__post_init__()
        M = self.entries
        if not np.all(np.diag(M) == 1.0):
            raise DataError("Kendall matrix needs a unit diagonal")
        if np.any(np.abs(M) > 1.0) or not is_symmetric(M):
            raise DataError("Kendall matrix must be symmetric with entries in [-1, 1]")


@dataclass(frozen=True)
class SigmaHat(SquareMatrix):
    """sin(pi/2 * T); symmetric, unit diagonal, possibly indefinite"""

    def __post_init__(self):
        super().__post_init__()
        M = self.entries
        if not np.all(np.diag(M) == 1.0):
            raise DataError("SigmaHat needs a unit diagonal")
        if np.any(np.abs(M) > 1.0) or not is_symmetric(M):
            raise DataError("SigmaHat must be symmetric with entries in [-1, 1]")


def _has_ties(v: np.ndarray) -> bool:
    return np.unique(v).size != v.size


def _count_inversions(values: List[float]) -> int:
    """Bottom-up merge sort; returns the number of pairs i < j with values[i] > values[j]"""
    n = len(values)
    src = list(values)
    dst = [0.0] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    inversions += mid - i
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
        src, dst = dst, src
        width *= 2
    return inversions


def _validate_pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"x has {x.size} entries, y has {y.size}")
    if x.size < 2:
        raise TooFewSamples(f"Kendall's tau needs n >= 2, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("Kendall's tau inputs must be finite")
    return x, y


def kendall_score_naive(x: np.ndarray, y: np.ndarray) -> int:
    """sum_{i<i'} sign(x_i - x_i') sign(y_i - y_i'), ties contributing 0"""
    n = x.size
    total = 0
    for i in range(n - 1):
        total += int(np.dot(np.sign(x[i] - x[i + 1:]), np.sign(y[i] - y[i + 1:])))
    return total


def kendall_score_fast(x: np.ndarray, y: np.ndarray) -> int:
    """Same sum via inversion counting; only valid when neither vector has ties"""
    order = np.argsort(x, kind="stable")
    n = x.size
    pairs = n * (n - 1) // 2
    discordant = _count_inversions(y[order].tolist())
    return pairs - 2 * discordant


def kendall_tau_pair(x, y, method: str = "auto") -> float:
    x, y = _validate_pair(x, y)
    n = x.size
    pairs = n * (n - 1) // 2
    if method == "naive" or (method == "auto" and (_has_ties(x) or _has_ties(y))):
        score = kendall_score_naive(x, y)
    elif method in ("auto", "fast"):
        if method == "fast" and (_has_ties(x) or _has_ties(y)):
            raise DataError("fast Kendall path requires tie-free inputs")
        score = kendall_score_fast(x, y)
    else:
        raise ConfigError(f"unknown Kendall method {method!r}")
    return score / pairs


def _gram_scores(X: np.ndarray) -> np.ndarray:
    """Integer matrix sum_{i<i'} s s^T with s = sign(X_i - X_i'), held in float64"""
    n, p = X.shape
    acc = np.zeros((p, p), dtype=float)
    block = max(1, _GRAM_BLOCK_ELEMENTS // max(1, n * p))
    cols = np.arange(n)
    for start in range(0, n - 1, block):
        stop = min(start + block, n - 1)
        rows = np.arange(start, stop)
        D = np.sign(X[start:stop, None, :] - X[None, :, :])
        D *= (cols[None, :] > rows[:, None])[:, :, None]
        D = D.reshape(-1, p)
        # integer-valued partial sums stay below 2**53, so the product is exact
        acc += D.T @ D
    return acc


def kendall_tau_matrix(X, method: str = "gram", threads: Optional[int] = None) -> KendallMatrix:
    """All pairwise Kendall's tau values of the columns of X (n x p)"""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"data matrix must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n < 2:
        raise TooFewSamples(f"Kendall matrix needs n >= 2, got {n}")
    if p < 2:
        raise DimensionMismatch(f"Kendall matrix needs p >= 2, got {p}")
    if not np.all(np.isfinite(X)):
        raise DataError("data matrix must be finite")
    pairs = n * (n - 1) // 2

    if method == "gram":
        T = _gram_scores(X) / pairs
    elif method == "pairwise":
        index_pairs = [(a, b) for a in range(p) for b in range(a + 1, p)]
        T = np.eye(p)

        def work(ab):
            return kendall_tau_pair(X[:, ab[0]], X[:, ab[1]])

        with ThreadPoolExecutor(max_workers=threads or 1) as executor:
            values = list(executor.map(work, index_pairs))
        for (a, b), value in zip(index_pairs, values):
            T[a, b] = T[b, a] = value
    else:
        raise ConfigError(f"unknown Kendall matrix method {method!r}")

    np.fill_diagonal(T, 1.0)
    logger.debug(f"Kendall matrix computed for n={n}, p={p} via {method}")
    return KendallMatrix(T, n=n)


def sine_transform(T) -> SigmaHat:
    T = as_array(T)
    S = np.sin(0.5 * math.pi * T)
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 1.0)
    return SigmaHat(S)


def cosine_weight_matrix(T) -> SquareMatrix:
    T = as_array(T)
    C = np.cos(0.5 * math.pi * T)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 0.0)
    return SquareMatrix(C)
