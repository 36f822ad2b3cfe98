import logging
import math
from typing import Iterable

import numpy as np
from scipy.special import ndtr, ndtri

logger = logging.getLogger(__name__)


def normal_cdf(x):
    """Standard normal CDF (Cephes ndtr, erf/erfc rational approximations)"""
    return ndtr(x)


def normal_quantile(q):
    """Standard normal quantile (Cephes ndtri, piecewise rational approximation)"""
    return ndtri(q)


def two_sided_pvalue(z: float) -> float:
    """2 - 2*Phi(|z|), evaluated as 2*Phi(-|z|) so small p-values keep their digits"""
    if not math.isfinite(z):
        return float("nan") if math.isnan(z) else 0.0
    return float(min(1.0, 2.0 * ndtr(-abs(z))))


def z_quantile(alpha: float) -> float:
    """z_{alpha/2}: P{N(0,1) > z} = alpha/2"""
    return float(ndtri(1.0 - alpha / 2.0))


def exact_sum(values: Iterable[float]) -> float:
    """Correctly rounded sum; independent of order and of how the work was split"""
    return math.fsum(values)


def exact_row_sums(block: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(row) for row in block], dtype=float)


def replication_seed(base_seed: int, *keys: int) -> int:
    """Deterministic 64-bit seed hashed from (base_seed, keys...)"""
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def is_symmetric(M: np.ndarray, rtol: float = 1e-12) -> bool:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = np.maximum(1.0, np.abs(M))
    return bool(np.all(np.abs(M - M.T) <= rtol * scale))


def complement_indices(p: int, a: int, b: int) -> np.ndarray:
    """I = [p] minus {a, b}, ascending"""
    return np.array([j for j in range(p) if j != a and j != b], dtype=int)

