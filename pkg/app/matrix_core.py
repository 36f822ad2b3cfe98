"""Dense symmetric-matrix helpers and population-level truth (gamma, Theta, Omega entries)."""
import itertools
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.linalg

from app.errors import (
    DataError,
    DimensionMismatch,
    DimensionTooLarge,
    IllConditioned,
    NonPositiveDiagonal,
    SingularTheta,
)
from app.schemas import ThetaBlock
from app.utils import complement_indices, is_symmetric

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
SINGULAR_THETA_TOL = 1e-12
EXHAUSTIVE_DIM_LIMIT = 16


@dataclass(frozen=True)
class SquareMatrix:
    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise DimensionMismatch(f"expected a non-empty square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("matrix entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def is_symmetric(self) -> bool:
        return is_symmetric(self.entries)


@dataclass(frozen=True)
class CorrelationMatrix(SquareMatrix):
    def __post_init__(self):
        super().__post_init__()
        M = self.entries
        if not np.all(np.diag(M) == 1.0):
            raise DataError("correlation matrix needs an exact unit diagonal")
        if np.any(np.abs(M) > 1.0):
            raise DataError("correlation entries must lie in [-1, 1]")
        if not is_symmetric(M):
            raise DataError("correlation matrix must be symmetric")


MatrixLike = Union[SquareMatrix, np.ndarray]


def as_array(M: MatrixLike) -> np.ndarray:
    if isinstance(M, SquareMatrix):
        return M.entries
    return np.asarray(M, dtype=float)


def normalize_to_correlation(sigma0: MatrixLike) -> CorrelationMatrix:
    """diag(S0)^{-1/2} S0 diag(S0)^{-1/2} with the diagonal pinned to 1"""
    S = as_array(sigma0)
    d = np.diag(S)
    if np.any(d <= 0):
        bad = int(np.argmin(d))
        raise NonPositiveDiagonal(f"diagonal entry {bad} is {d[bad]!r}; cannot normalize")
    scale = 1.0 / np.sqrt(d)
    R = S * np.outer(scale, scale)
    R = 0.5 * (R + R.T)
    np.clip(R, -1.0, 1.0, out=R)
    np.fill_diagonal(R, 1.0)
    return CorrelationMatrix(R)


def solve_sym(A: MatrixLike, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric A; refuses when cond(A) > 1e12"""
    A = as_array(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"matrix is {A.shape}, right-hand side has {b.shape[0]} rows")
    if A.shape[0] == 0:
        return np.zeros_like(b)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditioned(f"condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}", condition=cond)
    return scipy.linalg.solve(A, b, assume_a="sym", check_finite=False)


def dense_inverse(sigma: MatrixLike) -> np.ndarray:
    S = as_array(sigma)
    inv = solve_sym(S, np.eye(S.shape[0]))
    return 0.5 * (inv + inv.T)


def _check_pair(p: int, a: int, b: int):
    if a == b:
        raise DimensionMismatch("node pair needs a != b")
    if not (0 <= a < p and 0 <= b < p):
        raise DimensionMismatch(f"nodes ({a}, {b}) outside 0..{p - 1}")


def true_gamma(sigma: MatrixLike, a: int, b: int) -> Tuple[np.ndarray, np.ndarray]:
    """gamma_c = Sigma_I^{-1} Sigma_{I,c} for c = a, b; I ascending"""
    S = as_array(sigma)
    p = S.shape[0]
    _check_pair(p, a, b)
    idx = complement_indices(p, a, b)
    if idx.size == 0:
        return np.zeros(0), np.zeros(0)
    rhs = S[np.ix_(idx, [a, b])]
    sol = solve_sym(S[np.ix_(idx, idx)], rhs)
    return sol[:, 0].copy(), sol[:, 1].copy()


def true_theta_block(sigma: MatrixLike, a: int, b: int) -> ThetaBlock:
    """Schur complement Sigma_{ab,ab} - Sigma_{ab,I} Sigma_I^{-1} Sigma_{I,ab}"""
    S = as_array(sigma)
    p = S.shape[0]
    _check_pair(p, a, b)
    ab = [a, b]
    block = S[np.ix_(ab, ab)].copy()
    idx = complement_indices(p, a, b)
    if idx.size:
        cross = S[np.ix_(idx, ab)]
        block -= cross.T @ solve_sym(S[np.ix_(idx, idx)], cross)
    off = 0.5 * (block[0, 1] + block[1, 0])
    return ThetaBlock(a=a, b=b, aa=float(block[0, 0]), ab=float(off), bb=float(block[1, 1]))


def omega_entry_from_theta(theta: ThetaBlock) -> Tuple[float, float]:
    """(Theta^{-1})_ab and det(Theta)"""
    det = theta.det
    if not np.isfinite(det) or abs(det) < SINGULAR_THETA_TOL:
        raise SingularTheta(f"|det(Theta)| = {abs(det):.3e} below {SINGULAR_THETA_TOL:.0e} for pair ({theta.a}, {theta.b})")
    return -theta.ab / det, det


def sparse_spectral_norm_exhaustive(M: MatrixLike, k: int) -> float:
    """max |u^T M v| over unit vectors with at most k nonzeros each, by enumeration"""
    A = as_array(M)
    dim = A.shape[0]
    if dim > EXHAUSTIVE_DIM_LIMIT:
        raise DimensionTooLarge(f"exhaustive sparse norm limited to dim <= {EXHAUSTIVE_DIM_LIMIT}, got {dim}")
    if not 1 <= k <= dim:
        raise DimensionMismatch(f"k must be in 1..{dim}, got {k}")
    if k == dim:
        return float(np.linalg.norm(A, 2))
    # enlarging a support never lowers the top singular value, so |S| = |T| = k suffices
    supports = [list(s) for s in itertools.combinations(range(dim), k)]
    cols = np.array(supports)
    best = 0.0
    for rows in supports:
        sub = A[rows][:, cols].transpose(1, 0, 2)
        sv = np.linalg.svd(sub, compute_uv=False)
        best = max(best, float(sv[:, 0].max()))
    return best


def operator_norm(M: MatrixLike) -> float:
    return float(np.linalg.norm(as_array(M), 2))
