"""The rank-based edge estimator: Theta block, Omega_ab, kernel-based variance, CI and p-value."""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.errors import DataError, DimensionMismatch, SingularTheta, TooFewSamples, ZeroVariance
from app.matrix_core import SINGULAR_THETA_TOL, as_array, omega_entry_from_theta
from app.rails import validation_rails
from app.rank_correlation import KendallMatrix, SigmaHat, cosine_weight_matrix, kendall_tau_matrix, sine_transform
from app.schemas import EdgeInference, Estimator, LassoConfig, ThetaBlock
from app.sparse_regression import GammaPair, gamma_pair_on_support, gamma_pair_pipeline
from app.utils import exact_row_sums, exact_sum, two_sided_pvalue, z_quantile

logger = logging.getLogger(__name__)

# elements per sign block in the pairwise kernel loop
_KERNEL_BLOCK_ELEMENTS = 2_000_000


@dataclass(frozen=True)
class UVVectors:
    """u = (1 at a, 0 at b, -gamma_a on I); v = (0 at a, 1 at b, -gamma_b on I)"""
    a: int
    b: int
    u: np.ndarray
    v: np.ndarray
    supp_u: np.ndarray
    supp_v: np.ndarray


def build_uv(gammas: GammaPair, p: int) -> UVVectors:
    a, b, idx = gammas.a, gammas.b, gammas.index_set
    u = np.zeros(p)
    v = np.zeros(p)
    u[idx] = -gammas.gamma_a
    v[idx] = -gammas.gamma_b
    u[a], u[b] = 1.0, 0.0
    v[a], v[b] = 0.0, 1.0
    supp_u = np.array(sorted({a} | {int(j) for j in idx[gammas.gamma_a != 0]}), dtype=int)
    supp_v = np.array(sorted({b} | {int(j) for j in idx[gammas.gamma_b != 0]}), dtype=int)
    return UVVectors(a=a, b=b, u=u, v=v, supp_u=supp_u, supp_v=supp_v)


def theta_hat(sigma_hat, gamma_a: np.ndarray, gamma_b: np.ndarray, a: int, b: int) -> ThetaBlock:
    """Sigma_{ab,ab} - G'Sigma_{I,ab} - Sigma_{I,ab}'G + G'Sigma_I G with G = (gamma_a gamma_b)"""
    S = as_array(sigma_hat)
    p = S.shape[0]
    gamma_a = np.asarray(gamma_a, dtype=float)
    gamma_b = np.asarray(gamma_b, dtype=float)
    if gamma_a.size != p - 2 or gamma_b.size != p - 2:
        raise DimensionMismatch(f"gamma vectors need length {p - 2}, got {gamma_a.size} and {gamma_b.size}")
    idx = np.array([j for j in range(p) if j != a and j != b], dtype=int)
    ab = [a, b]
    G = np.column_stack([gamma_a, gamma_b])
    cross = S[np.ix_(idx, ab)]
    block = S[np.ix_(ab, ab)] - G.T @ cross - cross.T @ G + G.T @ S[np.ix_(idx, idx)] @ G
    off = 0.5 * (block[0, 1] + block[1, 0])
    theta = ThetaBlock(a=a, b=b, aa=float(block[0, 0]), ab=float(off), bb=float(block[1, 1]))
    assert theta.as_matrix()[0, 1] == theta.as_matrix()[1, 0]
    return theta


def theta_hat_uv(sigma_hat, uv: UVVectors) -> ThetaBlock:
    """Same block through the quadratic forms u'Sv, u'Su, v'Sv"""
    S = as_array(sigma_hat)
    aa = float(uv.u @ S @ uv.u)
    bb = float(uv.v @ S @ uv.v)
    ab = 0.5 * float(uv.u @ S @ uv.v + uv.v @ S @ uv.u)
    return ThetaBlock(a=uv.a, b=uv.b, aa=aa, ab=ab, bb=bb)


def g_kernel_value(s: np.ndarray, uv: UVVectors, C) -> float:
    """s'(uv' o C)s restricted to supp(u) x supp(v)"""
    C = as_array(C)
    s = np.asarray(s, dtype=float)
    left = s[uv.supp_u] * uv.u[uv.supp_u]
    right = s[uv.supp_v] * uv.v[uv.supp_v]
    return float(left @ C[np.ix_(uv.supp_u, uv.supp_v)] @ right)


def g_kernel_dense(s: np.ndarray, uv: UVVectors, C) -> float:
    C = as_array(C)
    s = np.asarray(s, dtype=float)
    return float(s @ (np.outer(uv.u, uv.v) * C) @ s)


def _kernel_row_sums(X: np.ndarray, uv: UVVectors, C: np.ndarray) -> np.ndarray:
    """sum_{i' != i} g(X_i, X_i') for every i.

    Each pair value is built from elementwise products in a fixed (j, k) order, so it does not
    depend on where the pair sits in a block or on the ordering of the rows.
    """
    n = X.shape[0]
    U, V = uv.supp_u, uv.supp_v
    W = np.outer(uv.u[U], uv.v[V]) * C[np.ix_(U, V)]
    cols = np.union1d(U, V)
    block = max(1, _KERNEL_BLOCK_ELEMENTS // max(1, n * cols.size))
    sums = np.empty(n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        signs = {int(c): np.sign(X[start:stop, c, None] - X[None, :, c]) for c in cols}
        G = np.zeros((stop - start, n))
        for jj, j in enumerate(U):
            inner = np.zeros((stop - start, n))
            for kk, k in enumerate(V):
                w = W[jj, kk]
                if w != 0.0:
                    inner += w * signs[int(k)]
            G += signs[int(j)] * inner
        sums[start:stop] = exact_row_sums(G)
    return sums


def s_ab_variance(X, uv: UVVectors, kendall, theta: ThetaBlock) -> float:
    """(pi / |det Theta|) * sqrt(mean_i (h_i - mean(g))^2), h_i the leave-one-in kernel average"""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 3:
        raise TooFewSamples(f"variance estimate needs n >= 3, got {n}")
    det = theta.det
    if not math.isfinite(det) or abs(det) < SINGULAR_THETA_TOL:
        raise SingularTheta(f"|det(Theta)| = {abs(det):.3e} for pair ({theta.a}, {theta.b})")
    C = as_array(cosine_weight_matrix(kendall))
    row_sums = _kernel_row_sums(X, uv, C)
    pairs = n * (n - 1) // 2
    mean_g = exact_sum(row_sums) / 2.0 / pairs
    h = row_sums / (n - 1)
    spread = exact_sum((h - mean_g) ** 2) / n
    return math.pi / abs(det) * math.sqrt(spread)


def confidence_interval(omega_ab: float, s_ab: float, n: int, alpha: float) -> Tuple[float, float]:
    if s_ab < 0:
        raise DataError("s_ab must be nonnegative")
    validation_rails.require_alpha(alpha)
    half = z_quantile(alpha) * s_ab / math.sqrt(n)
    return omega_ab - half, omega_ab + half


def z_and_pvalue(omega_ab: float, s_ab: float, n: int) -> Tuple[float, float]:
    if s_ab == 0:
        raise ZeroVariance("s_ab is zero; the z statistic is undefined")
    z = math.sqrt(n) * omega_ab / s_ab
    return z, two_sided_pvalue(z)


def build_inference(
    a: int,
    b: int,
    estimator: Estimator,
    theta: ThetaBlock,
    omega_ab: float,
    s_ab: float,
    n: int,
    alpha: float,
    support_size: int = 0,
    warnings: Sequence[str] = (),
) -> EdgeInference:
    warnings = list(warnings)
    try:
        z, p_value = z_and_pvalue(omega_ab, s_ab, n)
        lo, hi = confidence_interval(omega_ab, s_ab, n, alpha)
    except ZeroVariance:
        logger.warning(f"Zero variance estimate for pair ({a}, {b}); p-value left undefined")
        warnings.append("zero_variance")
        z, p_value = float("nan"), float("nan")
        lo = hi = omega_ab
    return EdgeInference(
        a=a, b=b, estimator=estimator, theta=theta,
        omega_ab=omega_ab, s_ab=s_ab, z=z,
        ci_lo=lo, ci_hi=hi, p_value=p_value, alpha=alpha, n=n,
        support_size=support_size, warnings=warnings,
    )


@dataclass(frozen=True)
class PointEstimate:
    gammas: GammaPair
    theta: ThetaBlock
    omega_ab: float
    det: float


def point_estimate(
    sigma_hat,
    a: int,
    b: int,
    cfg: LassoConfig,
    lasso_a: Optional[np.ndarray] = None,
    lasso_b: Optional[np.ndarray] = None,
    support: Optional[Sequence[int]] = None,
) -> PointEstimate:
    """Regression + Theta block + Omega_ab, shared by every estimator built on a correlation matrix"""
    if support is not None:
        gammas = gamma_pair_on_support(sigma_hat, a, b, support)
    else:
        gammas = gamma_pair_pipeline(sigma_hat, a, b, cfg, lasso_a=lasso_a, lasso_b=lasso_b)
    theta = theta_hat(sigma_hat, gammas.gamma_a, gammas.gamma_b, a, b)
    omega_ab, det = omega_entry_from_theta(theta)
    return PointEstimate(gammas=gammas, theta=theta, omega_ab=omega_ab, det=det)


@dataclass(frozen=True)
class RocketFit:
    """An EdgeInference plus every intermediate artifact"""
    inference: EdgeInference
    kendall: KendallMatrix
    sigma_hat: SigmaHat
    gammas: GammaPair
    uv: UVVectors
    warnings: List[str] = field(default_factory=list)


def rocket_fit(
    X,
    a: int,
    b: int,
    cfg: LassoConfig,
    alpha: float = 0.05,
    kendall: Optional[KendallMatrix] = None,
    sigma_hat: Optional[SigmaHat] = None,
    lasso_a: Optional[np.ndarray] = None,
    lasso_b: Optional[np.ndarray] = None,
    support: Optional[Sequence[int]] = None,
) -> RocketFit:
    X = validation_rails.require_data_matrix(X, min_rows=3, min_cols=3)
    n, p = X.shape
    validation_rails.require_pair(p, a, b)
    validation_rails.require_alpha(alpha)
    cfg = cfg.resolved(n, p)

    if kendall is None:
        kendall = kendall_tau_matrix(X)
    if sigma_hat is None:
        sigma_hat = sine_transform(kendall)

    est = point_estimate(sigma_hat, a, b, cfg, lasso_a=lasso_a, lasso_b=lasso_b, support=support)
    uv = build_uv(est.gammas, p)
    s_ab = s_ab_variance(X, uv, kendall, est.theta)
    estimator = Estimator.rocket if support is None else Estimator.rocket_oracle
    inference = build_inference(
        a, b, estimator, est.theta, est.omega_ab, s_ab, n, alpha,
        support_size=int(est.gammas.support.size), warnings=est.gammas.warnings,
    )
    logger.debug(f"Edge ({a}, {b}): omega={inference.omega_ab:.4f}, s={s_ab:.4f}, |J|={est.gammas.support.size}")
    return RocketFit(inference, kendall, sigma_hat, est.gammas, uv, list(inference.warnings))


def rocket_edge(X, a: int, b: int, cfg: LassoConfig, alpha: float = 0.05, **precomputed) -> EdgeInference:
    return rocket_fit(X, a, b, cfg, alpha, **precomputed).inference


def rocket_oracle_edge(X, a: int, b: int, support: Sequence[int], alpha: float = 0.05, **precomputed) -> EdgeInference:
    """Known-support variant: no variable selection, refit directly on the true support"""
    return rocket_fit(X, a, b, LassoConfig(lam=0.0), alpha, support=support, **precomputed).inference
