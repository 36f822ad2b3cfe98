"""Comparison estimators: Pearson and nonparanormal plug-ins, and the pseudo-score one-step estimator."""
import logging
import math
from typing import Optional

import numpy as np
from scipy.special import ndtri

from app.errors import ConstantColumn, DegenerateDenominator, TooFewSamples
from app.matrix_core import CorrelationMatrix, as_array
from app.rails import validation_rails
from app.rocket_core import build_inference, point_estimate
from app.schemas import EdgeInference, Estimator, LassoConfig, ThetaBlock
from app.sparse_regression import AllNodesFit, all_nodes_gamma, refit_on_support, support_of

logger = logging.getLogger(__name__)

DENOMINATOR_TOL = 1e-10


def _check_constant_columns(X: np.ndarray):
    spread = X.max(axis=0) - X.min(axis=0)
    constant = np.flatnonzero(spread == 0)
    if constant.size:
        raise ConstantColumn(f"columns {constant.tolist()} are constant")


def pearson_matrix(X) -> CorrelationMatrix:
    """Sample correlation with mean centering; diagonal pinned to 1"""
    X = validation_rails.require_data_matrix(X, min_rows=2, min_cols=1)
    _check_constant_columns(X)
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / X.shape[0]
    scale = 1.0 / np.sqrt(np.diag(cov))
    R = cov * np.outer(scale, scale)
    R = 0.5 * (R + R.T)
    np.clip(R, -1.0, 1.0, out=R)
    np.fill_diagonal(R, 1.0)
    return CorrelationMatrix(R)


def npn_delta(n: int) -> float:
    """Winsorization level 1 / (4 n^{1/4} sqrt(pi log n))"""
    return 1.0 / (4.0 * n ** 0.25 * math.sqrt(math.pi * math.log(n)))


def normal_scores(X) -> np.ndarray:
    """Winsorized empirical CDF (strict inequality) mapped through the normal quantile"""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 8:
        raise TooFewSamples(f"nonparanormal scores need n >= 8, got {n}")
    _check_constant_columns(X)
    delta = npn_delta(n)
    scores = np.empty_like(X)
    for j in range(X.shape[1]):
        col = X[:, j]
        below = np.searchsorted(np.sort(col), col, side="left")
        scores[:, j] = ndtri(np.clip(below / n, delta, 1.0 - delta))
    return scores


def npn_matrix(X) -> CorrelationMatrix:
    X = validation_rails.require_data_matrix(X, min_rows=8, min_cols=1)
    return pearson_matrix(normal_scores(X))


def plugin_edge(
    sigma_hat,
    n: int,
    a: int,
    b: int,
    cfg: LassoConfig,
    alpha: float = 0.05,
    estimator: Estimator = Estimator.pearson,
    **precomputed,
) -> EdgeInference:
    """Same regression and point estimate as the rank estimator; variance from
    s^2 = Omega_aa Omega_bb + Omega_ab^2 (stored without the 1/n factor)"""
    S = as_array(sigma_hat)
    p = S.shape[0]
    validation_rails.require_pair(p, a, b)
    cfg = cfg.resolved(n, p)
    est = point_estimate(S, a, b, cfg, **precomputed)
    theta, det = est.theta, est.det
    omega_aa = theta.bb / det
    omega_bb = theta.aa / det
    s_ab = math.sqrt(max(0.0, omega_aa * omega_bb + est.omega_ab ** 2))
    return build_inference(
        a, b, estimator, theta, est.omega_ab, s_ab, n, alpha,
        support_size=int(est.gammas.support.size), warnings=est.gammas.warnings,
    )


def precision_from_rows(
    sigma_hat,
    cfg: LassoConfig,
    all_nodes: Optional[AllNodesFit] = None,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Row-wise Lasso-with-refit precision estimate, symmetrized by averaging"""
    S = as_array(sigma_hat)
    p = S.shape[0]
    if all_nodes is None:
        all_nodes = all_nodes_gamma(S, cfg, threads=threads)
    omega = np.zeros((p, p))
    for j in range(p):
        others = np.array([k for k in range(p) if k != j], dtype=int)
        lasso = all_nodes.coef[j][others]
        refit = refit_on_support(S, support_of(lasso, others), j, others).coef
        residual = S[j, j] - S[j, others] @ refit
        if abs(residual) < DENOMINATOR_TOL:
            raise DegenerateDenominator(f"residual variance of node {j} is {residual:.3e}")
        omega[j, j] = 1.0 / residual
        omega[j, others] = -omega[j, j] * refit
    return 0.5 * (omega + omega.T)


def pseudo_score_edge(sigma_hat, omega_hat, a: int, b: int) -> float:
    """One-step ratio correction of Omega_hat_ab using Sigma_hat"""
    S = as_array(sigma_hat)
    W = as_array(omega_hat)
    ws = W[a] @ S[:, b]          # (Omega Sigma)_ab
    sw = S[a] @ W[:, b]          # (Sigma Omega)_ab
    wsw = W[a] @ S @ W[:, b]     # (Omega Sigma Omega)_ab
    denominator = ws + sw - 1.0
    if abs(denominator) <= DENOMINATOR_TOL:
        raise DegenerateDenominator(f"pseudo-score denominator {denominator:.3e} for pair ({a}, {b})")
    return float((W[a, b] * (ws + sw) - wsw) / denominator)


def pseudo_score_inference(
    sigma_hat,
    omega_hat,
    n: int,
    a: int,
    b: int,
    alpha: float = 0.05,
) -> EdgeInference:
    """Point estimate from the ratio correction; surrogate plug-in variance evaluated at Omega_hat"""
    W = as_array(omega_hat)
    validation_rails.require_pair(W.shape[0], a, b)
    omega_ab = pseudo_score_edge(sigma_hat, W, a, b)
    s_ab = math.sqrt(max(0.0, W[a, a] * W[b, b] + W[a, b] ** 2))
    det_w = W[a, a] * W[b, b] - W[a, b] ** 2
    if det_w != 0:
        theta = ThetaBlock(a=a, b=b, aa=W[b, b] / det_w, ab=-W[a, b] / det_w, bb=W[a, a] / det_w)
    else:
        theta = ThetaBlock(a=a, b=b, aa=float("nan"), ab=float("nan"), bb=float("nan"))
    return build_inference(a, b, Estimator.pseudo_score, theta, omega_ab, s_ab, n, alpha, warnings=["surrogate_variance"])
