"""Initial regression estimates gamma_a, gamma_b: l1-penalized quadratic program solved by
cyclic coordinate descent, least-squares refit on the joint support, and all-nodes reuse."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from app.errors import ConfigError, DimensionMismatch, IllConditioned, NonUnitDiagonal, NotConverged, RadiusExceeded
from app.matrix_core import as_array, solve_sym
from app.schemas import LassoConfig
from app.utils import complement_indices

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-10
RIDGE_EPS = 1e-8
LAMBDA_CONSTANT = 2.1


def default_lambda(n: int, p: int) -> float:
    """2.1 * sqrt(log(p) / n)"""
    if n < 2 or p < 2:
        raise ConfigError(f"default lambda needs n >= 2 and p >= 2, got n={n}, p={p}")
    return LAMBDA_CONSTANT * math.sqrt(math.log(p) / n)


def soft_threshold(x, lam: float):
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def lasso_objective(A: np.ndarray, z: np.ndarray, gamma: np.ndarray, lam: float) -> float:
    return float(0.5 * gamma @ A @ gamma - gamma @ z + lam * np.abs(gamma).sum())


@dataclass(frozen=True)
class LassoResult:
    coef: np.ndarray
    sweeps: int
    converged: bool
    objective: float
    warnings: List[str] = field(default_factory=list)


def _require_lambda(cfg: LassoConfig) -> float:
    if cfg.lam is None:
        raise ConfigError("lasso penalty is unset; call LassoConfig.resolved(n, p) first")
    return float(cfg.lam)


def lasso_local_min(A, z, cfg: LassoConfig, init: Optional[np.ndarray] = None) -> LassoResult:
    """Local minimizer of 0.5 g'Ag - g'z + lam*|g|_1 by cyclic coordinate descent (ascending order)"""
    A = as_array(A)
    z = np.asarray(z, dtype=float)
    m = z.size
    if A.shape != (m, m):
        raise DimensionMismatch(f"A is {A.shape}, z has length {m}")
    lam = _require_lambda(cfg)
    if m == 0:
        return LassoResult(np.zeros(0), 0, True, 0.0)
    diag = np.diag(A).copy()
    if np.any(diag <= 1e-8):
        raise NonUnitDiagonal(f"coordinate {int(np.argmin(diag))} has diagonal {diag.min():.3e}")

    gamma = np.zeros(m) if init is None else np.array(init, dtype=float, copy=True)
    objective = lasso_objective(A, z, gamma, lam)
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        Ag = A @ gamma
        max_change = 0.0
        for j in range(m):
            old = gamma[j]
            partial = z[j] - (Ag[j] - diag[j] * old)
            new = math.copysign(max(abs(partial) - lam, 0.0), partial) / diag[j]
            delta = new - old
            if delta != 0.0:
                Ag += delta * A[:, j]
                gamma[j] = new
                max_change = max(max_change, abs(delta))

        current = lasso_objective(A, z, gamma, lam)
        assert current <= objective + 1e-10 * (1.0 + abs(objective)), (
            f"objective increased from {objective} to {current} in sweep {sweeps}"
        )
        objective = current

        l1 = float(np.abs(gamma).sum())
        if l1 > cfg.radius:
            raise RadiusExceeded(f"|gamma|_1 = {l1:.3e} left the radius-{cfg.radius:.1e} ball at sweep {sweeps}")
        if max_change < cfg.tol:
            converged = True
            break

    warnings = []
    if not converged:
        if cfg.strict:
            raise NotConverged(f"Coordinate descent hit max_sweeps={cfg.max_sweeps} without converging")
        warnings.append("not_converged")
        logger.warning(f"Coordinate descent hit max_sweeps={cfg.max_sweeps} without converging")
    logger.debug(f"Lasso finished after {sweeps} sweeps, support {int(np.sum(np.abs(gamma) > SUPPORT_TOL))}/{m}")
    return LassoResult(gamma, sweeps, converged, objective, warnings)


def support_of(coef: np.ndarray, index_set: Sequence[int]) -> np.ndarray:
    """Node labels of the coefficients above the support threshold"""
    index_set = np.asarray(index_set, dtype=int)
    return index_set[np.abs(coef) > SUPPORT_TOL]


@dataclass(frozen=True)
class RefitResult:
    coef: np.ndarray
    ridge_used: bool


def refit_on_support(sigma_hat, support: Sequence[int], c: int, index_set: Sequence[int]) -> RefitResult:
    """Unpenalized solve Sigma_J x = Sigma_{J,c}, embedded into a vector over index_set"""
    S = as_array(sigma_hat)
    index_set = np.asarray(index_set, dtype=int)
    support = np.asarray(sorted(int(j) for j in support), dtype=int)
    coef = np.zeros(index_set.size)
    if support.size == 0:
        return RefitResult(coef, False)
    position = {int(node): k for k, node in enumerate(index_set)}
    missing = [int(j) for j in support if int(j) not in position]
    if missing:
        raise DimensionMismatch(f"support nodes {missing} are outside the index set")

    block = S[np.ix_(support, support)]
    rhs = S[support, c]
    ridge_used = False
    try:
        sol = solve_sym(block, rhs)
    except IllConditioned as e:
        logger.warning(f"Refit on |J|={support.size} is ill-conditioned ({e}); retrying with ridge {RIDGE_EPS:g}")
        ridge_used = True
        try:
            sol = scipy.linalg.solve(block + RIDGE_EPS * np.eye(support.size), rhs, assume_a="sym")
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(block + RIDGE_EPS * np.eye(support.size), rhs, rcond=None)[0]
    for node, value in zip(support, sol):
        coef[position[int(node)]] = value
    return RefitResult(coef, ridge_used)


@dataclass(frozen=True)
class GammaPair:
    a: int
    b: int
    index_set: np.ndarray
    gamma_a: np.ndarray
    gamma_b: np.ndarray
    support: np.ndarray
    lam: float
    refit: bool = True
    lasso_a: Optional[np.ndarray] = None
    lasso_b: Optional[np.ndarray] = None
    warnings: List[str] = field(default_factory=list)


def gamma_pair_pipeline(
    sigma_hat,
    a: int,
    b: int,
    cfg: LassoConfig,
    lasso_a: Optional[np.ndarray] = None,
    lasso_b: Optional[np.ndarray] = None,
) -> GammaPair:
    """Lasso for c = a, b on (Sigma_I, Sigma_Ic), union of supports, refit both.

    lasso_a / lasso_b skip the corresponding Lasso when a reusable solution is already known.
    """
    S = as_array(sigma_hat)
    p = S.shape[0]
    if a == b:
        raise DimensionMismatch("gamma pair needs a != b")
    lam = _require_lambda(cfg)
    idx = complement_indices(p, a, b)
    A = S[np.ix_(idx, idx)]
    warnings: List[str] = []

    fits = []
    for c, cached in ((a, lasso_a), (b, lasso_b)):
        if cached is not None:
            fits.append(np.asarray(cached, dtype=float))
            continue
        result = lasso_local_min(A, S[idx, c], cfg)
        warnings.extend(w for w in result.warnings if w not in warnings)
        fits.append(result.coef)

    joint = np.union1d(support_of(fits[0], idx), support_of(fits[1], idx))
    refits = []
    for c in (a, b):
        refit = refit_on_support(S, joint, c, idx)
        if refit.ridge_used and "ridge_refit" not in warnings:
            warnings.append("ridge_refit")
        refits.append(refit.coef)

    return GammaPair(
        a=a, b=b, index_set=idx,
        gamma_a=refits[0], gamma_b=refits[1],
        support=joint, lam=lam, refit=True,
        lasso_a=fits[0], lasso_b=fits[1],
        warnings=warnings,
    )


def gamma_pair_on_support(sigma_hat, a: int, b: int, support: Sequence[int]) -> GammaPair:
    """Skip selection: refit both regressions on a known support (oracle variant)"""
    S = as_array(sigma_hat)
    p = S.shape[0]
    if a == b:
        raise DimensionMismatch("gamma pair needs a != b")
    idx = complement_indices(p, a, b)
    joint = np.array(sorted({int(j) for j in support} - {a, b}), dtype=int)
    warnings: List[str] = []
    refits = []
    for c in (a, b):
        refit = refit_on_support(S, joint, c, idx)
        if refit.ridge_used and "ridge_refit" not in warnings:
            warnings.append("ridge_refit")
        refits.append(refit.coef)
    return GammaPair(
        a=a, b=b, index_set=idx,
        gamma_a=refits[0], gamma_b=refits[1],
        support=joint, lam=0.0, refit=True,
        warnings=warnings,
    )


@dataclass(frozen=True)
class AllNodesFit:
    """coef[a] is a length-p vector (entry a is 0) from regressing node a on all others"""
    coef: Dict[int, np.ndarray]
    lam: float
    warnings: Dict[int, List[str]]

    @property
    def p(self) -> int:
        return len(self.coef)

    def reusable(self, a: int, b: int) -> bool:
        return abs(self.coef[a][b]) <= SUPPORT_TOL

    def restricted(self, a: int, b: int) -> np.ndarray:
        """Cached solution for node a, restricted to I = [p] minus {a, b}"""
        return self.coef[a][complement_indices(self.p, a, b)].copy()


def all_nodes_gamma(sigma_hat, cfg: LassoConfig, threads: Optional[int] = None) -> AllNodesFit:
    S = as_array(sigma_hat)
    p = S.shape[0]
    if p < 3:
        raise DimensionMismatch(f"all-nodes regression needs p >= 3, got {p}")
    lam = _require_lambda(cfg)

    def fit_node(a: int):
        others = np.array([j for j in range(p) if j != a], dtype=int)
        result = lasso_local_min(S[np.ix_(others, others)], S[others, a], cfg)
        full = np.zeros(p)
        full[others] = result.coef
        return full, result.warnings

    with ThreadPoolExecutor(max_workers=threads or 1) as executor:
        results = list(executor.map(fit_node, range(p)))

    coef = {a: results[a][0] for a in range(p)}
    warnings = {a: results[a][1] for a in range(p) if results[a][1]}
    reusable = sum(1 for a in range(p) for b in range(p) if a != b and abs(coef[a][b]) <= SUPPORT_TOL)
    logger.info(f"All-nodes Lasso done for p={p}; {reusable}/{p * (p - 1)} ordered pairs reusable")
    return AllNodesFit(coef=coef, lam=lam, warnings=warnings)
