"""Simulation designs: structured precision matrices, (trans)elliptical sampling,
marginal transforms, contamination and empirical tail dependence."""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import ndtr

from app.errors import (
    CholeskyFailure,
    ConfigError,
    DegenerateIndicator,
    DimensionMismatch,
    NotPositiveDefinite,
    TooFewSamples,
)
from app.matrix_core import CorrelationMatrix, SquareMatrix, as_array, dense_inverse, normalize_to_correlation
from app.rails import validation_rails
from app.schemas import (
    ContaminationMechanism,
    ContaminationSpec,
    GraphKind,
    GraphSpec,
    MarginalSet,
    RadiusKind,
    RadiusLaw,
    TargetEdge,
)
from app.utils import make_rng

logger = logging.getLogger(__name__)

MARGINAL_TRANSFORMS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda x: x,
    "signed_sqrt": lambda x: np.sign(x) * np.sqrt(np.abs(x)),
    "cube": lambda x: x ** 3,
    "normal_cdf": ndtr,
    "exp": np.exp,
}

DETERMINISTIC_ROW_VALUE = 5.0
ELEMENT_SHIFT = 3.0
ELEMENT_VARIANCE = 3.0
ROW_T_DF = 1.5


@dataclass(frozen=True)
class PopulationModel:
    """omega0: the raw design; sigma: its normalized inverse; omega: sigma^{-1}"""
    spec: GraphSpec
    omega0: SquareMatrix
    sigma: CorrelationMatrix
    omega: SquareMatrix

    @property
    def dim(self) -> int:
        return self.sigma.dim

    def truth(self, a: int, b: int) -> float:
        return float(self.omega.entries[a, b])


def grid_index(side: int, row: int, col: int) -> int:
    """1-based grid coordinates to a 0-based node index (row-major)"""
    if not (1 <= row <= side and 1 <= col <= side):
        raise DimensionMismatch(f"grid coordinate ({row}, {col}) outside a {side} x {side} grid")
    return (row - 1) * side + (col - 1)


def _grid_omega0(side: int, omega: float) -> np.ndarray:
    p = side * side
    M = np.eye(p)
    for r in range(1, side + 1):
        for c in range(1, side + 1):
            j = grid_index(side, r, c)
            if c < side:
                k = grid_index(side, r, c + 1)
                M[j, k] = M[k, j] = omega
            if r < side:
                k = grid_index(side, r + 1, c)
                M[j, k] = M[k, j] = omega
    return M


def _chain_omega0(p: int, rho_chain: float) -> np.ndarray:
    M = np.eye(p)
    idx = np.arange(p - 1)
    M[idx, idx + 1] = rho_chain
    M[idx + 1, idx] = rho_chain
    return M


def _require_pd(M: np.ndarray, what: str):
    smallest = float(np.linalg.eigvalsh(M)[0])
    if smallest <= 0:
        raise NotPositiveDefinite(f"{what} is not positive definite (smallest eigenvalue {smallest:.3e})")


def build_precision(spec: GraphSpec) -> PopulationModel:
    if spec.kind == GraphKind.pair:
        sigma = np.eye(spec.p)
        sigma[0, 1] = sigma[1, 0] = spec.rho
        _require_pd(sigma, "pair covariance I + E")
        omega = dense_inverse(sigma)
        return PopulationModel(spec, SquareMatrix(omega), CorrelationMatrix(sigma), SquareMatrix(omega))

    if spec.kind == GraphKind.grid:
        omega0 = _grid_omega0(spec.side, spec.omega)
    else:
        omega0 = _chain_omega0(spec.p, spec.rho_chain)
    _require_pd(omega0, f"{spec.kind.value} precision")

    sigma = normalize_to_correlation(dense_inverse(omega0))
    omega = dense_inverse(sigma)
    logger.info(f"Built {spec.kind.value} population model with p={omega0.shape[0]}")
    return PopulationModel(spec, SquareMatrix(omega0), sigma, SquareMatrix(omega))


def default_target_edges(model: PopulationModel) -> List[TargetEdge]:
    """Edge, close non-edge and far non-edge for each design"""
    spec = model.spec
    if spec.kind == GraphKind.grid:
        side = spec.side
        far = min(side, 10)
        candidates = [
            ("(2,2)-(2,3)", (2, 2), (2, 3)),
            ("(2,2)-(3,3)", (2, 2), (3, 3)),
            (f"(2,2)-({far},{far})", (2, 2), (far, far)),
        ]
        pairs = []
        for label, u, v in candidates:
            if max(u + v) <= side and u != v:
                pairs.append((label, grid_index(side, *u), grid_index(side, *v)))
    elif spec.kind == GraphKind.chain:
        p = spec.p
        pairs = [(f"{a}-{b}", a - 1, b - 1) for a, b in ((10, 11), (10, 12), (10, 20)) if b <= p]
        if not pairs:
            pairs = [("1-2", 0, 1)]
    else:
        pairs = [("1-2", 0, 1)]

    seen = set()
    edges = []
    for label, a, b in pairs:
        if (a, b) in seen or a == b:
            continue
        seen.add((a, b))
        edges.append(TargetEdge(a=a, b=b, label=label, truth=model.truth(a, b)))
    return edges


def _positive(draw: Callable[[int], np.ndarray], size: int) -> np.ndarray:
    """Redraw any exact zeros"""
    out = np.asarray(draw(size), dtype=float)
    zero = out == 0
    while np.any(zero):
        out[zero] = draw(int(zero.sum()))
        zero = out == 0
    return out


def draw_radius(law: RadiusLaw, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    df = law.df
    if law.kind == RadiusKind.chi or (law.kind == RadiusKind.mvt and math.isinf(df)):
        xi = np.sqrt(_positive(lambda m: rng.chisquare(p, m), n))
    elif law.kind == RadiusKind.abs_t:
        if math.isinf(df):
            xi = np.abs(_positive(rng.standard_normal, n))
        else:
            num = _positive(rng.standard_normal, n)
            den = _positive(lambda m: rng.chisquare(df, m), n)
            xi = np.abs(num / np.sqrt(den / df))
    elif law.kind == RadiusKind.mvt:
        chi_p = _positive(lambda m: rng.chisquare(p, m), n)
        chi_d = _positive(lambda m: rng.chisquare(df, m), n)
        xi = np.sqrt(chi_p) * np.sqrt(df / chi_d)
    else:
        xi = np.ones(n)
    return law.scale * xi


def sample_elliptical(n: int, sigma, law: RadiusLaw, seed=None) -> np.ndarray:
    """Rows xi_i * A U_i with A the lower Cholesky factor of sigma and U_i uniform on the sphere"""
    if n < 1:
        raise TooFewSamples(f"need n >= 1 samples, got {n}")
    S = as_array(sigma)
    rng = make_rng(seed)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as e:
        raise CholeskyFailure(f"Cholesky factorization failed: {e}")
    p = S.shape[0]
    Z = rng.standard_normal((n, p))
    norms = np.linalg.norm(Z, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        Z[bad] = rng.standard_normal((int(bad.sum()), p))
        norms = np.linalg.norm(Z, axis=1)
    U = Z / norms[:, None]
    xi = draw_radius(law, n, p, rng)
    return xi[:, None] * (U @ L.T)


def apply_marginals(X: np.ndarray, marginals: MarginalSet) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.empty_like(X)
    names = marginals.transforms
    for j in range(X.shape[1]):
        out[:, j] = MARGINAL_TRANSFORMS[names[j % len(names)]](X[:, j])
    return out


def _corrupted_count(total: int, rate: float) -> int:
    return int(math.floor(total * rate + 1e-9))


def contaminate(X: np.ndarray, spec: ContaminationSpec, seed=None) -> np.ndarray:
    validation_rails.require_rate(spec.rate)
    X = np.array(X, dtype=float, copy=True)
    n, p = X.shape
    rng = make_rng(spec.seed if seed is None else seed)

    if spec.mechanism == ContaminationMechanism.element:
        count = _corrupted_count(n * p, spec.rate)
        if count == 0:
            return X
        cells = rng.choice(n * p, size=count, replace=False)
        signs = rng.choice(np.array([-1.0, 1.0]), size=count)
        values = signs * ELEMENT_SHIFT + math.sqrt(ELEMENT_VARIANCE) * rng.standard_normal(count)
        X.reshape(-1)[cells] = values
        logger.debug(f"Element contamination replaced {count} cells")
        return X

    count = _corrupted_count(n, spec.rate)
    if count == 0:
        return X
    rows = rng.choice(n, size=count, replace=False)
    if spec.mechanism == ContaminationMechanism.random_row:
        X[rows] = rng.standard_t(ROW_T_DF, size=(count, p))
    else:
        pattern = DETERMINISTIC_ROW_VALUE * np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
        X[rows] = pattern
    logger.debug(f"{spec.mechanism.value} contamination replaced {count} rows")
    return X


def empirical_tail_dependence(X: np.ndarray, a: int, b: int, alpha: float) -> float:
    """Correlation of the exceedance indicators 1{X_a >= q_alpha} and 1{X_b >= q_alpha}"""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 10:
        raise TooFewSamples(f"tail dependence needs n >= 10, got {X.shape[0]}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    ind = []
    for c in (a, b):
        col = X[:, c]
        hit = (col >= np.quantile(col, alpha)).astype(float)
        if hit.min() == hit.max():
            raise DegenerateIndicator(f"exceedance indicator of column {c} is constant at alpha={alpha}")
        ind.append(hit)
    return float(np.corrcoef(ind[0], ind[1])[0, 1])


def tail_dependence_curve(
    dfs: Sequence[float] = (0.1, 1.0, 5.0, 10.0, math.inf),
    alphas: Optional[Sequence[float]] = None,
    n: int = 20000,
    sigma12: float = 1.0 / math.sqrt(2.0),
    seed: int = 0,
) -> pd.DataFrame:
    """Tail_alpha for bivariate multivariate-t data (d = inf is Gaussian), plot-ready"""
    if alphas is None:
        alphas = [round(0.5 + 0.05 * k, 2) for k in range(10)]
    sigma = np.array([[1.0, sigma12], [sigma12, 1.0]])
    rows = []
    for idx, df in enumerate(dfs):
        law = RadiusLaw(kind=RadiusKind.mvt, df=df)
        X = sample_elliptical(n, sigma, law, np.random.default_rng([seed, idx]))
        for alpha in alphas:
            try:
                value = empirical_tail_dependence(X, 0, 1, alpha)
            except DegenerateIndicator:
                value = float("nan")
            rows.append({"df": df, "alpha": alpha, "tail": value})
    logger.info(f"Tail dependence curve computed for {len(dfs)} radius laws, {len(alphas)} levels")
    return pd.DataFrame(rows, columns=["df", "alpha", "tail"])
