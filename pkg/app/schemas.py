import logging
import math
from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

DEFAULT_TRANSFORMS = ["identity", "signed_sqrt", "cube", "normal_cdf", "exp"]


class GraphKind(str, Enum):
    grid = "grid"
    chain = "chain"
    pair = "pair"


class GraphSpec(BaseModel):
    """grid(side, omega), chain(p, rho_chain) or pair(p, rho)"""
    model_config = ConfigDict(frozen=True)

    kind: GraphKind = GraphKind.grid
    side: Optional[int] = Field(default=None, ge=1)
    p: Optional[int] = Field(default=None, ge=2)
    omega: float = 0.24
    rho_chain: float = 0.5
    rho: float = 0.0

    @model_validator(mode="after")
    def check_dimensions(self):
        if self.kind == GraphKind.grid:
            if self.side is None:
                raise ValueError("grid spec needs 'side'")
            if self.side * self.side < 2:
                raise ValueError("grid spec needs side >= 2")
        elif self.p is None:
            raise ValueError(f"{self.kind.value} spec needs 'p'")
        if self.kind == GraphKind.pair and not -1.0 < self.rho < 1.0:
            raise ValueError("pair spec needs rho in (-1, 1)")
        return self

    @property
    def dim(self) -> int:
        if self.kind == GraphKind.grid:
            return self.side * self.side
        return self.p

    def with_rho(self, rho: float) -> "GraphSpec":
        return self.model_copy(update={"rho": rho})


class RadiusKind(str, Enum):
    chi = "chi"            # Gaussian: xi ~ chi_p
    abs_t = "abs_t"        # xi = |t_d|
    mvt = "mvt"            # multivariate t: xi = chi_p * sqrt(d) / chi_d
    constant = "constant"  # xi = scale


class RadiusLaw(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: RadiusKind = RadiusKind.abs_t
    df: float = Field(default=5.0, gt=0)
    scale: float = Field(default=1.0, gt=0)


class MarginalSet(BaseModel):
    """Transform j (0-based) is transforms[j mod len(transforms)]"""
    model_config = ConfigDict(frozen=True)

    transforms: List[str] = Field(default_factory=lambda: list(DEFAULT_TRANSFORMS))

    @field_validator("transforms")
    @classmethod
    def validate_transforms(cls, v):
        from app.synthetic_data import MARGINAL_TRANSFORMS

        if not v:
            raise ValueError("marginal set needs at least one transform")
        unknown = [name for name in v if name not in MARGINAL_TRANSFORMS]
        if unknown:
            raise ValueError(f"unknown marginal transforms: {unknown}")
        return v


class ContaminationMechanism(str, Enum):
    random_row = "random_row"
    deterministic_row = "deterministic_row"
    element = "element"


class ContaminationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mechanism: ContaminationMechanism
    rate: float
    seed: Optional[int] = None


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    graph: GraphSpec = Field(default_factory=lambda: GraphSpec(kind=GraphKind.grid, side=10))
    radius: RadiusLaw = Field(default_factory=RadiusLaw)
    marginals: Optional[MarginalSet] = None
    contamination: Optional[ContaminationSpec] = None


class LassoConfig(BaseModel):
    lam: Optional[float] = Field(default=None, ge=0, alias="lambda")
    radius: float = Field(default=1e6, gt=0)
    tol: float = Field(default=1e-7, gt=0)
    max_sweeps: int = Field(default=10000, ge=1)
    strict: bool = False  # raise NotConverged instead of flagging

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    def resolved(self, n: int, p: int) -> "LassoConfig":
        """Fill in the default penalty for this problem size"""
        if self.lam is not None:
            return self
        from app.sparse_regression import default_lambda

        return self.model_copy(update={"lam": default_lambda(n, p)})


class Estimator(str, Enum):
    rocket = "rocket"
    rocket_oracle = "rocket_oracle"
    pearson = "pearson"
    npn = "npn"
    pseudo_score = "pseudo_score"


class TargetEdge(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: int = Field(ge=0)
    b: int = Field(ge=0)
    label: Optional[str] = None
    truth: Optional[float] = None

    @model_validator(mode="after")
    def distinct(self):
        if self.a == self.b:
            raise ValueError("target edge needs a != b")
        return self


class PowerSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    rho_grid: List[float] = Field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4, 0.5])

    @field_validator("rho_grid")
    @classmethod
    def check_rho(cls, v):
        if any(not -1.0 < r < 1.0 for r in v):
            raise ValueError("every rho must lie in (-1, 1)")
        return v


class SubsampleSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    subsamples: int = Field(default=25, ge=2)
    n_sub: int = Field(default=50, ge=3)
    data_path: Optional[str] = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: Scenario = Field(default_factory=Scenario)
    n: int = Field(default=400, ge=3)
    replications: int = Field(default=200, ge=1)
    edges: List[TargetEdge] = Field(default_factory=list)
    estimators: List[Estimator] = Field(default_factory=lambda: [Estimator.rocket])
    alpha: float = Field(default=0.05, gt=0, lt=1)
    lasso: LassoConfig = Field(default_factory=LassoConfig)
    base_seed: int = 0
    threads: Optional[int] = Field(default=None, ge=1)
    power: PowerSettings = Field(default_factory=PowerSettings)
    subsample: SubsampleSettings = Field(default_factory=SubsampleSettings)
    rates: List[float] = Field(default_factory=lambda: [0.01, 0.05, 0.1])

    @model_validator(mode="after")
    def edges_in_range(self):
        p = self.scenario.graph.dim
        for edge in self.edges:
            if edge.a >= p or edge.b >= p:
                raise ValueError(f"edge ({edge.a}, {edge.b}) outside 0..{p - 1}")
        return self


class ThetaBlock(BaseModel):
    """2x2 symmetric block indexed by the labels {a, b}"""
    model_config = ConfigDict(frozen=True)

    a: int
    b: int
    aa: float
    ab: float
    bb: float

    @property
    def det(self) -> float:
        return self.aa * self.bb - self.ab * self.ab

    def as_matrix(self):
        import numpy as np

        return np.array([[self.aa, self.ab], [self.ab, self.bb]], dtype=float)


class EdgeInference(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: int
    b: int
    estimator: Estimator = Estimator.rocket
    theta: ThetaBlock
    omega_ab: float
    s_ab: float
    z: float
    ci_lo: float
    ci_hi: float
    p_value: float
    alpha: float
    n: int
    support_size: int = 0
    warnings: List[str] = Field(default_factory=list)

    @property
    def width(self) -> float:
        return self.ci_hi - self.ci_lo

    @property
    def is_numeric(self) -> bool:
        return all(math.isfinite(v) for v in (self.omega_ab, self.s_ab, self.ci_lo, self.ci_hi)) and self.s_ab > 0


class ReplicationRecord(BaseModel):
    replication: int
    seed: int
    estimator: Estimator
    edge: str
    a: int
    b: int
    truth: Optional[float] = None
    omega_ab: Optional[float] = None
    s_ab: Optional[float] = None
    z: Optional[float] = None
    p_value: Optional[float] = None
    ci_lo: Optional[float] = None
    ci_hi: Optional[float] = None
    covered: Optional[bool] = None
    width: Optional[float] = None
    rho: Optional[float] = None
    rate: Optional[float] = None
    excluded: bool = False
    warnings: List[str] = Field(default_factory=list)


class AggregateRow(BaseModel):
    estimator: Estimator
    edge: str
    truth: Optional[float] = None
    rho: Optional[float] = None
    rate: Optional[float] = None
    replications: int
    used: int
    excluded: int
    coverage: Optional[float] = None
    mean_width: Optional[float] = None
    power: Optional[float] = None
    power_smoothed: Optional[float] = None


class ExperimentReport(BaseModel):
    format_version: int = FORMAT_VERSION
    kind: Literal["coverage", "qq", "power", "subsample", "contamination"]
    config: ExperimentConfig
    records: List[ReplicationRecord] = Field(default_factory=list)
    aggregates: List[AggregateRow] = Field(default_factory=list)
    summary: Dict[str, float] = Field(default_factory=dict)
    runtime_seconds: float = 0.0
    variance_convention: str = (
        "CI = omega +/- z_{alpha/2} * s_ab / sqrt(n); s_ab is stored without the 1/n factor for every estimator. "
        "pseudo_score uses the plug-in surrogate variance."
    )


class PairResult(BaseModel):
    a: int
    b: int
    omega_ab: Optional[float] = None
    s_ab: Optional[float] = None
    z: Optional[float] = None
    p_value: Optional[float] = None
    edge: bool = False
    reused_a: bool = False
    reused_b: bool = False
    warnings: List[str] = Field(default_factory=list)


class GraphEstimate(BaseModel):
    p: int
    n: int
    threshold: float
    pairs: List[PairResult]
    edges: List[List[int]]
    skipped: int = 0


# HTTP payloads

class EdgeRequest(BaseModel):
    data: List[List[float]] = Field(..., min_length=3)
    a: int = Field(..., ge=0)
    b: int = Field(..., ge=0)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    lam: Optional[float] = Field(default=None, ge=0)
    estimator: Estimator = Estimator.rocket

    @model_validator(mode="after")
    def distinct(self):
        if self.a == self.b:
            raise ValueError("a and b must differ")
        return self


class GraphRequest(BaseModel):
    data: List[List[float]] = Field(..., min_length=3)
    threshold: float = Field(default=0.001, gt=0, lt=1)
    lam: Optional[float] = Field(default=None, ge=0)


class CoverageRequest(BaseModel):
    config: ExperimentConfig

    @field_validator("config")
    @classmethod
    def cap_replications(cls, v):
        if v.replications > 50:
            raise ValueError("HTTP coverage runs are capped at 50 replications; use the CLI for more")
        return v
