"""Monte Carlo experiments (coverage, Q-Q, power, subsampling, contamination) and whole-graph estimation.

Every replication draws from its own generator seeded by (base_seed, keys...), so results do not depend
on the thread count; replications are merged back in index order.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.optimize import isotonic_regression

from app.baselines import npn_matrix, pearson_matrix, plugin_edge, precision_from_rows, pseudo_score_inference
from app.config import resolve_threads
from app.errors import ConfigError, DataError, InsufficientRows, RocketError
from app.rails import validation_rails
from app.rank_correlation import kendall_tau_matrix, sine_transform
from app.rocket_core import rocket_fit
from app.schemas import (
    AggregateRow,
    ContaminationSpec,
    EdgeInference,
    Estimator,
    ExperimentConfig,
    ExperimentReport,
    GraphEstimate,
    GraphKind,
    LassoConfig,
    PairResult,
    ReplicationRecord,
    TargetEdge,
)
from app.sparse_regression import all_nodes_gamma
from app.synthetic_data import (
    PopulationModel,
    apply_marginals,
    build_precision,
    contaminate,
    default_target_edges,
    sample_elliptical,
)
from app.utils import exact_sum, normal_quantile, replication_seed, z_quantile

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-10

# Scale used by --full; the desk-scale defaults live on ExperimentConfig
FULL_REPLICATIONS = 1000
FULL_GRID_SIDE = 30
FULL_CHAIN_P = 1000


def oracle_support(model: PopulationModel, a: int, b: int) -> List[int]:
    """Nodes j outside {a, b} adjacent to a or b in the true precision graph"""
    W = model.omega.entries
    return [j for j in range(model.dim) if j not in (a, b) and (abs(W[j, a]) > ORACLE_TOL or abs(W[j, b]) > ORACLE_TOL)]


def draw_dataset(config: ExperimentConfig, model: PopulationModel, n: int, rng: np.random.Generator,
                 contamination: Optional[ContaminationSpec] = None) -> np.ndarray:
    """Elliptical draw, then marginal transforms, then contamination (each from the same stream)"""
    scenario = config.scenario
    X = sample_elliptical(n, model.sigma, scenario.radius, rng)
    if scenario.marginals is not None:
        X = apply_marginals(X, scenario.marginals)
    contamination = contamination or scenario.contamination
    if contamination is not None and contamination.rate > 0:
        X = contaminate(X, contamination, seed=rng)
    return X


class ReplicationEstimates:
    """Per-dataset cache of the correlation matrices each estimator needs"""

    def __init__(self, X: np.ndarray, lasso: LassoConfig, alpha: float, model: Optional[PopulationModel] = None):
        self.X = X
        self.n, self.p = X.shape
        self.lasso = lasso.resolved(self.n, self.p)
        self.alpha = alpha
        self.model = model

    @cached_property
    def kendall(self):
        return kendall_tau_matrix(self.X)

    @cached_property
    def sigma_hat(self):
        return sine_transform(self.kendall)

    @cached_property
    def pearson(self):
        return pearson_matrix(self.X)

    @cached_property
    def npn(self):
        return npn_matrix(self.X)

    @cached_property
    def pseudo_omega(self):
        return precision_from_rows(self.sigma_hat, self.lasso)

    def infer(self, estimator: Estimator, a: int, b: int, **precomputed) -> EdgeInference:
        if estimator == Estimator.rocket:
            return rocket_fit(self.X, a, b, self.lasso, self.alpha,
                              kendall=self.kendall, sigma_hat=self.sigma_hat, **precomputed).inference
        if estimator == Estimator.rocket_oracle:
            if self.model is None:
                raise ConfigError("the oracle estimator needs the population model")
            return rocket_fit(self.X, a, b, LassoConfig(lam=0.0), self.alpha,
                              kendall=self.kendall, sigma_hat=self.sigma_hat,
                              support=oracle_support(self.model, a, b)).inference
        if estimator == Estimator.pearson:
            return plugin_edge(self.pearson, self.n, a, b, self.lasso, self.alpha, Estimator.pearson, **precomputed)
        if estimator == Estimator.npn:
            return plugin_edge(self.npn, self.n, a, b, self.lasso, self.alpha, Estimator.npn, **precomputed)
        if estimator == Estimator.pseudo_score:
            return pseudo_score_inference(self.sigma_hat, self.pseudo_omega, self.n, a, b, self.alpha)
        raise ConfigError(f"Unknown estimator: {estimator}")


def _record(replication: int, seed: int, estimator: Estimator, edge: TargetEdge,
            result: Optional[EdgeInference], failure: Optional[str], **extra) -> ReplicationRecord:
    label = edge.label or f"{edge.a}-{edge.b}"
    if result is None or not result.is_numeric:
        warnings = list(result.warnings) if result is not None else []
        if failure:
            warnings.append(failure)
        return ReplicationRecord(
            replication=replication, seed=seed, estimator=estimator, edge=label, a=edge.a, b=edge.b,
            truth=edge.truth,
            omega_ab=result.omega_ab if result is not None else None,
            s_ab=result.s_ab if result is not None else None,
            excluded=True, warnings=warnings, **extra,
        )
    covered = None
    if edge.truth is not None:
        covered = bool(result.ci_lo <= edge.truth <= result.ci_hi)
    return ReplicationRecord(
        replication=replication, seed=seed, estimator=estimator, edge=label, a=edge.a, b=edge.b,
        truth=edge.truth, omega_ab=result.omega_ab, s_ab=result.s_ab, z=result.z, p_value=result.p_value,
        ci_lo=result.ci_lo, ci_hi=result.ci_hi, covered=covered, width=result.width,
        warnings=list(result.warnings), **extra,
    )


def _replicate(config: ExperimentConfig, model: PopulationModel, edges: Sequence[TargetEdge], replication: int,
               seed: int, contamination: Optional[ContaminationSpec] = None, **extra) -> List[ReplicationRecord]:
    rng = np.random.default_rng(seed)
    X = draw_dataset(config, model, config.n, rng, contamination)
    cache = ReplicationEstimates(X, config.lasso, config.alpha, model)
    records = []
    for estimator in config.estimators:
        for edge in edges:
            result, failure = None, None
            try:
                result = cache.infer(estimator, edge.a, edge.b)
            except RocketError as e:
                failure = type(e).__name__
                logger.debug(f"Replication {replication}, {estimator.value} on ({edge.a}, {edge.b}) failed: {e}")
            records.append(_record(replication, seed, estimator, edge, result, failure, **extra))
    return records


def _run_replications(job: Callable[[int], List[ReplicationRecord]], count: int, threads: int) -> List[ReplicationRecord]:
    with ThreadPoolExecutor(max_workers=threads) as executor:
        batches = list(executor.map(job, range(count)))
    return [record for batch in batches for record in batch]


def _target_edges(config: ExperimentConfig, model: PopulationModel) -> List[TargetEdge]:
    if not config.edges:
        return default_target_edges(model)
    edges = []
    for edge in config.edges:
        truth = model.truth(edge.a, edge.b) if edge.truth is None else edge.truth
        edges.append(edge.model_copy(update={"truth": truth, "label": edge.label or f"{edge.a}-{edge.b}"}))
    return edges


def _group_key(record: ReplicationRecord) -> Tuple:
    return (record.estimator.value, record.edge, record.rho, record.rate)


def aggregate(records: Sequence[ReplicationRecord], alpha: float) -> List[AggregateRow]:
    """Coverage, mean width and rejection rate per (estimator, edge, rho, rate); excluded records are counted, not used"""
    groups: Dict[Tuple, List[ReplicationRecord]] = {}
    for record in records:
        groups.setdefault(_group_key(record), []).append(record)

    rows = []
    for key, members in groups.items():
        used = [r for r in members if not r.excluded]
        first = members[0]
        coverage = mean_width = power = None
        if used:
            covered = [r.covered for r in used if r.covered is not None]
            if covered:
                coverage = sum(covered) / len(covered)
            mean_width = exact_sum(r.width for r in used) / len(used)
            pvalues = [r.p_value for r in used if r.p_value is not None and not math.isnan(r.p_value)]
            if pvalues:
                power = sum(1 for pv in pvalues if pv < alpha) / len(pvalues)
        rows.append(AggregateRow(
            estimator=first.estimator, edge=first.edge, truth=first.truth, rho=first.rho, rate=first.rate,
            replications=len(members), used=len(used), excluded=len(members) - len(used),
            coverage=coverage, mean_width=mean_width, power=power,
        ))
    return rows


def _report(kind: str, config: ExperimentConfig, records, aggregates, start_time: float, summary=None) -> ExperimentReport:
    runtime = time.time() - start_time
    excluded = sum(1 for r in records if r.excluded)
    if excluded:
        logger.warning(f"{kind} run excluded {excluded}/{len(records)} records as non-numeric")
    logger.info(f"{kind} run finished: {len(records)} records in {runtime:.2f}s")
    return ExperimentReport(kind=kind, config=config, records=list(records), aggregates=list(aggregates),
                            summary=summary or {}, runtime_seconds=runtime)


def run_coverage(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentReport:
    """Empirical coverage and mean width of the (1 - alpha) intervals per estimator and target edge"""
    start_time = time.time()
    threads = resolve_threads(threads if threads is not None else config.threads)
    model = build_precision(config.scenario.graph)
    edges = _target_edges(config, model)
    logger.info(f"Coverage run: p={model.dim}, n={config.n}, R={config.replications}, "
                f"estimators={[e.value for e in config.estimators]}, threads={threads}")

    def job(i: int):
        return _replicate(config, model, edges, i, replication_seed(config.base_seed, i))

    records = _run_replications(job, config.replications, threads)
    return _report("coverage", config, records, aggregate(records, config.alpha), start_time)


def run_qq(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentReport:
    """Standardized errors sqrt(n)(omega_hat - omega)/s_ab with their mean, variance and KS distance to N(0,1)"""
    start_time = time.time()
    threads = resolve_threads(threads if threads is not None else config.threads)
    model = build_precision(config.scenario.graph)
    edges = _target_edges(config, model)
    sqrt_n = math.sqrt(config.n)

    def job(i: int):
        seed = replication_seed(config.base_seed, i)
        records = _replicate(config, model, edges, i, seed)
        out = []
        for r in records:
            if not r.excluded:
                r = r.model_copy(update={"z": sqrt_n * (r.omega_ab - r.truth) / r.s_ab})
            out.append(r)
        return out

    records = _run_replications(job, config.replications, threads)
    summary = {}
    for (estimator, edge), errors in _standardized_errors(records).items():
        if errors.size:
            summary[f"{estimator}.{edge}.mean"] = float(errors.mean())
            summary[f"{estimator}.{edge}.variance"] = float(errors.var(ddof=1)) if errors.size > 1 else float("nan")
            summary[f"{estimator}.{edge}.ks"] = float(stats.kstest(errors, "norm").statistic)
    return _report("qq", config, records, aggregate(records, config.alpha), start_time, summary)


def _standardized_errors(records: Sequence[ReplicationRecord]) -> Dict[Tuple[str, str], np.ndarray]:
    groups: Dict[Tuple[str, str], List[float]] = {}
    for r in records:
        values = groups.setdefault((r.estimator.value, r.edge), [])
        if not r.excluded and r.z is not None:
            values.append(r.z)
    return {key: np.asarray(v, dtype=float) for key, v in groups.items()}


def qq_table(report: ExperimentReport) -> pd.DataFrame:
    """One row per replication and estimator: sorted standardized error against the normal quantile"""
    rows = []
    excluded: Dict[Tuple[str, str], int] = {}
    for r in report.records:
        if r.excluded:
            excluded[(r.estimator.value, r.edge)] = excluded.get((r.estimator.value, r.edge), 0) + 1
    for (estimator, edge), errors in _standardized_errors(report.records).items():
        ordered = np.sort(errors)
        m = ordered.size
        theoretical = normal_quantile((np.arange(1, m + 1) - 0.5) / m) if m else np.zeros(0)
        for k in range(m):
            rows.append({"estimator": estimator, "edge": edge, "rank": k + 1,
                         "theoretical": float(theoretical[k]), "empirical": float(ordered[k])})
        for k in range(excluded.get((estimator, edge), 0)):
            rows.append({"estimator": estimator, "edge": edge, "rank": m + k + 1,
                         "theoretical": float("nan"), "empirical": float("nan")})
    return pd.DataFrame(rows, columns=["estimator", "edge", "rank", "theoretical", "empirical"])


def run_power(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentReport:
    """Rejection rate of H0: Omega_12 = 0 on the pair design across the rho grid, with a monotone smooth"""
    start_time = time.time()
    threads = resolve_threads(threads if threads is not None else config.threads)
    graph = config.scenario.graph
    if graph.kind.value != "pair":
        raise ConfigError("power runs need the pair design")
    records: List[ReplicationRecord] = []
    for k, rho in enumerate(config.power.rho_grid):
        model = build_precision(graph.with_rho(rho))
        edge = TargetEdge(a=0, b=1, label="1-2", truth=model.truth(0, 1))
        logger.info(f"Power run at rho={rho}: truth Omega_12={edge.truth:.4f}")

        def job(i: int, k=k, rho=rho, model=model, edge=edge):
            return _replicate(config, model, [edge], i, replication_seed(config.base_seed, k, i), rho=rho)

        records.extend(_run_replications(job, config.replications, threads))

    aggregates = aggregate(records, config.alpha)
    aggregates = _smooth_power(aggregates)
    return _report("power", config, records, aggregates, start_time)


def _smooth_power(rows: List[AggregateRow]) -> List[AggregateRow]:
    """Isotonic fit of power in |rho| per estimator"""
    by_estimator: Dict[str, List[int]] = {}
    for i, row in enumerate(rows):
        by_estimator.setdefault(row.estimator.value, []).append(i)
    rows = list(rows)
    for indices in by_estimator.values():
        usable = [i for i in indices if rows[i].power is not None and rows[i].used > 0]
        ordered = sorted(usable, key=lambda i: abs(rows[i].rho or 0.0))
        if not ordered:
            continue
        fitted = isotonic_regression(
            [rows[i].power for i in ordered], weights=[float(rows[i].used) for i in ordered], increasing=True
        ).x
        for i, value in zip(ordered, fitted):
            rows[i] = rows[i].model_copy(update={"power_smoothed": float(value)})
    return rows


def run_contamination(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentReport:
    """Coverage under each contamination rate of the configured mechanism"""
    start_time = time.time()
    threads = resolve_threads(threads if threads is not None else config.threads)
    base = config.scenario.contamination
    if base is None:
        raise ConfigError("contamination runs need a [contamination] mechanism")
    for rate in config.rates:
        validation_rails.require_rate(rate)
    model = build_precision(config.scenario.graph)
    edges = _target_edges(config, model)
    records: List[ReplicationRecord] = []
    for k, rate in enumerate(config.rates):
        spec = base.model_copy(update={"rate": rate})
        logger.info(f"Contamination run: {spec.mechanism.value} at rate {rate}")

        def job(i: int, k=k, rate=rate, spec=spec):
            return _replicate(config, model, edges, i, replication_seed(config.base_seed, k, i), spec, rate=rate)

        records.extend(_run_replications(job, config.replications, threads))
    return _report("contamination", config, records, aggregate(records, config.alpha), start_time)


def pairwise_inference(X, estimator: Estimator, lasso: LassoConfig, alpha: float = 0.05,
                       threads: Optional[int] = None) -> List[Tuple[int, int, Optional[EdgeInference], List[str]]]:
    """Inference for every pair a < b; rank estimators reuse all-nodes Lasso fits where allowed"""
    if estimator == Estimator.rocket_oracle:
        raise ConfigError("the oracle estimator needs a known population model; use it in synthetic runs only")
    X = validation_rails.require_data_matrix(X, min_rows=3, min_cols=3)
    threads = resolve_threads(threads)
    cache = ReplicationEstimates(X, lasso, alpha)
    if estimator == Estimator.rocket:
        matrix = cache.sigma_hat
    elif estimator == Estimator.pearson:
        matrix = cache.pearson
    elif estimator == Estimator.npn:
        matrix = cache.npn
    else:
        matrix = None
    fit = all_nodes_gamma(matrix, cache.lasso, threads=threads) if matrix is not None else None
    if estimator == Estimator.pseudo_score:
        # cached_property is not locked; fill the shared precision before the workers start
        try:
            cache.pseudo_omega
        except RocketError as e:
            logger.warning(f"pseudo-score precision failed: {type(e).__name__}: {e}")

    def one(pair: Tuple[int, int]):
        a, b = pair
        precomputed = {}
        notes = []
        if fit is not None:
            if fit.reusable(a, b):
                precomputed["lasso_a"] = fit.restricted(a, b)
                notes.append("reused_a")
            if fit.reusable(b, a):
                precomputed["lasso_b"] = fit.restricted(b, a)
                notes.append("reused_b")
        try:
            return a, b, cache.infer(estimator, a, b, **precomputed), notes
        except RocketError as e:
            return a, b, None, notes + [type(e).__name__]

    pairs = list(combinations(range(cache.p), 2))
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(one, pairs))


def estimate_graph(X, threshold: float, lasso: Optional[LassoConfig] = None, alpha: float = 0.05,
                   threads: Optional[int] = None) -> GraphEstimate:
    """Edge (a, b) is declared when the ROCKET p-value falls below threshold"""
    if not 0.0 < threshold < 1.0:
        raise DataError("threshold must lie in (0, 1)")
    X = np.asarray(X, dtype=float)
    results = pairwise_inference(X, Estimator.rocket, lasso or LassoConfig(), alpha, threads)
    pairs, edges, skipped = [], [], 0
    for a, b, inference, notes in results:
        reused_a, reused_b = "reused_a" in notes, "reused_b" in notes
        failures = [w for w in notes if w not in ("reused_a", "reused_b")]
        if inference is None or not inference.is_numeric or math.isnan(inference.p_value):
            skipped += 1
            warnings = failures + (list(inference.warnings) if inference is not None else [])
            pairs.append(PairResult(a=a, b=b, reused_a=reused_a, reused_b=reused_b, warnings=warnings))
            continue
        is_edge = inference.p_value < threshold
        if is_edge:
            edges.append([a, b])
        pairs.append(PairResult(
            a=a, b=b, omega_ab=inference.omega_ab, s_ab=inference.s_ab, z=inference.z,
            p_value=inference.p_value, edge=is_edge, reused_a=reused_a, reused_b=reused_b,
            warnings=list(inference.warnings),
        ))
    logger.info(f"Graph estimate: {len(edges)} edges among {len(pairs)} pairs, {skipped} skipped")
    return GraphEstimate(p=X.shape[1], n=X.shape[0], threshold=threshold, pairs=pairs, edges=edges, skipped=skipped)


def run_subsample_protocol(config: ExperimentConfig, data: Optional[np.ndarray] = None,
                           threads: Optional[int] = None) -> ExperimentReport:
    """Split N rows into L disjoint subsamples of n_sub rows and check, per pair, that
    z = sqrt(n_sub) * omega_hat / s_ab has variance near 1 across subsamples and stays in the
    band |z - mean z| <= z_{0.05} sqrt(1 - 1/L).

    Records carry replication_seed(base_seed, 1, ell) as the id of subsample ell; the row split itself
    comes from the permutation drawn with replication_seed(base_seed, 1).
    """
    start_time = time.time()
    threads = resolve_threads(threads if threads is not None else config.threads)
    settings = config.subsample
    L, n_sub = settings.subsamples, settings.n_sub
    if Estimator.rocket_oracle in config.estimators:
        raise ConfigError("the subsampling protocol has no population model for the oracle estimator")
    if data is None:
        model = build_precision(config.scenario.graph)
        data = draw_dataset(config, model, L * n_sub, np.random.default_rng(replication_seed(config.base_seed)))
    data = validation_rails.require_data_matrix(data, min_rows=3, min_cols=3)
    N = data.shape[0]
    if N < L * n_sub:
        raise InsufficientRows(f"subsampling needs at least {L * n_sub} rows, got {N}")
    order = np.random.default_rng(replication_seed(config.base_seed, 1)).permutation(N)[: L * n_sub]
    blocks = order.reshape(L, n_sub)

    records: List[ReplicationRecord] = []
    for ell in range(L):
        X = data[np.sort(blocks[ell])]
        seed = replication_seed(config.base_seed, 1, ell)
        for estimator in config.estimators:
            for a, b, inference, notes in pairwise_inference(X, estimator, config.lasso, config.alpha, threads):
                edge = TargetEdge(a=a, b=b, label=f"{a}-{b}")
                failure = next((w for w in notes if w not in ("reused_a", "reused_b")), None)
                records.append(_record(ell, seed, estimator, edge, inference, failure))

    band = z_quantile(0.10) * math.sqrt(1.0 - 1.0 / L)
    table = subsample_table(records, band)
    summary = {}
    for estimator, group in table.groupby("estimator"):
        summary[f"{estimator}.mean_variance"] = float(group["variance"].mean())
        summary[f"{estimator}.band_proportion"] = float(group["in_band"].mean())
    summary["band_halfwidth"] = band
    return _report("subsample", config, records, [], start_time, summary)


def subsample_table(records: Sequence[ReplicationRecord], band: float) -> pd.DataFrame:
    """Per (estimator, pair): sample variance of z across subsamples and the in-band proportion"""
    groups: Dict[Tuple[str, str], List[float]] = {}
    for r in records:
        values = groups.setdefault((r.estimator.value, r.edge), [])
        if not r.excluded and r.z is not None and math.isfinite(r.z):
            values.append(r.z)
    rows = []
    for (estimator, edge), values in groups.items():
        z = np.asarray(values, dtype=float)
        variance = float(z.var(ddof=1)) if z.size > 1 else float("nan")
        in_band = float(np.mean(np.abs(z - z.mean()) <= band)) if z.size else float("nan")
        rows.append({"estimator": estimator, "edge": edge, "used": int(z.size), "variance": variance, "in_band": in_band})
    return pd.DataFrame(rows, columns=["estimator", "edge", "used", "variance", "in_band"])


def apply_full_scale(config: ExperimentConfig) -> ExperimentConfig:
    """Grid side 30, chain p = 1000 and 1000 replications; the pair design keeps its p"""
    graph = config.scenario.graph
    if graph.kind == GraphKind.grid:
        graph = graph.model_copy(update={"side": FULL_GRID_SIDE})
    elif graph.kind == GraphKind.chain:
        graph = graph.model_copy(update={"p": FULL_CHAIN_P})
    scenario = config.scenario.model_copy(update={"graph": graph})
    data = config.model_dump()
    data.update(scenario=scenario.model_dump(), replications=FULL_REPLICATIONS, edges=[])
    return ExperimentConfig.model_validate(data)
