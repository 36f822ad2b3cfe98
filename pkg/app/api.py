import logging
import time

from fastapi import APIRouter, HTTPException
from fastapi.concurrency import run_in_threadpool

from app.errors import ConfigError, DataError, NumericalError
from app.harness import ReplicationEstimates, estimate_graph, run_coverage
from app.rails import validation_rails
from app.schemas import (
    CoverageRequest,
    EdgeInference,
    EdgeRequest,
    ExperimentReport,
    GraphEstimate,
    GraphRequest,
    LassoConfig,
)

logger = logging.getLogger(__name__)
router = APIRouter()

# HTTP runs stay small; the CLI handles long experiments
HTTP_THREADS = 2


def _raise_http(e: Exception, where: str):
    if isinstance(e, (DataError, ConfigError)):
        logger.warning(f"Rejected {where}: {e}")
        raise HTTPException(status_code=400, detail=f"{type(e).__name__}: {e}")
    if isinstance(e, NumericalError):
        logger.warning(f"Numerical failure in {where}: {e}")
        raise HTTPException(status_code=422, detail=f"{type(e).__name__}: {e}")
    logger.error(f"Error in {where}: {e}")
    raise HTTPException(status_code=500, detail=str(e))


@router.post("/estimate/edge", response_model=EdgeInference)
async def estimate_edge(request: EdgeRequest):
    """Point estimate, CI and p-value for one entry Omega_ab"""
    logger.info(f"POST /estimate/edge called for pair ({request.a}, {request.b}), estimator {request.estimator.value}")
    valid_data, data_msg = validation_rails.validate_data_matrix(request.data, min_rows=3, min_cols=3)
    if not valid_data:
        raise HTTPException(status_code=400, detail=data_msg)
    p = len(request.data[0])
    valid_pair, pair_msg = validation_rails.validate_pair(p, request.a, request.b)
    if not valid_pair:
        raise HTTPException(status_code=400, detail=pair_msg)

    try:
        estimates = ReplicationEstimates(
            validation_rails.require_data_matrix(request.data, min_rows=3, min_cols=3),
            LassoConfig(lam=request.lam),
            request.alpha,
        )
        return await run_in_threadpool(estimates.infer, request.estimator, request.a, request.b)
    except Exception as e:
        _raise_http(e, "estimate_edge")


@router.post("/estimate/graph", response_model=GraphEstimate)
async def estimate_graph_endpoint(request: GraphRequest):
    """Every pair a < b, edges where the p-value falls below threshold"""
    start_time = time.time()
    logger.info(f"POST /estimate/graph called with threshold {request.threshold}")
    valid_data, data_msg = validation_rails.validate_data_matrix(request.data, min_rows=3, min_cols=3)
    if not valid_data:
        raise HTTPException(status_code=400, detail=data_msg)

    try:
        result = await run_in_threadpool(
            estimate_graph, request.data, request.threshold, LassoConfig(lam=request.lam), 0.05, HTTP_THREADS
        )
        logger.info(f"Graph estimated in {time.time() - start_time:.2f}s - {len(result.edges)} edges")
        return result
    except Exception as e:
        _raise_http(e, "estimate_graph")


@router.post("/simulate/coverage", response_model=ExperimentReport)
async def simulate_coverage(request: CoverageRequest):
    """Short coverage run; replications are capped by the request model"""
    logger.info(f"POST /simulate/coverage called with {request.config.replications} replications")
    try:
        return await run_in_threadpool(run_coverage, request.config, HTTP_THREADS)
    except Exception as e:
        _raise_http(e, "simulate_coverage")
