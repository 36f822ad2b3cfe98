import logging
import sys

from fastapi import FastAPI

from app.api import router
from app.logconf import setup_logging

setup_logging()

logger = logging.getLogger(__name__)
app = FastAPI(
    title="ROCKET edge inference",
    version="1.0.0",
    description="Rank-based confidence intervals and tests for entries of a latent precision matrix"
)

app.include_router(router)


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {
        "status": "healthy",
        "version": "1.0.0",
        "Features": [
            "edge_inference",
            "graph_estimation",
            "coverage_simulation",
        ]
    }


@app.on_event("startup")
async def startup_event():
    logger.info("ROCKET service started successfully")


@app.on_event("shutdown")
async def shutdown_event():
    logger.info("ROCKET service shutting down")


if __name__ == "__main__":
    from app.cli import main

    sys.exit(main(sys.argv[1:] or ["serve"]))
