"""CSV and JSON input/output for data matrices and experiment reports."""
import logging
import os
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from app.errors import DataError
from app.harness import qq_table, subsample_table
from app.schemas import ExperimentReport, GraphEstimate
from app.utils import z_quantile

logger = logging.getLogger(__name__)


def write_matrix_csv(X, path: str) -> str:
    """Header x1..xp, one row per observation"""
    X = np.asarray(X, dtype=float)
    _ensure_parent(path)
    frame = pd.DataFrame(X, columns=[f"x{j + 1}" for j in range(X.shape[1])])
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {X.shape[0]} x {X.shape[1]} data matrix to {path}")
    return path


def read_matrix_csv(path: str) -> np.ndarray:
    if not Path(path).exists():
        raise DataError(f"Data file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Could not parse {path}: {e}")
    non_numeric = [c for c in frame.columns if not pd.api.types.is_numeric_dtype(frame[c])]
    if non_numeric:
        raise DataError(f"Non-numeric columns in {path}: {non_numeric}")
    return frame.to_numpy(dtype=float)


def records_frame(report: ExperimentReport) -> pd.DataFrame:
    rows = []
    for record in report.records:
        row = record.model_dump(mode="json")
        row["warnings"] = ";".join(record.warnings)
        rows.append(row)
    return pd.DataFrame(rows)


def aggregates_frame(report: ExperimentReport) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump(mode="json") for row in report.aggregates])


def write_report(report: ExperimentReport, prefix: str) -> dict:
    """<prefix>.records.csv, <prefix>.summary.csv, <prefix>.json, plus the kind-specific table"""
    _ensure_parent(prefix)
    paths = {
        "records": f"{prefix}.records.csv",
        "summary": f"{prefix}.summary.csv",
        "json": f"{prefix}.json",
    }
    records_frame(report).to_csv(paths["records"], index=False)
    aggregates_frame(report).to_csv(paths["summary"], index=False)
    if report.kind == "qq":
        paths["qq"] = f"{prefix}.qq.csv"
        qq_table(report).to_csv(paths["qq"], index=False)
    elif report.kind == "subsample":
        paths["pairs"] = f"{prefix}.pairs.csv"
        band = report.summary.get("band_halfwidth", z_quantile(0.10))
        subsample_table(report.records, band).to_csv(paths["pairs"], index=False)
    Path(paths["json"]).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Report written: {', '.join(paths.values())}")
    return paths


def write_graph(estimate: GraphEstimate, path: str) -> str:
    _ensure_parent(path)
    Path(path).write_text(estimate.model_dump_json(indent=2), encoding="utf-8")
    return path


def read_report(path: str) -> ExperimentReport:
    return ExperimentReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def _ensure_parent(path: Optional[str]):
    parent = os.path.dirname(path) if path else ""
    if parent:
        os.makedirs(parent, exist_ok=True)
