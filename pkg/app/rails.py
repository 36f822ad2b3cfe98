import logging
from typing import Tuple

import numpy as np

from app.errors import DataError, DimensionMismatch, RateOutOfRange, TooFewSamples

logger = logging.getLogger(__name__)


class ValidationRails:
    """Input guardrails shared by the API, the CLI and the estimators"""

    MAX_ROWS = 1_000_000
    MAX_COLUMNS = 20_000

    @classmethod
    def validate_data_matrix(cls, X, min_rows: int = 2, min_cols: int = 2) -> Tuple[bool, str]:
        """Validate an n x p observation matrix"""
        if X is None:
            return False, "Data matrix is required"
        try:
            arr = np.asarray(X, dtype=float)
        except (TypeError, ValueError):
            return False, "Data matrix must be numeric"
        if arr.ndim != 2:
            return False, f"Data matrix must be 2-D, got {arr.ndim}-D"
        n, p = arr.shape
        if n < min_rows:
            return False, f"Need at least {min_rows} rows, got {n}"
        if p < min_cols:
            return False, f"Need at least {min_cols} columns, got {p}"
        if n > cls.MAX_ROWS or p > cls.MAX_COLUMNS:
            return False, f"Data matrix too large ({n} x {p})"
        if not np.all(np.isfinite(arr)):
            bad = int(np.count_nonzero(~np.isfinite(arr)))
            logger.warning(f"Rejected data matrix with {bad} non-finite cells")
            return False, f"Data matrix has {bad} non-finite cells"
        return True, "Valid"

    @classmethod
    def validate_pair(cls, p: int, a: int, b: int) -> Tuple[bool, str]:
        """Validate a node pair against dimension p"""
        if not isinstance(a, (int, np.integer)) or not isinstance(b, (int, np.integer)):
            return False, "Node indices must be integers"
        if a == b:
            return False, "Node pair needs two distinct nodes"
        if not (0 <= a < p and 0 <= b < p):
            return False, f"Node indices must lie in 0..{p - 1}"
        return True, "Valid"

    @classmethod
    def validate_alpha(cls, alpha: float) -> Tuple[bool, str]:
        if not isinstance(alpha, (int, float)) or not 0.0 < float(alpha) < 1.0:
            return False, "alpha must lie strictly between 0 and 1"
        return True, "Valid"

    @classmethod
    def validate_rate(cls, rate: float) -> Tuple[bool, str]:
        if not isinstance(rate, (int, float)) or not 0.0 < float(rate) < 1.0:
            return False, "contamination rate must lie strictly between 0 and 1"
        return True, "Valid"

    @classmethod
    def require_data_matrix(cls, X, min_rows: int = 2, min_cols: int = 2) -> np.ndarray:
        ok, msg = cls.validate_data_matrix(X, min_rows=min_rows, min_cols=min_cols)
        if not ok:
            arr = np.asarray(X) if X is not None else None
            if arr is not None and arr.ndim == 2 and arr.shape[0] < min_rows:
                raise TooFewSamples(msg)
            raise DataError(msg)
        return np.asarray(X, dtype=float)

    @classmethod
    def require_pair(cls, p: int, a: int, b: int):
        ok, msg = cls.validate_pair(p, a, b)
        if not ok:
            raise DimensionMismatch(msg)

    @classmethod
    def require_alpha(cls, alpha: float):
        ok, msg = cls.validate_alpha(alpha)
        if not ok:
            raise DataError(msg)

    @classmethod
    def require_rate(cls, rate: float):
        ok, msg = cls.validate_rate(rate)
        if not ok:
            raise RateOutOfRange(msg)


validation_rails = ValidationRails()
