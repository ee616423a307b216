"""Helpers for number formatting, JSON-ready conversion, and hashing."""
from __future__ import annotations

import hashlib
import math
from typing import Any

import numpy as np

REAL_FORMAT = ".17g"


def format_real(value: float) -> str:
    """Render a real with 17 significant digits, locale independent."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, REAL_FORMAT)


def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_real(value)
    return str(value)


def to_builtin(data: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into JSON-serializable builtins; non-finite reals become None."""
    if isinstance(data, dict):
        return {str(key): to_builtin(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_builtin(item) for item in data]
    if isinstance(data, np.ndarray):
        return to_builtin(data.tolist())
    if isinstance(data, (np.bool_,)):
        return bool(data)
    if isinstance(data, np.integer):
        return int(data)
    if isinstance(data, (float, np.floating)):
        value = float(data)
        return value if math.isfinite(value) else None
    if hasattr(data, "__fspath__"):
        return str(data)
    return data


def array_fingerprint(array: np.ndarray) -> str:
    contiguous = np.ascontiguousarray(array, dtype=np.int64)
    digest = hashlib.sha256()
    digest.update(str(contiguous.shape).encode("ascii"))
    digest.update(contiguous.tobytes())
    return digest.hexdigest()
