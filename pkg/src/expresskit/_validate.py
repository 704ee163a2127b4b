"""Small input-validation helpers used by the public entry points."""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteInput, ValidationError


def as_matrix(x, name: str, n_cols: int | None = None, require_finite: bool = True) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array, optionally pinning the column count."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D array, got ndim={arr.ndim}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValidationError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    if require_finite and not np.isfinite(arr).all():
        raise NonFiniteInput(f"{name} contains non-finite values")
    return arr


def as_vector(x, name: str, require_finite: bool = True) -> np.ndarray:
    """Coerce ``x`` to a 1-D float64 array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a 1-D array, got ndim={arr.ndim}")
    if require_finite and not np.isfinite(arr).all():
        raise NonFiniteInput(f"{name} contains non-finite values")
    return arr
