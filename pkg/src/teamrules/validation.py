"""Small input-validation helpers shared by the public entry points."""

from __future__ import annotations

import numpy as np

from .dataset import StudyDataset
from .errors import ValidationError


def ensure_dataset(obj, allow_empty: bool = False) -> StudyDataset:
    if not isinstance(obj, StudyDataset):
        raise ValidationError(f"expected a StudyDataset, got {type(obj).__name__}")
    if not allow_empty and not obj.examples:
        raise ValidationError("dataset has no examples")
    return obj


def as_vector(values, dim: int, name: str = "vector") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise ValidationError(f"{name} must be a flat vector of dimension {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr
