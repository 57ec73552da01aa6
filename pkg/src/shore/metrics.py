"""Per-sample quality measures for sparse predictions."""
from __future__ import annotations

import numpy as np

from .compression import CompressionMatrix
from .core import DomainError, ShapeError, SparseVec
from .training import Regressor

METRIC_NAMES = ("precision_at_s", "output_diff", "prediction_loss", "train_loss_ratio", "runtime_ms")


def precision_at_s(v: SparseVec, y: SparseVec, s: int) -> float:
    """Fraction of ``s`` covered by the shared support; divides by ``s`` even if ``y`` has fewer entries."""
    if s < 1:
        raise DomainError("s must be >= 1")
    hits = np.intersect1d(v.indices, y.indices, assume_unique=True).size
    return hits / s


def output_diff(v: SparseVec, y: SparseVec) -> float:
    if v.dim != y.dim:
        raise ShapeError(f"dimension mismatch: {v.dim} vs {y.dim}")
    idx = np.union1d(v.indices, y.indices)
    a = np.zeros(idx.size)
    a[np.searchsorted(idx, v.indices)] += v.values
    a[np.searchsorted(idx, y.indices)] -= y.values
    return float(a @ a)


def prediction_loss(phi: CompressionMatrix, regressor: Regressor, x, v: SparseVec) -> float:
    if v.dim != phi.K:
        raise ShapeError(f"prediction has dim {v.dim}, Phi has K={phi.K}")
    if regressor.weights.shape[0] != phi.m:
        raise ShapeError("regressor rows do not match Phi")
    r = phi.mat[:, v.indices] @ v.values - regressor.apply(x)
    return float(r @ r)
