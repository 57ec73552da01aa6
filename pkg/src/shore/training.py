"""Closed-form multi-output least squares, with and without output compression.

Both fits go through the normal equations of the ``d x d`` Gram matrix
``X X^T (+ ridge I)``, which is factorised once per call.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .compression import CompressionMatrix
from .core import ShapeError, SingularityError, cho_solve, cholesky

MAGIC = b"SHOR1"
_BLOCK = 4096


@dataclass(frozen=True, eq=False)
class Regressor:
    weights: np.ndarray  # K x d (uncompressed) or m x d (compressed)
    compressed: bool
    ridge_lambda: float | None = 0.0  # None when loaded from a model file

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError("weights must be 2-d")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain NaN or Inf")
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.d:
            raise ShapeError(f"input has length {x.shape[0]}, regressor expects {self.d}")
        return self.weights @ x


@dataclass(frozen=True)
class TrainReport:
    loss: float
    gram_min_eig_estimate: float
    ridge_applied: bool


def _as_outputs(Y):
    if sp.issparse(Y):
        return Y.tocsc()
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ShapeError("Y must be 2-d")
    return Y


def _gram_factor(X: np.ndarray, ridge: float):
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    G = X @ X.T
    if ridge > 0:
        G[np.diag_indices_from(G)] += ridge
    try:
        L = cholesky(G)
    except SingularityError as exc:
        if ridge == 0:
            raise SingularityError(
                f"X X^T is singular ({exc}); retry with a positive ridge", pivot=exc.pivot
            ) from exc
        raise
    return L


def _min_eig(L: np.ndarray, iters: int = 30) -> float:
    # inverse power iteration on the already-factorised Gram matrix
    d = L.shape[0]
    v = np.ones(d) / np.sqrt(d)
    lam_inv = 0.0
    for _ in range(iters):
        w = cho_solve(L, v)
        lam_inv = float(np.linalg.norm(w))
        v = w / lam_inv
    return 1.0 / lam_inv


def auto_ridge(X: np.ndarray) -> float:
    """``1e-3 * trace(X X^T) / d``; the fallback used when the Gram is singular."""
    X = np.asarray(X, dtype=np.float64)
    return 1e-3 * float(np.einsum("ij,ij->", X, X)) / X.shape[0]


def resolve_ridge(X: np.ndarray, ridge) -> float:
    """Turn ``"auto"`` into 0 when ``X X^T`` factorises, else into :func:`auto_ridge`."""
    if ridge != "auto":
        return float(ridge)
    try:
        cholesky(X @ X.T)
        return 0.0
    except SingularityError:
        return auto_ridge(X)


def residual_sq(T, W: np.ndarray, X: np.ndarray) -> float:
    """``||T - W X||_F^2`` evaluated in column blocks (``T`` may be sparse)."""
    n = X.shape[1]
    total = 0.0
    for lo in range(0, n, _BLOCK):
        hi = min(n, lo + _BLOCK)
        Tb = T[:, lo:hi]
        if sp.issparse(Tb):
            Tb = Tb.toarray()
        R = Tb - W @ X[:, lo:hi]
        total += float(np.einsum("ij,ij->", R, R))
    return total


def _check(X, Y):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("X must be 2-d")
    Y = _as_outputs(Y)
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"X has {X.shape[1]} samples, Y has {Y.shape[1]}")
    if X.shape[1] < 1:
        raise ShapeError("need at least one sample")
    return X, Y


def _fit(X, T, L) -> np.ndarray:
    # weights = T X^T (X X^T + ridge I)^-1, solved as G W^T = X T^T
    rhs = X @ T.T if not sp.issparse(T) else (T @ X.T).T
    return cho_solve(L, np.asarray(rhs)).T


def train_uncompressed(X, Y, ridge: float = 0.0) -> tuple[Regressor, TrainReport]:
    X, Y = _check(X, Y)
    L = _gram_factor(X, ridge)
    Z = _fit(X, Y, L)
    loss = residual_sq(Y, Z, X) / X.shape[1]
    return (
        Regressor(Z, compressed=False, ridge_lambda=float(ridge)),
        TrainReport(loss, _min_eig(L), ridge > 0),
    )


def compress_outputs(phi: CompressionMatrix, Y) -> np.ndarray:
    if Y.shape[0] != phi.K:
        raise ShapeError(f"Y has {Y.shape[0]} rows, Phi expects K={phi.K}")
    if sp.issparse(Y):
        return np.asarray((Y.T @ phi.mat.T).T)
    return phi.mat @ Y


def train_compressed(X, Y, phi: CompressionMatrix, ridge: float = 0.0) -> tuple[Regressor, TrainReport]:
    X, Y = _check(X, Y)
    PY = compress_outputs(phi, Y)
    L = _gram_factor(X, ridge)
    W = _fit(X, PY, L)
    loss = residual_sq(PY, W, X) / X.shape[1]
    return (
        Regressor(W, compressed=True, ridge_lambda=float(ridge)),
        TrainReport(loss, _min_eig(L), ridge > 0),
    )


# below this the uncompressed fit interpolates and the ratio is meaningless
INTERPOLATION_FLOOR = 1e-14


def training_loss_ratio(X, Y, phi: CompressionMatrix, ridge: float = 0.0) -> float | None:
    """Compressed over uncompressed optimal training loss.

    Returns None when the uncompressed loss is below ``INTERPOLATION_FLOOR``.
    """
    _, rep_u = train_uncompressed(X, Y, ridge)
    if rep_u.loss < INTERPOLATION_FLOOR:
        return None
    _, rep_c = train_compressed(X, Y, phi, ridge)
    return rep_c.loss / rep_u.loss


# ---------------------------------------------------------------------------
# model files: "SHOR1", then m, K, d as little-endian u64, then Phi (absent
# when m == 0), then weights; all float64 little-endian, row-major.

def save_model(path, regressor: Regressor, phi: CompressionMatrix | None = None) -> None:
    w = regressor.weights
    if regressor.compressed:
        if phi is None or phi.m != w.shape[0]:
            raise ShapeError("a compressed model needs its Phi with matching m")
        m, K = phi.m, phi.K
    else:
        m, K = 0, w.shape[0]
    d = w.shape[1]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQQ", m, K, d))
        if m:
            fh.write(np.ascontiguousarray(phi.mat, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_model(path) -> tuple[Regressor, CompressionMatrix | None]:
    raw = Path(path).read_bytes()
    head = len(MAGIC) + 24
    if raw[: len(MAGIC)] != MAGIC or len(raw) < head:
        raise ValueError(f"{path}: not a model file")
    m, K, d = struct.unpack("<QQQ", raw[len(MAGIC):head])
    rows = m if m else K
    expect = head + 8 * (m * K + rows * d)
    if len(raw) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f8", offset=head).astype(np.float64)
    phi = None
    if m:
        phi = CompressionMatrix.from_array(body[: m * K].reshape(m, K))
        body = body[m * K:]
    reg = Regressor(body.reshape(rows, d), compressed=bool(m), ridge_lambda=None)
    return reg, phi
