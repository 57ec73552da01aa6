"""Gaussian compression matrices and a Monte-Carlo probe of their RIP constant."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, ShapeError, make_rng


@dataclass(frozen=True, eq=False)
class CompressionMatrix:
    """An ``m x K`` matrix with i.i.d. N(0, 1/m) entries.

    ``seed`` is None for matrices built with :meth:`from_array`, which exists
    so tests can substitute a deterministic (e.g. orthonormal) matrix.
    """

    mat: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=np.float64)
        if mat.ndim != 2:
            raise ShapeError("compression matrix must be 2-d")
        m, K = mat.shape
        if not 1 <= m <= K:
            raise DomainError(f"need 1 <= m <= K, got m={m}, K={K}")
        if not np.all(np.isfinite(mat)):
            raise DomainError("compression matrix has non-finite entries")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    @property
    def m(self) -> int:
        return self.mat.shape[0]

    @property
    def K(self) -> int:
        return self.mat.shape[1]

    @classmethod
    def from_array(cls, mat) -> "CompressionMatrix":
        return cls(np.array(mat, dtype=np.float64), seed=None)


def generate_phi(m: int, K: int, seed: int) -> CompressionMatrix:
    if not 1 <= m <= K:
        raise DomainError(f"need 1 <= m <= K, got m={m}, K={K}")
    rng = make_rng(seed)
    mat = rng.standard_normal((m, K)) / np.sqrt(m)
    return CompressionMatrix(mat, seed=seed)


@dataclass(frozen=True)
class RipEstimate:
    s: int
    delta_hat: float
    probes: int
    pass_fraction: float
    delta: float


def distortion(phi: CompressionMatrix | np.ndarray, v) -> float:
    """``| ||Phi v||^2 / ||v||^2 - 1 |`` for a non-zero vector ``v``."""
    mat = phi.mat if isinstance(phi, CompressionMatrix) else np.asarray(phi)
    v = np.asarray(v, dtype=np.float64)
    nv = v @ v
    if nv == 0:
        raise DomainError("distortion of the zero vector is undefined")
    w = mat @ v
    return abs(float(w @ w) / float(nv) - 1.0)


def estimate_rip(
    phi: CompressionMatrix, s: int, probes: int, delta: float, seed: int
) -> RipEstimate:
    """Probe ``phi`` with random unit ``s``-sparse vectors.

    Supports are uniform random ``s``-subsets and the values i.i.d. Gaussian,
    normalised to unit length. The reported ``delta_hat`` is the worst
    observed distortion, so it lower-bounds the true (s, delta) constant.
    """
    K = phi.K
    if not 1 <= s <= K:
        raise DomainError(f"need 1 <= s <= K, got s={s}")
    if probes < 1:
        raise DomainError("probes must be >= 1")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    rng = make_rng(seed)
    dist = np.empty(probes)
    for i in range(probes):
        supp = rng.choice(K, size=s, replace=False)
        vals = rng.standard_normal(s)
        vals /= np.linalg.norm(vals)
        w = phi.mat[:, supp] @ vals
        dist[i] = abs(float(w @ w) - 1.0)
    return RipEstimate(
        s=s,
        delta_hat=float(dist.max()),
        probes=probes,
        pass_fraction=float(np.mean(dist <= delta)),
        delta=float(delta),
    )
