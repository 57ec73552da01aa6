"""Shared numeric plumbing: error types, seeded generators, SPD solves,
top-s selection and the sparse output vector type.

Dense matrices are plain float64 ``numpy.ndarray`` objects throughout.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np
from scipy.linalg import lapack


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class SingularityError(np.linalg.LinAlgError):
    """Raised when a matrix expected to be positive definite is not.

    ``pivot`` is the 0-based index of the failing Cholesky pivot (or None
    when the caller only knows the matrix is singular).
    """

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class ParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# randomness

def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the stream for a given seed is platform independent."""
    return np.random.Generator(np.random.PCG64(seed))


def _key_word(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    key = int(key)
    if key < 0:
        raise DomainError("seed keys must be non-negative")
    return key


def derive_seed(master: int, *keys: int | str) -> int:
    """Pure function of ``(master, *keys)`` returning a 64-bit seed.

    String keys (stage names) are hashed with CRC32 so the result does not
    depend on Python's randomised ``hash``.
    """
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_key_word(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# dense linear algebra

def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{what} contains NaN or Inf")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects 2-d operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    _check_finite(out, "product")
    return out


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises SingularityError naming the first pivot that is non-positive or
    numerically negligible relative to the largest diagonal entry.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got {A.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    _check_finite(A, "matrix")
    scale = np.max(np.abs(A))
    if np.max(np.abs(A - A.T)) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise DomainError("matrix is not symmetric")
    L, info = lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise SingularityError(
            f"matrix is not positive definite (pivot {info - 1})", pivot=info - 1
        )
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    piv = np.diag(L) ** 2
    floor = n * np.finfo(float).eps * np.max(np.diag(A))
    bad = np.flatnonzero(piv <= floor)
    if bad.size:
        raise SingularityError(
            f"matrix is numerically singular (pivot {bad[0]})", pivot=int(bad[0])
        )
    return L


def cho_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=np.float64)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    if B.shape[0] != L.shape[0]:
        raise ShapeError(f"right-hand side has {B.shape[0]} rows, expected {L.shape[0]}")
    X, info = lapack.dpotrs(L, B, lower=1)
    if info != 0:
        raise ValueError(f"dpotrs: illegal argument {-info}")
    return X[:, 0] if vec else X


def solve_spd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A S = B`` for symmetric positive-definite ``A``."""
    return cho_solve(cholesky(A), B)


# ---------------------------------------------------------------------------
# selection

def top_s_indices(
    v, s: int, key: Literal["magnitude", "signed"] = "magnitude"
) -> np.ndarray:
    """Indices of the ``s`` largest entries of ``v`` under ``key``, ascending.

    Ties at the cut-off go to the smallest index. Runs in O(len(v)) via a
    partial partition.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    n = v.size
    if s < 0 or s > n:
        raise DomainError(f"s={s} outside [0, {n}]")
    if s == 0:
        return np.zeros(0, dtype=np.int64)
    if key == "magnitude":
        k = np.abs(v)
    elif key == "signed":
        k = v
    else:
        raise ValueError(f"unknown key {key!r}")
    if s == n:
        return np.arange(n, dtype=np.int64)
    cut = np.partition(k, n - s)[n - s]
    above = np.flatnonzero(k > cut)
    at = np.flatnonzero(k == cut)[: s - above.size]
    return np.sort(np.concatenate([above, at])).astype(np.int64)


# ---------------------------------------------------------------------------
# sparse vectors

@dataclass(frozen=True, eq=False)
class SparseVec:
    """A vector of length ``dim`` stored as sorted (index, value) pairs.

    Stored values are never exactly zero.
    """

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        val = np.asarray(self.values, dtype=np.float64).ravel()
        if idx.size != val.size:
            raise ShapeError("indices and values differ in length")
        if self.dim < 0:
            raise DomainError("dim must be non-negative")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim or np.any(np.diff(idx) <= 0):
                raise DomainError("indices must be strictly increasing within [0, dim)")
            if np.any(val == 0):
                raise DomainError("stored values must be non-zero")
            _check_finite(val, "values")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, v) -> "SparseVec":
        v = np.asarray(v, dtype=np.float64).ravel()
        idx = np.flatnonzero(v)
        return cls(v.size, idx, v[idx])

    @classmethod
    def from_pairs(cls, dim: int, pairs: Iterable[tuple[int, float]]) -> "SparseVec":
        pairs = sorted((int(i), float(x)) for i, x in pairs if x != 0)
        if not pairs:
            return cls.zeros(dim)
        idx, val = zip(*pairs)
        return cls(dim, np.array(idx), np.array(val))

    @classmethod
    def zeros(cls, dim: int) -> "SparseVec":
        return cls(dim, np.zeros(0, dtype=np.int64), np.zeros(0))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def support(self) -> frozenset[int]:
        return frozenset(self.indices.tolist())

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVec):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        pairs = ", ".join(f"({i}, {x:g})" for i, x in zip(self.indices, self.values))
        return f"SparseVec(dim={self.dim}, [{pairs}])"
