"""Synthetic SHORE data and the plain-text extreme multi-label (XMC) format.

XMC layout::

    <n> <d> <K>
    <l1>,<l2>,... <f1>:<v1> <f2>:<v2> ...

Indices are 0-based. A label may carry a value as ``<l>:<value>``; a bare
label means value 1. A record with no labels starts with a single space.
Values are written with ``repr`` so a write/read/write cycle is bit-exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .core import DomainError, FormatError, ParseError, ShapeError, SparseVec, cholesky, make_rng
from .prediction import FeasibleSet, project_sparse

_CHUNK = 512


def db_to_snr_inv(db: float) -> float:
    """Inverse SNR for a decibel level defined as ``10 log10(SNR^2)``."""
    return 10.0 ** (-float(db) / 20.0)


@dataclass(frozen=True)
class SyntheticSpec:
    d: int
    K: int
    n: int
    s: int
    snr_inv: float = db_to_snr_inv(30)
    feasible: FeasibleSet = FeasibleSet.NONNEG
    seed: int = 0
    train_fraction: float = 0.8

    def __post_init__(self):
        if min(self.d, self.K, self.n) < 1:
            raise DomainError("d, K and n must be positive")
        if not 0 <= self.s <= self.K:
            raise DomainError("need 0 <= s <= K")
        if self.snr_inv < 0:
            raise DomainError("snr_inv must be non-negative")
        if not 0 < self.train_fraction < 1:
            raise DomainError("train_fraction must lie in (0, 1)")
        object.__setattr__(self, "feasible", FeasibleSet.parse(self.feasible))


@dataclass(eq=False)
class Dataset:
    X: np.ndarray  # d x n
    Y: list[SparseVec]
    K: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ShapeError("X must be 2-d")
        if self.X.shape[1] != len(self.Y):
            raise ShapeError(f"X has {self.X.shape[1]} columns but there are {len(self.Y)} outputs")
        if any(y.dim != self.K for y in self.Y):
            raise ShapeError("every output must have dimension K")

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[0]

    def Y_matrix(self) -> sp.csc_matrix:
        """Outputs as a sparse ``K x n`` matrix."""
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([y.nnz for y in self.Y])
        if self.Y:
            idx = np.concatenate([y.indices for y in self.Y])
            val = np.concatenate([y.values for y in self.Y])
        else:
            idx, val = np.zeros(0, dtype=np.int64), np.zeros(0)
        return sp.csc_matrix((val, idx, indptr), shape=(self.K, self.n))

    def subset(self, cols, split: str | None = None) -> "Dataset":
        cols = np.asarray(cols, dtype=np.int64)
        meta = dict(self.meta)
        if split is not None:
            meta["split"] = split
        return Dataset(self.X[:, cols], [self.Y[i] for i in cols], self.K, meta)

    def stats(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "K": self.K,
            "avg_feature_nnz": float(np.count_nonzero(self.X) / self.n) if self.n else 0.0,
            "avg_label_nnz": float(np.mean([y.nnz for y in self.Y])) if self.n else 0.0,
        }


@dataclass(frozen=True, eq=False)
class GroundTruth:
    Z_star: np.ndarray  # K x d
    mu_x: np.ndarray
    Sigma_xx: np.ndarray
    chol: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.chol is None:
            object.__setattr__(self, "chol", cholesky(self.Sigma_xx))


def make_ground_truth(d: int, K: int, seed: int) -> GroundTruth:
    """Draw the input law and the true regressor.

    mean: |g| with g ~ N(0, I_d); covariance: A^T A / d + I/2 with A i.i.d.
    N(0, 1); regressor entries i.i.d. N(0, 1/d).
    """
    if d < 1 or K < 1:
        raise DomainError("d and K must be positive")
    rng = make_rng(seed)
    mu = np.abs(rng.standard_normal(d))
    A = rng.standard_normal((d, d))
    sigma = A.T @ A / d
    sigma = 0.5 * (sigma + sigma.T)
    sigma[np.diag_indices(d)] += 0.5
    Z = rng.standard_normal((K, d)) / math.sqrt(d)
    return GroundTruth(Z, mu, sigma)


def sample_inputs(gt: GroundTruth, n: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.standard_normal((gt.mu_x.size, n))
    return gt.mu_x[:, None] + gt.chol @ G


def sample_synthetic(spec: SyntheticSpec, gt: GroundTruth) -> Dataset:
    """Draw ``spec.n`` samples ``y = Proj(Z x + eps)``.

    Noise is i.i.d. per coordinate with variance ``snr_inv^2 * ||Z x||_inf``.
    """
    if gt.Z_star.shape != (spec.K, spec.d):
        raise ShapeError("ground truth does not match the SyntheticSpec dimensions")
    rng = make_rng(spec.seed)
    X = sample_inputs(gt, spec.n, rng)
    Y: list[SparseVec] = []
    for lo in range(0, spec.n, _CHUNK):
        hi = min(spec.n, lo + _CHUNK)
        R = gt.Z_star @ X[:, lo:hi]
        if spec.snr_inv > 0:
            std = spec.snr_inv * np.sqrt(np.max(np.abs(R), axis=0))
            R = R + rng.standard_normal(R.shape) * std
        Y.extend(project_sparse(R[:, j], spec.s, spec.feasible) for j in range(hi - lo))
    return Dataset(X, Y, spec.K, {"source": "synthetic"})


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint train/test partition; column order within each part is preserved."""
    if not 0 < train_fraction < 1:
        raise DomainError("train_fraction must lie in (0, 1)")
    n = dataset.n
    n_train = int(round(train_fraction * n))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    perm = make_rng(seed).permutation(n)
    return (
        dataset.subset(np.sort(perm[:n_train]), "train"),
        dataset.subset(np.sort(perm[n_train:]), "test"),
    )


# ---------------------------------------------------------------------------
# XMC text format

def _int(tok: str, what: str, lineno: int) -> int:
    try:
        val = int(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None
    if val < 0:
        raise ParseError(f"negative {what} {tok!r}", lineno)
    return val


def _float(tok: str, lineno: int) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(f"bad value {tok!r}", lineno) from None
    if not math.isfinite(val):
        raise ParseError(f"non-finite value {tok!r}", lineno)
    return val


def _pair(tok: str, lineno: int) -> tuple[str, str]:
    head, sep, tail = tok.partition(":")
    if not sep or not head or not tail:
        raise ParseError(f"expected index:value, got {tok!r}", lineno)
    return head, tail


def _parse_record(line: str, d: int, K: int, lineno: int):
    label_part, _, feat_part = line.partition(" ")
    labels: dict[int, float] = {}
    if label_part:
        for tok in label_part.split(","):
            if ":" in tok:
                head, tail = _pair(tok, lineno)
                idx, val = _int(head, "label index", lineno), _float(tail, lineno)
            else:
                idx, val = _int(tok, "label index", lineno), 1.0
            if idx >= K:
                raise ParseError(f"label index {idx} >= K={K}", lineno)
            if idx in labels:
                raise ParseError(f"duplicate label {idx}", lineno)
            if val == 0:
                raise ParseError(f"label {idx} has value 0", lineno)
            labels[idx] = val
    feats: dict[int, float] = {}
    for tok in feat_part.split():
        head, tail = _pair(tok, lineno)
        idx, val = _int(head, "feature index", lineno), _float(tail, lineno)
        if idx >= d:
            raise ParseError(f"feature index {idx} >= d={d}", lineno)
        if idx in feats:
            raise ParseError(f"duplicate feature {idx}", lineno)
        feats[idx] = val
    return labels, feats


def load_xmc(path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="ascii") as fh:
        header = fh.readline()
        if not header:
            raise ParseError("empty file", 1)
        parts = header.split()
        if len(parts) != 3:
            raise ParseError(f"header must be '<n> <d> <K>', got {header.strip()!r}", 1)
        n, d, K = (_int(p, "header field", 1) for p in parts)
        X = np.zeros((d, n))
        Y: list[SparseVec] = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\r\n")
            if not line.strip() and not line.startswith(" "):
                raise ParseError("blank line", lineno)
            if len(Y) == n:
                raise FormatError(f"{path}: header declares {n} records but more follow (line {lineno})")
            labels, feats = _parse_record(line, d, K, lineno)
            j = len(Y)
            for f, v in feats.items():
                X[f, j] = v
            Y.append(SparseVec.from_pairs(K, labels.items()))
    if len(Y) != n:
        raise FormatError(f"{path}: header declares {n} records, found {len(Y)}")
    return Dataset(X, Y, K, {"source": str(path)})


def _fmt(x: float) -> str:
    return repr(float(x))


def format_xmc(dataset: Dataset) -> str:
    lines = [f"{dataset.n} {dataset.d} {dataset.K}"]
    for j, y in enumerate(dataset.Y):
        labels = ",".join(
            str(i) if v == 1.0 else f"{i}:{_fmt(v)}" for i, v in zip(y.indices.tolist(), y.values.tolist())
        )
        col = dataset.X[:, j]
        nz = np.flatnonzero(col)
        feats = " ".join(f"{i}:{_fmt(col[i])}" for i in nz.tolist())
        lines.append(f"{labels} {feats}" if feats else (labels if labels else " "))
    return "\n".join(lines) + "\n"


def write_xmc(dataset: Dataset, path) -> None:
    Path(path).write_text(format_xmc(dataset), encoding="ascii")
