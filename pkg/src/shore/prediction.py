"""Sparse decoding of compressed predictions by projected gradient descent.

Given ``b = W x`` the decoder solves ``min ||Phi v - b||^2`` over vectors with
at most ``s`` non-zeros that also lie in a feasible set (reals, non-negative
reals, or {0, 1}). Each step is a gradient step followed by the exact
Euclidean projection onto that constraint set.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .compression import CompressionMatrix
from .core import DomainError, ShapeError, SparseVec, top_s_indices
from .training import Regressor

DEFAULT_ETA = 0.9
DEFAULT_T = 60
DEFAULT_TOL = 1e-3


class FeasibleSet(enum.Enum):
    REALS = "reals"
    NONNEG = "nonneg"
    BINARY = "binary"

    @classmethod
    def parse(cls, name) -> "FeasibleSet":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise DomainError(f"unknown feasible set {name!r}; use reals, nonneg or binary") from None


def project_sparse(v_tilde, s: int, feasible: FeasibleSet | str = FeasibleSet.REALS) -> SparseVec:
    """Exact Euclidean projection of ``v_tilde`` onto s-sparse vectors in ``feasible``.

    reals:  keep the s largest-magnitude entries.
    nonneg: among the s largest signed entries keep the positive ones.
    binary: among the s largest values of ``2 v - 1`` set the positive ones to 1.
    """
    feasible = FeasibleSet.parse(feasible)
    v = np.asarray(v_tilde, dtype=np.float64).ravel()
    K = v.size
    if s < 0 or s > K:
        raise DomainError(f"s={s} outside [0, {K}]")
    if feasible is FeasibleSet.REALS:
        idx = top_s_indices(v, s, "magnitude")
        vals = v[idx]
    elif feasible is FeasibleSet.NONNEG:
        idx = top_s_indices(v, s, "signed")
        vals = v[idx]
        keep = vals > 0
        idx, vals = idx[keep], vals[keep]
    else:
        score = 2.0 * v - 1.0
        idx = top_s_indices(score, s, "signed")
        idx = idx[score[idx] > 0]
        vals = np.ones(idx.size)
    keep = vals != 0
    return SparseVec(K, idx[keep], vals[keep])


@dataclass(frozen=True)
class PgdConfig:
    eta: float = DEFAULT_ETA
    T: int = DEFAULT_T
    early_stop_tol: float = DEFAULT_TOL
    feasible: FeasibleSet = FeasibleSet.NONNEG
    init: SparseVec | None = None  # None starts from the zero vector

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise DomainError("eta must lie in (0, 1)")
        if self.T < 1:
            raise DomainError("T must be >= 1")
        if not self.early_stop_tol > 0:
            raise DomainError("early_stop_tol must be positive")
        object.__setattr__(self, "feasible", FeasibleSet.parse(self.feasible))


@dataclass
class PgdTrace:
    iterates_used: int
    objective_per_iter: list[float]  # entry t is ||Phi v(t) - b||^2, t = 0..iterates_used
    stopped_early: bool
    iterates: list[SparseVec] = field(repr=False, default_factory=list)


def _objective(mat, b, v: SparseVec) -> float:
    r = mat[:, v.indices] @ v.values - b
    return float(r @ r)


def pgd_solve(mat: np.ndarray, b, s: int, cfg: PgdConfig = PgdConfig()) -> tuple[SparseVec, PgdTrace]:
    """Run the decoder against an explicit target ``b`` in the compressed space."""
    mat = np.asarray(mat, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    m, K = mat.shape
    if b.size != m:
        raise ShapeError(f"target has length {b.size}, Phi has {m} rows")
    if not np.all(np.isfinite(b)):
        raise DomainError("target contains NaN or Inf")
    if s < 0 or s > K:
        raise DomainError(f"s={s} outside [0, {K}]")
    v = cfg.init if cfg.init is not None else SparseVec.zeros(K)
    if v.dim != K:
        raise ShapeError("warm start has the wrong dimension")
    Ptb = mat.T @ b  # cached once; per-step cost is O(K m)
    iterates = [v]
    objective = [_objective(mat, b, v)]
    stopped = False
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
        while t < cfg.T:
            if t >= 2:
                diff = iterates[t].to_dense() - iterates[t - 2].to_dense()
                rel = np.linalg.norm(diff) / (0.01 + iterates[t].norm())
                if rel < cfg.early_stop_tol:
                    stopped = True
                    break
            grad = mat.T @ (mat[:, v.indices] @ v.values) - Ptb
            v_tilde = -cfg.eta * grad
            v_tilde[v.indices] += v.values
            if not np.all(np.isfinite(v_tilde)):
                raise DomainError(f"iterates diverged at step {t + 1}; reduce eta")
            v = project_sparse(v_tilde, s, cfg.feasible)
            iterates.append(v)
            objective.append(_objective(mat, b, v))
            t += 1
    return v, PgdTrace(t, objective, stopped, iterates)


def pgd_predict(
    phi: CompressionMatrix, regressor: Regressor, x, s: int, cfg: PgdConfig = PgdConfig()
) -> tuple[SparseVec, PgdTrace]:
    if not regressor.compressed or regressor.weights.shape[0] != phi.m:
        raise ShapeError("pgd_predict needs a compressed regressor trained with this Phi")
    return pgd_solve(phi.mat, regressor.apply(x), s, cfg)


# ---------------------------------------------------------------------------
# convergence diagnostics

def contraction_constants(eta: float, delta: float) -> tuple[float, float]:
    """Per-step contraction factor and noise gain of the decoder for an RIP constant ``delta``."""
    c1 = 2.0 - 2.0 * eta + 2.0 * eta * delta
    c2 = 2.0 * eta * math.sqrt(1.0 + delta)
    return c1, c2


def stepsize_window(delta: float) -> tuple[float, float] | None:
    """Stepsizes for which ``c1 < 1``; None when ``delta >= 1/2``."""
    if delta >= 0.5:
        return None
    return 1.0 / (2.0 - 2.0 * delta), 1.0


@dataclass(frozen=True)
class CertReport:
    c1: float
    c2: float
    observed_rate: float  # smallest r with dist_t <= r^t dist_0 before the plateau
    plateau_index: int
    margin: float
    eta_in_window: bool
    passed: bool


def convergence_certificate(
    trace: PgdTrace, delta_hat: float, eta: float, slack: float = 0.05, plateau_rtol: float = 0.1
) -> CertReport:
    """Check the observed linear convergence of a trace against ``c1``.

    The distance of every iterate to the final one must stay under the
    envelope ``(c1 + slack)^t dist_0 + margin`` for all iterations before the
    objective settles within ``plateau_rtol`` of its final value. ``margin``
    is ``c2 / (1 - c1)`` times the final residual norm when ``c1 < 1``.
    """
    if not trace.objective_per_iter:
        raise DomainError("empty trace")
    c1, c2 = contraction_constants(eta, delta_hat)
    obj = np.asarray(trace.objective_per_iter)
    final = obj[-1]
    atol = 1e-24 * max(1.0, obj[0])
    close = np.abs(obj - final) <= plateau_rtol * final + atol
    # first index from which the objective stays on the plateau
    plateau = obj.size - 1
    while plateau > 0 and close[plateau - 1]:
        plateau -= 1

    iterates = trace.iterates
    if iterates:
        last = iterates[-1].to_dense()
        dist = np.array([np.linalg.norm(v.to_dense() - last) for v in iterates])
    else:
        dist = np.zeros(obj.size)
    floor = math.sqrt(max(final, 0.0))
    margin = (c2 / (1.0 - c1) * floor if c1 < 1 else 0.0) + 1e-12 * (1.0 + dist[0])

    rate = 0.0
    ok = True
    for t in range(1, plateau):
        if dist[0] > 0 and dist[t] > 0:
            rate = max(rate, (dist[t] / dist[0]) ** (1.0 / t))
        if dist[t] > (c1 + slack) ** t * dist[0] + margin:
            ok = False
    window = stepsize_window(delta_hat)
    in_window = window is not None and window[0] < eta < window[1]
    return CertReport(c1, c2, rate, int(plateau), margin, in_window, ok)
