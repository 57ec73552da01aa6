"""Comparison decoders: OMP, correlation decoding, FISTA and elastic net.

Each works on the same compressed target ``b = W x`` as the PGD decoder and
finishes with :func:`project_sparse` so every method returns a vector with at
most ``s`` non-zeros inside the requested feasible set.
"""
from __future__ import annotations

import numpy as np

from .compression import CompressionMatrix
from .core import DomainError, ShapeError, SingularityError, SparseVec, solve_spd, top_s_indices
from .prediction import FeasibleSet, project_sparse
from .training import Regressor

FISTA_T = 500
FISTA_LAMBDA_SCALE = 0.01
EN_LAMBDA1 = 0.1
EN_LAMBDA2 = 0.1
EN_T = 200


def _target(phi: CompressionMatrix, regressor: Regressor, x) -> np.ndarray:
    if not regressor.compressed or regressor.weights.shape[0] != phi.m:
        raise ShapeError("baselines need a compressed regressor trained with this Phi")
    return regressor.apply(x)


def _check(mat, b, s):
    mat = np.asarray(mat, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.size != mat.shape[0]:
        raise ShapeError(f"target has length {b.size}, Phi has {mat.shape[0]} rows")
    if s < 0 or s > mat.shape[1]:
        raise DomainError(f"s={s} outside [0, {mat.shape[1]}]")
    return mat, b


def _refit(mat, b, support) -> np.ndarray:
    A = mat[:, support]
    try:
        return solve_spd(A.T @ A, A.T @ b)
    except SingularityError as exc:
        raise SingularityError(
            f"least-squares refit on support {list(support)} is singular", pivot=exc.pivot
        ) from exc


def _finish(K, support, coef, s, feasible) -> SparseVec:
    dense = np.zeros(K)
    dense[support] = coef
    return project_sparse(dense, s, feasible)


# ---------------------------------------------------------------------------

def omp_solve(mat, b, s: int, feasible=FeasibleSet.REALS, return_residuals: bool = False):
    """Greedy pursuit: add the column most correlated with the residual, refit, repeat."""
    mat, b = _check(mat, b, s)
    K = mat.shape[1]
    support: list[int] = []
    coef = np.zeros(0)
    resid = b.copy()
    norms = [float(np.linalg.norm(resid))]
    for _ in range(s):
        score = np.abs(mat.T @ resid)
        score[support] = -np.inf
        support = sorted(support + [int(np.argmax(score))])
        coef = _refit(mat, b, support)
        resid = b - mat[:, support] @ coef
        norms.append(float(np.linalg.norm(resid)))
    out = _finish(K, support, coef, s, feasible)
    return (out, norms) if return_residuals else out


def omp_predict(phi, regressor, x, s, feasible=FeasibleSet.NONNEG) -> SparseVec:
    return omp_solve(phi.mat, _target(phi, regressor, x), s, feasible)


def cd_solve(mat, b, s: int, feasible=FeasibleSet.REALS) -> SparseVec:
    """Keep the top-s entries of ``Phi^T b`` by magnitude, then refit on them."""
    mat, b = _check(mat, b, s)
    support = top_s_indices(mat.T @ b, s, "magnitude")
    coef = _refit(mat, b, support) if support.size else np.zeros(0)
    return _finish(mat.shape[1], support, coef, s, feasible)


def cd_predict(phi, regressor, x, s, feasible=FeasibleSet.NONNEG) -> SparseVec:
    return cd_solve(phi.mat, _target(phi, regressor, x), s, feasible)


# ---------------------------------------------------------------------------

def power_lipschitz(mat, iters: int = 50) -> float:
    """Largest eigenvalue of ``Phi^T Phi`` by power iteration on ``Phi Phi^T``."""
    m = mat.shape[0]
    u = np.ones(m) / np.sqrt(m)
    lam = 0.0
    for _ in range(iters):
        w = mat @ (mat.T @ u)
        lam = float(np.linalg.norm(w))
        if lam == 0:
            return 0.0
        u = w / lam
    return lam


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(mat, b, v, lam) -> float:
    r = mat @ v - b
    return 0.5 * float(r @ r) + lam * float(np.abs(v).sum())


def fista_solve(mat, b, lam: float, T: int = FISTA_T, return_history: bool = False):
    """FISTA on ``1/2 ||Phi v - b||^2 + lam ||v||_1`` from the zero vector."""
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    if T < 1:
        raise DomainError("T must be >= 1")
    mat = np.asarray(mat, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    K = mat.shape[1]
    L = power_lipschitz(mat)
    x = np.zeros(K)
    if L == 0:
        return (x, [lasso_objective(mat, b, x, lam)]) if return_history else x
    Ptb = mat.T @ b
    y = x.copy()
    t = 1.0
    hist = []
    for _ in range(T):
        grad = mat.T @ (mat @ y) - Ptb
        x_new = soft_threshold(y - grad / L, lam / L)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        if return_history:
            hist.append(lasso_objective(mat, b, x, lam))
    return (x, hist) if return_history else x


def fista_predict(phi, regressor, x, s, feasible=FeasibleSet.NONNEG, lam: float | None = None, T: int = FISTA_T) -> SparseVec:
    """``lam`` defaults to ``0.01 * ||Phi^T W x||_inf``."""
    b = _target(phi, regressor, x)
    if s < 0 or s > phi.K:
        raise DomainError(f"s={s} outside [0, {phi.K}]")
    if lam is None:
        lam = FISTA_LAMBDA_SCALE * float(np.max(np.abs(phi.mat.T @ b)))
    return project_sparse(fista_solve(phi.mat, b, lam, T), s, feasible)


# ---------------------------------------------------------------------------

def elasticnet_solve(mat, b, lambda1: float = EN_LAMBDA1, lambda2: float = EN_LAMBDA2, T: int = EN_T, tol: float = 1e-6):
    """Cyclic coordinate descent on
    ``1/2 ||Phi v - b||^2 + lambda1 ||v||_1 + lambda2/2 ||v||^2``.

    Stops after ``T`` sweeps or once a sweep changes ``v`` by less than
    ``tol`` relative to its norm.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise DomainError("penalties must be non-negative")
    mat = np.asarray(mat, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    K = mat.shape[1]
    cols = [np.ascontiguousarray(mat[:, j]) for j in range(K)]
    denom = np.einsum("ij,ij->j", mat, mat) + lambda2
    v = np.zeros(K)
    r = b.copy()
    for _ in range(T):
        v_old = v.copy()
        for j in range(K):
            if denom[j] == 0:
                continue
            cj = cols[j]
            rho = float(cj @ r) + (denom[j] - lambda2) * v[j]
            new = np.sign(rho) * max(abs(rho) - lambda1, 0.0) / denom[j]
            if new != v[j]:
                r -= (new - v[j]) * cj
                v[j] = new
        change = np.linalg.norm(v - v_old)
        scale = np.linalg.norm(v)
        if change == 0 or (scale > 0 and change / scale < tol):
            break
    return v


def elasticnet_predict(phi, regressor, x, s, feasible=FeasibleSet.NONNEG, lambda1: float = EN_LAMBDA1, lambda2: float = EN_LAMBDA2, T: int = EN_T) -> SparseVec:
    b = _target(phi, regressor, x)
    if s < 0 or s > phi.K:
        raise DomainError(f"s={s} outside [0, {phi.K}]")
    return project_sparse(elasticnet_solve(phi.mat, b, lambda1, lambda2, T), s, feasible)
