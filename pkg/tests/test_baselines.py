import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from shore.baselines import (
    EN_LAMBDA1,
    EN_LAMBDA2,
    cd_predict,
    cd_solve,
    elasticnet_predict,
    elasticnet_solve,
    fista_predict,
    fista_solve,
    lasso_objective,
    omp_predict,
    omp_solve,
    power_lipschitz,
)
from shore.compression import CompressionMatrix, generate_phi
from shore.core import SingularityError, SparseVec, make_rng, top_s_indices
from shore.prediction import FeasibleSet, project_sparse
from shore.training import Regressor

ALL_SETS = list(FeasibleSet)


def lstsq_residual(mat, b, S):
    A = mat[:, sorted(S)]
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return float(np.linalg.norm(A @ coef - b))


def identity_regressor(phi):
    # W = Phi so that W x = Phi x and the decoders target x itself
    return Regressor(phi.mat.copy(), compressed=True)


def orthonormal_case(K, m, s, seed):
    Q = ortho_group.rvs(m, random_state=seed)
    mat = np.zeros((m, K))
    mat[:, :m] = Q
    r = make_rng(seed)
    perm = r.permutation(K)
    mat = mat[:, perm]
    y = np.zeros(K)
    supp = np.flatnonzero(perm < m)[:s]
    y[supp] = np.abs(r.standard_normal(s)) + 0.5
    return mat, y


class TestOmp:
    def test_orthonormal_exact_recovery(self):
        for seed in range(5):
            mat, y = orthonormal_case(20, 10, 3, seed)
            v = omp_solve(mat, mat @ y, 3, "reals")
            np.testing.assert_array_equal(v.indices, np.flatnonzero(y))
            np.testing.assert_allclose(v.values, y[y != 0], rtol=1e-12)

    def test_s1_picks_argmax_correlation(self, rng):
        mat = rng.standard_normal((6, 8))
        b = rng.standard_normal(6)
        v = omp_solve(mat, b, 1, "reals")
        assert v.indices.tolist() == [int(np.argmax(np.abs(mat.T @ b)))]

    def test_tie_goes_to_lowest_index(self):
        mat = np.eye(3)
        v = omp_solve(mat, np.array([1.0, 1.0, 0.5]), 1, "reals")
        assert v.indices.tolist() == [0]

    def test_matches_naive_greedy(self, rng):
        for _ in range(20):
            mat = rng.standard_normal((6, 8))
            b = rng.standard_normal(6)
            S, resid = [], b.copy()
            for _ in range(2):
                corr = [abs(mat[:, j] @ resid) if j not in S else -1.0 for j in range(8)]
                S.append(int(np.argmax(corr)))
                coef, *_ = np.linalg.lstsq(mat[:, S], b, rcond=None)
                resid = b - mat[:, S] @ coef
            assert omp_solve(mat, b, 2, "reals").indices.tolist() == sorted(S)

    @pytest.mark.xfail(strict=True, reason="greedy selection is not swap-optimal in general")
    def test_local_swap_oracle(self):
        # K=8, m=6, s=2: no single swap of the chosen support lowers the residual
        failures = []
        for seed in range(20):
            r = make_rng(seed)
            mat = generate_phi(6, 8, seed).mat
            b = r.standard_normal(6)
            S = set(omp_solve(mat, b, 2, "reals").indices.tolist())
            base = lstsq_residual(mat, b, S)
            for out in S:
                for inn in set(range(8)) - S:
                    if lstsq_residual(mat, b, (S - {out}) | {inn}) < base - 1e-12:
                        failures.append(seed)
        assert not failures, f"swap improved OMP support for seeds {sorted(set(failures))}"

    def test_residual_non_increasing(self, rng):
        for _ in range(20):
            mat = rng.standard_normal((15, 40))
            b = rng.standard_normal(15)
            _, norms = omp_solve(mat, b, 6, "reals", return_residuals=True)
            assert len(norms) == 7
            assert np.all(np.diff(norms) <= 1e-12)

    def test_singular_refit_names_support(self):
        mat = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        with pytest.raises(SingularityError, match="support"):
            omp_solve(mat, np.array([1.0, 0.0]), 2, "reals")


class TestCd:
    def test_score_example(self):
        # identity Phi makes the score equal to the target
        assert cd_solve(np.eye(3), [0.1, -0.9, 0.5], 1, "reals").indices.tolist() == [1]

    def test_orthonormal_recovery(self):
        for seed in range(5):
            mat, y = orthonormal_case(20, 10, 3, seed)
            v = cd_solve(mat, mat @ y, 3, "nonneg")
            np.testing.assert_array_equal(v.indices, np.flatnonzero(y))

    def test_support_matches_recomputation(self, rng):
        phi = generate_phi(40, 200, 9)
        reg = Regressor(rng.standard_normal((40, 50)), compressed=True)
        for _ in range(10):
            x = rng.standard_normal(50)
            v = cd_predict(phi, reg, x, 3, "reals")
            score = phi.mat.T @ (reg.weights @ x)
            expect = np.sort(np.argsort(-np.abs(score), kind="stable")[:3])
            assert set(v.indices.tolist()) <= set(expect.tolist())
            assert np.array_equal(top_s_indices(score, 3, "magnitude"), expect)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
    def test_scaling_invariance(self, seed, alpha):
        r = make_rng(seed)
        mat = r.standard_normal((10, 30))
        b = r.standard_normal(10)
        s1 = top_s_indices(mat.T @ b, 3)
        s2 = top_s_indices(mat.T @ (alpha * b), 3)
        assert np.array_equal(s1, s2)
        assert np.array_equal(cd_solve(mat, b, 3).indices, cd_solve(mat, alpha * b, 3).indices)


class TestFista:
    def test_large_lambda_gives_zero(self, rng):
        mat = rng.standard_normal((6, 8))
        b = rng.standard_normal(6)
        lam = float(np.max(np.abs(mat.T @ b)))
        assert np.all(fista_solve(mat, b, lam, 100) == 0)

    def test_orthonormal_lambda_zero(self):
        Q = ortho_group.rvs(8, random_state=3)
        b = make_rng(3).standard_normal(8)
        x = fista_solve(Q, b, 0.0, 50)
        np.testing.assert_allclose(x, Q.T @ b, atol=1e-12)
        phi = CompressionMatrix.from_array(Q)
        reg = Regressor(np.eye(8), compressed=True)
        v = fista_predict(phi, reg, b, 3, "reals", lam=0.0, T=50)
        np.testing.assert_allclose(v.to_dense(), project_sparse(Q.T @ b, 3, "reals").to_dense(), atol=1e-12)

    def test_agrees_with_coordinate_descent_lasso(self):
        for seed in range(10):
            r = make_rng(seed)
            mat = generate_phi(6, 8, seed).mat
            b = r.standard_normal(6)
            ref = elasticnet_solve(mat, b, 0.01, 0.0, T=200000, tol=1e-15)
            x = fista_solve(mat, b, 0.01, 50000)
            assert lasso_objective(mat, b, x, 0.01) == pytest.approx(lasso_objective(mat, b, ref, 0.01), abs=1e-9)

    @pytest.mark.xfail(strict=True, reason="O(1/T^2) rate leaves gaps above 1e-6 at T=500 on some instances")
    def test_long_run_self_oracle(self):
        for seed in range(10):
            r = make_rng(seed)
            mat = generate_phi(6, 8, seed).mat
            b = r.standard_normal(6)
            x = fista_solve(mat, b, 0.01, 500)
            ref = fista_solve(mat, b, 0.01, 5000)
            assert abs(lasso_objective(mat, b, x, 0.01) - lasso_objective(mat, b, ref, 0.01)) <= 1e-6

    def test_endpoint_descent(self, rng):
        for _ in range(10):
            mat = rng.standard_normal((20, 60))
            b = rng.standard_normal(20)
            _, hist = fista_solve(mat, b, 0.05, 200, return_history=True)
            assert hist[-1] <= hist[0]

    def test_power_method(self, rng):
        mat = rng.standard_normal((10, 30))
        assert power_lipschitz(mat) == pytest.approx(np.linalg.norm(mat, 2) ** 2, rel=1e-6)


class TestElasticNet:
    def test_default_parameters(self):
        assert EN_LAMBDA1 == 0.1 and EN_LAMBDA2 == 0.1

    def test_large_lambda_gives_zero(self, rng):
        mat = rng.standard_normal((6, 8))
        b = rng.standard_normal(6)
        l1 = float(np.max(np.abs(mat.T @ b)))
        assert np.all(elasticnet_solve(mat, b, l1, 0.1) == 0)

    @pytest.mark.parametrize("a, b, l1, l2", [(2.0, 3.0, 0.1, 0.1), (0.5, -1.0, 0.3, 2.0), (1.0, 0.05, 0.1, 0.0)])
    def test_scalar_closed_form(self, a, b, l1, l2):
        # minimiser of 1/2 (a v - b)^2 + l1 |v| + l2/2 v^2
        expect = np.sign(a * b) * max(abs(a * b) - l1, 0.0) / (a * a + l2)
        got = elasticnet_solve(np.array([[a]]), np.array([b]), l1, l2)
        assert got[0] == pytest.approx(expect, rel=1e-14, abs=1e-300)

    def test_stationarity(self, rng):
        mat = rng.standard_normal((12, 20))
        b = rng.standard_normal(12)
        v = elasticnet_solve(mat, b, 0.1, 0.1, T=5000, tol=1e-14)
        g = mat.T @ (mat @ v - b) + 0.1 * v
        on = v != 0
        np.testing.assert_allclose(g[on], -0.1 * np.sign(v[on]), atol=1e-8)
        assert np.all(np.abs(g[~on]) <= 0.1 + 1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(ALL_SETS), st.integers(1, 4))
def test_every_baseline_is_feasible(seed, feas, s):
    r = make_rng(seed)
    phi = generate_phi(10, 25, seed)
    reg = identity_regressor(phi)
    x = r.standard_normal(25) * 2
    for fn in (omp_predict, cd_predict, fista_predict, elasticnet_predict):
        v = fn(phi, reg, x, s, feas)
        assert isinstance(v, SparseVec) and v.nnz <= s
        if feas is FeasibleSet.NONNEG:
            assert np.all(v.values > 0)
        if feas is FeasibleSet.BINARY:
            assert np.all(v.values == 1.0)
