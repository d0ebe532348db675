import numpy as np
import pytest

from duelbandits.exceptions import NumericFailure
from duelbandits.linalg import LocalNormMatrix, cg_solve, mahalanobis_inv, sherman_morrison


def random_pd(rng, d, lo=0.5, hi=5.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q @ np.diag(rng.uniform(lo, hi, size=d)) @ q.T


class TestShermanMorrison:
    def test_unit_weight_basis_vector(self):
        out = sherman_morrison(np.eye(2), np.array([1.0, 0.0]), 1.0)
        assert np.allclose(out, np.diag([0.5, 1.0]), atol=1e-15)

    def test_weight_three(self):
        out = sherman_morrison(np.eye(2), np.array([1.0, 0.0]), 3.0)
        assert np.allclose(out, np.diag([0.25, 1.0]), atol=1e-15)

    def test_zero_weight_no_op(self):
        inv = random_pd(np.random.default_rng(0), 4)
        out = sherman_morrison(inv, np.ones(4), 0.0)
        assert np.array_equal(out, inv)

    def test_long_chain_matches_direct_inverse(self):
        rng = np.random.default_rng(1)
        d = 20
        mat = np.eye(d)
        inv = np.eye(d)
        for _ in range(1000):
            z = rng.standard_normal(d)
            w = float(rng.random())
            mat += w * np.outer(z, z)
            inv = sherman_morrison(inv, z, w)
        direct = np.linalg.inv(mat)
        rel = np.linalg.norm(inv - direct) / np.linalg.norm(direct)
        assert rel <= 1e-8

    def test_output_symmetric(self):
        rng = np.random.default_rng(2)
        inv = random_pd(rng, 6)
        out = sherman_morrison(inv, rng.standard_normal(6), 2.0)
        assert np.array_equal(out, out.T)

    def test_corrupted_state_detected(self):
        with pytest.raises(NumericFailure):
            sherman_morrison(-np.eye(2), np.array([1.0, 0.0]), 1.0)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            sherman_morrison(np.eye(2), np.array([1.0, 0.0]), -0.5)


class TestMahalanobisInv:
    def test_identity(self):
        assert mahalanobis_inv(np.array([1.0, 0.0]), np.eye(2)) == 1.0

    def test_diagonal(self):
        assert abs(mahalanobis_inv(np.array([1.0, 0.0]), np.diag([4.0, 1.0])) - 2.0) < 1e-15

    def test_zero_vector(self):
        assert mahalanobis_inv(np.zeros(3), np.eye(3)) == 0.0

    def test_tiny_negative_clamped(self):
        m = np.eye(2) * -1e-13
        assert mahalanobis_inv(np.array([1.0, 0.0]), m) == 0.0

    def test_clearly_negative_raises(self):
        with pytest.raises(NumericFailure):
            mahalanobis_inv(np.array([1.0, 0.0]), -np.eye(2))


class TestCgSolve:
    def test_identity_one_iteration(self):
        b = np.array([3.0, -1.0, 2.0])
        v, resid = cg_solve(lambda p: p, b, max_iters=1, tol=0.0)
        assert np.allclose(v, b, atol=1e-15)
        assert resid == 0.0

    def test_diagonal_two_iterations(self):
        A = np.diag([1.0, 2.0])
        v, resid = cg_solve(lambda p: A @ p, np.array([1.0, 2.0]), max_iters=2, tol=0.0)
        assert np.allclose(v, [1.0, 1.0], atol=1e-12)

    def test_zero_rhs(self):
        v, resid = cg_solve(lambda p: p, np.zeros(4), max_iters=3, tol=0.0)
        assert np.array_equal(v, np.zeros(4))
        assert resid == 0.0

    def test_full_rank_matches_direct_solve(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            d = int(rng.integers(2, 21))
            A = random_pd(rng, d)
            b = rng.standard_normal(d)
            v, _ = cg_solve(lambda p: A @ p, b, max_iters=d, tol=0.0)
            ref = np.linalg.solve(A, b)
            assert np.linalg.norm(v - ref) / np.linalg.norm(ref) <= 1e-6

    def test_early_exit_on_tolerance(self):
        rng = np.random.default_rng(4)
        A = random_pd(rng, 8)
        b = rng.standard_normal(8)
        v, resid = cg_solve(lambda p: A @ p, b, max_iters=100, tol=1e-10)
        assert resid <= 1e-10

    def test_non_pd_operator_raises(self):
        with pytest.raises(NumericFailure):
            cg_solve(lambda p: -p, np.ones(3), max_iters=5, tol=0.0)

    def test_bad_max_iters(self):
        with pytest.raises(ValueError):
            cg_solve(lambda p: p, np.ones(2), max_iters=0, tol=0.0)


class TestLocalNormMatrix:
    def test_scaled_identity_init(self):
        lm = LocalNormMatrix.scaled_identity(3, 2.0)
        assert np.array_equal(lm.mat, 2.0 * np.eye(3))
        assert np.array_equal(lm.inv, 0.5 * np.eye(3))

    def test_paired_updates_stay_in_lockstep(self):
        rng = np.random.default_rng(5)
        lm = LocalNormMatrix.scaled_identity(8, 1.5)
        for _ in range(300):
            lm.rank_one_update(rng.standard_normal(8), float(rng.random()))
        assert lm.inverse_drift() <= 1e-8
        prod = lm.mat @ lm.inv
        assert np.linalg.norm(prod - np.eye(8)) / np.sqrt(8) <= 1e-8

    def test_norms(self):
        lm = LocalNormMatrix(mat=np.diag([4.0, 1.0]), inv=np.diag([0.25, 1.0]))
        v = np.array([1.0, 0.0])
        assert abs(lm.norm(v) - 2.0) < 1e-15
        assert abs(lm.inv_norm(v) - 0.5) < 1e-15

    def test_copy_is_independent(self):
        lm = LocalNormMatrix.scaled_identity(2, 1.0)
        cp = lm.copy()
        cp.rank_one_update(np.array([1.0, 0.0]), 1.0)
        assert np.array_equal(lm.mat, np.eye(2))

    def test_bad_init_rejected(self):
        with pytest.raises(ValueError):
            LocalNormMatrix.scaled_identity(0, 1.0)
        with pytest.raises(ValueError):
            LocalNormMatrix.scaled_identity(2, 0.0)
