import math
import time

import numpy as np
from scipy.optimize import brentq

from duelbandits.baselines import ImplicitOmdRewardEstimator, MleRewardEstimator
from duelbandits.linkmath import kappa_bound


def sigmoid(w):
    return 1.0 / (1.0 + math.exp(-w))


class TestMleClosedForms:
    def test_symmetric_labels_give_zero(self):
        est = MleRewardEstimator(dim=1, B=1.0, fit_tol=1e-10, max_newton_iters=200).reset()
        est.update(np.array([1.0]), 1)
        est.update(np.array([1.0]), 0)
        assert abs(est.theta_[0]) <= 1e-6

    def test_single_positive_sample_hits_boundary(self):
        est = MleRewardEstimator(dim=1, B=1.0, fit_tol=1e-10, max_newton_iters=200).reset()
        est.update(np.array([1.0]), 1)
        assert abs(est.theta_[0] - 1.0) <= 1e-6

    def test_three_to_one_gives_log3(self):
        est = MleRewardEstimator(dim=1, B=2.0, fit_tol=1e-12, max_newton_iters=200).reset()
        for y in (1, 1, 1, 0):
            est.update(np.array([1.0]), y)
        assert abs(est.theta_[0] - math.log(3.0)) <= 1e-6

    def test_interior_optimum_matches_root_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(8, 40))
            zs = rng.uniform(0.5, 1.5, size=n)
            ys = rng.integers(0, 2, size=n)
            if ys.min() == ys.max():
                ys[0] = 1 - ys[0]
            est = MleRewardEstimator(dim=1, B=5.0, fit_tol=1e-11, max_newton_iters=300).reset()
            for z, y in zip(zs, ys):
                est.update(np.array([z]), int(y))

            def score(theta):
                return float(np.sum((1 / (1 + np.exp(-zs * theta)) - ys) * zs))

            root = brentq(score, -5.0, 5.0, xtol=1e-13)
            assert abs(est.theta_[0] - root) <= 1e-6


class TestMleBehavior:
    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        est = MleRewardEstimator(dim=3, B=1.0, fit_tol=1e-8, max_newton_iters=200).reset()
        for _ in range(60):
            z = rng.standard_normal(3)
            est.update(z, int(rng.integers(0, 2)))
        theta_orig = est.theta_.copy()
        est.permute_buffer(rng.permutation(est.n_samples_))
        est.refit()
        assert np.linalg.norm(est.theta_ - theta_orig) <= 10 * 1e-8

    def test_buffer_grows_with_samples(self):
        est = MleRewardEstimator(dim=2).reset()
        rng = np.random.default_rng(2)
        for i in range(150):
            est.update(rng.standard_normal(2), int(rng.integers(0, 2)))
            assert est.n_samples_ == i + 1
        assert est.t_ == 151

    def test_ball_constraint_respected(self):
        rng = np.random.default_rng(3)
        est = MleRewardEstimator(dim=3, B=0.5).reset()
        for _ in range(100):
            z = rng.standard_normal(3)
            est.update(z, 1)
            assert np.linalg.norm(est.theta_) <= 0.5 + 1e-9

    def test_v_matrix_accumulates(self):
        est = MleRewardEstimator(dim=2, lam=1.0, v_reg=1.0).reset()
        z = np.array([1.0, 0.0])
        est.update(z, 1)
        assert np.allclose(est.V_.mat, np.diag([2.0, 1.0]), atol=1e-12)

    def test_default_v_reg_is_lam_kappa(self):
        est = MleRewardEstimator(dim=2, lam=3.0).reset()
        assert abs(est.v_reg_ - 3.0 * kappa_bound(1.0, 1.0)) < 1e-9

    def test_radius_carries_kappa_factor(self):
        est = MleRewardEstimator(dim=4, delta=0.1).reset()
        base = math.sqrt(4 * math.log(2.0 / 0.1))
        assert abs(est.radius(1) - math.sqrt(kappa_bound(1.0, 1.0)) * base) < 1e-12

    def test_snapshot_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        est = MleRewardEstimator(dim=3).reset()
        for _ in range(30):
            est.update(rng.standard_normal(3), int(rng.integers(0, 2)))
        path = tmp_path / "mle.json"
        est.save(path)
        loaded = MleRewardEstimator.load(path)
        assert loaded.n_samples_ == est.n_samples_
        assert np.allclose(loaded.theta_, est.theta_, atol=0)
        z = rng.standard_normal(3)
        est.update(z, 1)
        loaded.update(z, 1)
        assert np.allclose(loaded.theta_, est.theta_, atol=1e-9)


class TestImplicitOmd:
    def test_zero_feature_difference_is_no_op(self):
        est = ImplicitOmdRewardEstimator(dim=3, eta=1.0, lam=1.0).reset()
        est.update(np.zeros(3), 1)
        assert np.allclose(est.theta_, np.zeros(3), atol=1e-12)

    def test_worked_1d_proximal_root(self):
        est = ImplicitOmdRewardEstimator(dim=1, B=1.0, eta=1.0, lam=1.0,
                                         inner_tol=1e-12, max_inner_iters=100).reset()
        est.update(np.array([1.0]), 1)
        root = brentq(lambda th: th - 1.0 + sigmoid(th), 0.0, 1.0, xtol=1e-15)
        assert abs(root - 0.40105813754154673) < 1e-12
        assert abs(est.theta_[0] - root) <= 1e-6

    def test_inner_tolerance_contract(self):
        rng = np.random.default_rng(5)
        est = ImplicitOmdRewardEstimator(dim=3, eta=1.0, lam=1.0,
                                         inner_tol=1e-10, max_inner_iters=200).reset()
        for _ in range(20):
            z = rng.standard_normal(3)
            y = int(rng.integers(0, 2))
            theta_prev = est.theta_.copy()
            h_prev = est.local_norm_.mat.copy()
            est.update(z, y)
            assert est.last_converged_
            # recompute the subproblem gradient mapping at the returned point
            s = float(z @ est.theta_)
            g = (sigmoid(s) - y) * z + (1.0 / est.eta_) * (h_prev @ (est.theta_ - theta_prev))
            stepped = est.theta_ - g
            nrm = np.linalg.norm(stepped)
            if nrm > est.B:
                stepped = stepped * (est.B / nrm)
            assert np.linalg.norm(est.theta_ - stepped) <= 1e-9

    def test_eta_to_zero_anchors(self):
        rng = np.random.default_rng(6)
        est = ImplicitOmdRewardEstimator(dim=4, eta=1e-9, lam=1.0, inner_tol=1e-13).reset()
        est.theta_ = rng.standard_normal(4) * 0.3
        anchor = est.theta_.copy()
        est.update(rng.standard_normal(4), 1)
        assert np.linalg.norm(est.theta_ - anchor) <= 1e-6

    def test_lookahead_accumulation(self):
        est = ImplicitOmdRewardEstimator(dim=1, eta=1.0, lam=1.0, inner_tol=1e-12).reset()
        est.update(np.array([1.0]), 1)
        theta = est.theta_[0]
        s = sigmoid(theta)
        assert abs(est.local_norm_.mat[0, 0] - (1.0 + s * (1 - s))) < 1e-9

    def test_inner_iterations_recorded(self):
        est = ImplicitOmdRewardEstimator(dim=2, inner_tol=1e-10).reset()
        est.update(np.array([1.0, 0.5]), 1)
        assert est.last_inner_iters_ >= 1

    def test_snapshot_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        est = ImplicitOmdRewardEstimator(dim=3, eta=1.0, lam=1.0).reset()
        for _ in range(15):
            est.update(rng.standard_normal(3), int(rng.integers(0, 2)))
        path = tmp_path / "implicit.json"
        est.save(path)
        loaded = ImplicitOmdRewardEstimator.load(path)
        assert loaded.t_ == est.t_
        assert np.allclose(loaded.theta_, est.theta_, atol=0)
        assert np.allclose(loaded.local_norm_.mat @ loaded.local_norm_.inv,
                           np.eye(3), atol=1e-10)
        z = rng.standard_normal(3)
        est.update(z, 1)
        loaded.update(z, 1)
        assert np.allclose(loaded.theta_, est.theta_, atol=1e-9)


class TestTimeScaling:
    def test_mle_cost_grows_and_implicit_stays_flat(self):
        rng = np.random.default_rng(7)
        d, n = 8, 900
        zs = rng.standard_normal((n, d))
        ys = rng.integers(0, 2, size=n)

        def window_means(est):
            times = np.empty(n)
            for i in range(n):
                start = time.perf_counter_ns()
                est.update(zs[i], int(ys[i]))
                times[i] = time.perf_counter_ns() - start
            return float(times[99:200].mean()), float(times[n - 101:].mean())

        early, late = window_means(MleRewardEstimator(dim=d).reset())
        assert late / early >= 1.5

        early_i, late_i = window_means(ImplicitOmdRewardEstimator(dim=d).reset())
        assert late_i / early_i <= 2.0
