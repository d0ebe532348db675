import numpy as np
import pytest

from duelbandits.diagnostics import (
    coverage_check,
    elliptic_potential_check,
    norm_domination_check,
    timing_profile,
)
from duelbandits.linkmath import kappa_bound, sigmoid_pair
from duelbandits.onepass import OnePassRewardEstimator
from duelbandits.scenarios import RunRecord, run_deploy, run_passive
from conftest import OracleEstimator


def synthetic_record(T, wall=None, err_local=None, beta=None):
    return RunRecord(
        scenario="synthetic", seed=0, T=T,
        t=np.arange(1, T + 1),
        wall_nanos=np.asarray(wall if wall is not None else np.zeros(T), dtype=np.int64),
        est_err_l2=np.zeros(T),
        est_err_local=np.asarray(err_local if err_local is not None else np.zeros(T), dtype=float),
        beta=np.asarray(beta if beta is not None else np.zeros(T), dtype=float),
        cum_regret=np.full(T, np.nan), subopt_checkpoint=np.full(T, np.nan),
        x=np.zeros(T, int), a=np.zeros(T, int), a_prime=np.zeros(T, int),
        y=np.zeros(T, int), flags=[""] * T,
    )


class TestCoverage:
    def test_oracle_run_is_covered(self, default_env):
        oracle = OracleEstimator(default_env.truth.theta_star)
        rec = run_deploy(default_env, oracle, 20)
        ok, first = coverage_check(rec)
        assert ok and first is None

    def test_zero_radius_violates_at_first_step(self):
        rec = synthetic_record(5, err_local=np.ones(5), beta=np.zeros(5))
        ok, first = coverage_check(rec)
        assert not ok and first == 1

    def test_violation_index_reported(self):
        err = np.array([0.0, 0.0, 2.0, 0.0])
        rec = synthetic_record(4, err_local=err, beta=np.ones(4))
        ok, first = coverage_check(rec)
        assert not ok and first == 3

    def test_monotone_in_radius_scale(self, default_env):
        _, rec = run_passive(default_env, OnePassRewardEstimator(dim=5), 100,
                             checkpoints=())
        ok_base, _ = coverage_check(rec)
        for scale in (2.0, 5.0, 50.0):
            ok_scaled, _ = coverage_check(rec, beta=rec.beta * scale)
            assert ok_scaled or not ok_base

    def test_radius_override_length_checked(self):
        rec = synthetic_record(4)
        with pytest.raises(ValueError):
            coverage_check(rec, beta=np.ones(3))


class TestEllipticPotential:
    def test_empty_sequence(self):
        lhs, rhs, ok = elliptic_potential_check(np.empty((0, 3)), 1.0, 1.0)
        assert (lhs, rhs, ok) == (0.0, 0.0, True)

    def test_single_unit_vector_worked_example(self):
        zs = np.array([[1.0, 0.0]])
        lhs, rhs, ok = elliptic_potential_check(zs, 1.0, 1.0)
        assert abs(lhs - 1.0) < 1e-15
        assert abs(rhs - 4.0 * np.log(1.5)) < 1e-12
        assert abs(rhs - 1.6219) < 1e-4
        assert ok

    def test_many_random_unit_vectors_stay_bounded(self):
        rng = np.random.default_rng(0)
        zs = rng.standard_normal((10_000, 5))
        zs /= np.linalg.norm(zs, axis=1, keepdims=True)
        lhs, rhs, ok = elliptic_potential_check(zs, 1.0, 1.0)
        assert ok
        assert 0 < lhs <= rhs + 1e-9

    def test_incremental_matches_fresh_inversion(self):
        rng = np.random.default_rng(1)
        zs = rng.standard_normal((500, 7))
        zs *= rng.random((500, 1)) / np.linalg.norm(zs, axis=1, keepdims=True)
        lhs, _, _ = elliptic_potential_check(zs, 2.0, 1.0)
        gram = 2.0 * np.eye(7)
        fresh = 0.0
        for z in zs:
            fresh += float(z @ np.linalg.solve(gram, z))
            gram += np.outer(z, z)
        assert abs(lhs - fresh) <= 1e-8

    def test_norm_bound_enforced(self):
        with pytest.raises(ValueError):
            elliptic_potential_check(np.array([[2.0, 0.0]]), 1.0, 1.0)

    def test_bad_lambda_rejected(self):
        with pytest.raises(ValueError):
            elliptic_potential_check(np.array([[1.0]]), 0.0, 1.0)


class TestNormDomination:
    def test_definitional_zero_case_exact(self):
        lam = 1672.5523230261538
        kappa = kappa_bound(1.0, 1.0)
        val = norm_domination_check(lam * np.eye(4), kappa * lam * np.eye(4), kappa)
        assert val == 0.0

    def test_scalar_single_sample_case(self):
        lam, z, theta = 1.0, 1.5, 0.4
        kappa = kappa_bound(1.0, 1.0)
        _, hw = sigmoid_pair(z * theta)
        H = np.array([[lam + hw * z * z]])
        V = np.array([[kappa * lam + z * z]])
        assert norm_domination_check(H, V, kappa) >= 0.0

    def test_huge_kappa_sentinel(self):
        H = np.diag([2.0, 3.0])
        V = np.eye(2)
        val = norm_domination_check(H, V, 1e300)
        assert abs(val - 2.0) < 1e-9

    def test_bad_kappa_rejected(self):
        with pytest.raises(ValueError):
            norm_domination_check(np.eye(2), np.eye(2), 0.0)


class TestDiagnosticsReport:
    def test_full_report_on_theory_radius_run(self, default_env):
        from duelbandits.diagnostics import diagnostics_report

        est = OnePassRewardEstimator(dim=5, radius_mode="theory")
        rec = run_deploy(default_env, est, 150)
        report = diagnostics_report(default_env, rec)
        assert report.coverage_ok
        assert report.first_violation is None
        assert 0 < report.potential_lhs <= report.potential_rhs + 1e-9
        assert report.domination_min_eig >= -1e-8
        assert report.timing_ratio > 0
        as_dict = report.to_dict()
        assert set(as_dict) == {
            "coverage_ok", "first_violation", "potential_lhs", "potential_rhs",
            "domination_min_eig", "timing_early_ns", "timing_late_ns", "timing_ratio",
        }

    def test_practical_radius_violation_reported_honestly(self, default_env):
        from duelbandits.diagnostics import diagnostics_report

        # the practical radius makes no coverage guarantee; at t=1 the local
        # error sqrt(lam)*||theta*|| dwarfs it, and the report must say so
        rec = run_deploy(default_env, OnePassRewardEstimator(dim=5), 50)
        report = diagnostics_report(default_env, rec)
        assert not report.coverage_ok
        assert report.first_violation == 1


class TestTimingProfile:
    def test_constant_timings_ratio_one(self):
        rec = synthetic_record(100, wall=np.full(100, 250))
        early, late, ratio = timing_profile(rec, (1, 50), (51, 100))
        assert (early, late, ratio) == (250.0, 250.0, 1.0)

    def test_linear_growth_worked_example(self):
        rec = synthetic_record(10_000, wall=np.arange(1, 10_001))
        early, late, ratio = timing_profile(rec, (1000, 2000), (9000, 10000))
        assert early == 1500.0 and late == 9500.0
        assert abs(ratio - 9500.0 / 1500.0) <= 1e-12
        assert abs(ratio - 6.33) < 0.01

    def test_single_element_windows(self):
        rec = synthetic_record(10, wall=np.arange(1, 11))
        early, late, ratio = timing_profile(rec, (3, 3), (7, 7))
        assert early == 3.0 and late == 7.0

    def test_empty_window_rejected(self):
        rec = synthetic_record(10, wall=np.arange(1, 11))
        with pytest.raises(ValueError):
            timing_profile(rec, (11, 20), (1, 5))
