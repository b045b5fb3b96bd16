"""Moment estimation, trace powers, and the high-dimensional trace
estimators."""

import numpy as np
import pytest

from diagchart.core_stats import (
    correction_coefficient,
    correlation,
    estimate_tr_rho2,
    estimate_tr_rho3,
    exact_traces,
    make_trace_estimates,
    sample_covariance,
    sample_mean,
    trace_power,
)
from diagchart.errors import (
    DegenerateVariableError,
    DimensionError,
    IllConditionedEstimateError,
    InsufficientDataError,
)


def ar1_matrix(p, a):
    idx = np.arange(p)
    return a ** np.abs(idx[:, None] - idx[None, :])


class TestSampleMean:
    def test_two_rows(self):
        assert np.allclose(sample_mean([[1, 3], [3, 5]]), [2, 4])

    def test_single_row_identity(self):
        assert np.allclose(sample_mean([[7, -2]]), [7, -2])

    def test_law_of_large_numbers(self):
        rng = np.random.default_rng(101)
        x = rng.standard_normal((1000, 5))
        assert np.all(np.abs(sample_mean(x)) < 4 / np.sqrt(1000))

    def test_empty_rejected(self):
        with pytest.raises((InsufficientDataError, DimensionError)):
            sample_mean(np.empty((0, 3)))


class TestSampleCovariance:
    def test_two_point_diagonal(self):
        cov = sample_covariance([[0, 0], [2, 2]])
        assert np.allclose(cov.s, [[2, 2], [2, 2]])
        assert np.allclose(cov.d_s, [2, 2])

    def test_two_point_anticorrelated(self):
        cov = sample_covariance([[1, 0], [0, 1]])
        assert np.allclose(cov.s, [[0.5, -0.5], [-0.5, 0.5]])

    def test_constant_column_named(self):
        data = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
        with pytest.raises(DegenerateVariableError) as exc:
            sample_covariance(data)
        assert 1 in exc.value.columns

    def test_insufficient_rows(self):
        with pytest.raises(InsufficientDataError):
            sample_covariance([[1.0, 2.0]])

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        cov = sample_covariance(rng.standard_normal((40, 6)))
        assert np.array_equal(cov.s, cov.s.T)


class TestCorrelation:
    def test_perfectly_correlated(self):
        cov = sample_covariance([[0, 0], [2, 2]])
        assert np.allclose(correlation(cov), np.ones((2, 2)))

    def test_diagonal_gives_identity(self):
        cov = sample_covariance([[1, 0], [0, 2], [-1, -2], [0, 0]])
        r = correlation(cov)
        assert np.allclose(np.diag(r), 1.0)

    def test_direct_division(self):
        from diagchart.core_stats import CovarianceSummary

        s = np.array([[4.0, 1.0], [1.0, 1.0]])
        cov = CovarianceSummary(s=s, d_s=np.diag(s).copy())
        assert np.allclose(correlation(cov), [[1, 0.5], [0.5, 1]])

    def test_unit_diagonal_exact(self):
        rng = np.random.default_rng(3)
        r = correlation(sample_covariance(rng.standard_normal((30, 5))))
        assert np.all(np.diag(r) == 1.0)
        assert np.all(np.abs(r) <= 1 + 1e-12)

    def test_affine_invariance(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((60, 4))
        a = rng.uniform(0.5, 3.0, size=4)
        b = rng.uniform(-2, 2, size=4)
        r1 = correlation(sample_covariance(x))
        r2 = correlation(sample_covariance(x * a + b))
        assert np.allclose(r1, r2, atol=1e-10)


class TestTracePower:
    def test_identity(self):
        for p in (1, 4, 9):
            for k in range(1, 7):
                assert trace_power(np.eye(p), k) == pytest.approx(p)

    def test_2x2_hand(self):
        m = np.array([[1.0, 0.5], [0.5, 1.0]])
        assert trace_power(m, 2) == pytest.approx(2.5)

    def test_ar1_closed_form(self):
        # oracle: brute-force sum of squared entries, plus the closed form
        p, a = 10, 0.5
        r = ar1_matrix(p, a)
        brute = sum(r[i, j] ** 2 for i in range(p) for j in range(p))
        closed = p + 2 * sum((p - d) * a ** (2 * d) for d in range(1, p))
        assert brute == pytest.approx(closed, rel=1e-12)
        assert trace_power(r, 2) == pytest.approx(closed, rel=1e-12)

    def test_eigenvalue_power_sum(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((50, 6))
        m = x.T @ x / 50
        lam = np.linalg.eigvalsh(m)
        for k in range(1, 7):
            assert trace_power(m, k) == pytest.approx(np.sum(lam**k), rel=1e-8)

    def test_non_square(self):
        with pytest.raises(DimensionError):
            trace_power(np.ones((2, 3)), 2)

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            trace_power(np.eye(2), 0)
        with pytest.raises(ValueError):
            trace_power(np.eye(2), 7)

    def test_sum_of_squares_identity(self):
        rng = np.random.default_rng(9)
        r = correlation(sample_covariance(rng.standard_normal((40, 7))))
        assert trace_power(r, 2) == pytest.approx(np.sum(r * r), abs=1e-10)


class TestTraceEstimators:
    def test_tr2_plugin_identity(self):
        assert estimate_tr_rho2(np.eye(10), 100) == pytest.approx(9.0)

    def test_tr3_plugin_identity(self):
        assert estimate_tr_rho3(np.eye(10), 100) == pytest.approx(7.2)

    def test_tr2_monte_carlo_consistency(self):
        rng = np.random.default_rng(202)
        p, m = 50, 300
        vals = []
        for _ in range(500):
            x = rng.standard_normal((m, p))
            vals.append(estimate_tr_rho2(correlation(sample_covariance(x)), m))
        assert abs(np.mean(vals) - p) / p < 0.10

    def test_tr3_monte_carlo_consistency(self):
        rng = np.random.default_rng(203)
        p, m = 80, 300
        vals = []
        for _ in range(500):
            x = rng.standard_normal((m, p))
            vals.append(estimate_tr_rho3(correlation(sample_covariance(x)), m))
        assert abs(np.mean(vals) - p) / p < 0.10

    def test_semiconductor_scale_fixture(self):
        # p=250, m=1253 with mild AR correlation: the estimate must be
        # positive and land in the hundreds, the scale seen on real fabs.
        rng = np.random.default_rng(204)
        p, m = 250, 1253
        a = 0.5
        eps = rng.standard_normal((m, p))
        x = np.empty_like(eps)
        x[:, 0] = eps[:, 0]
        s = np.sqrt(1 - a * a)
        for j in range(1, p):
            x[:, j] = a * x[:, j - 1] + s * eps[:, j]
        est = estimate_tr_rho2(correlation(sample_covariance(x)), m)
        assert 1e2 < est < 1e3

    def test_error_accuracy_improves_with_m(self):
        rng = np.random.default_rng(205)
        p = 50
        mare = {}
        for m in (100, 300, 1000):
            errs = []
            for _ in range(300):
                x = rng.standard_normal((m, p))
                est = estimate_tr_rho2(correlation(sample_covariance(x)), m)
                errs.append(abs(est - p) / p)
            mare[m] = np.mean(errs)
        assert mare[100] > mare[300] > mare[1000]


class TestCorrectionCoefficient:
    def test_identity_plugin(self):
        assert correction_coefficient(np.eye(10), 100) == pytest.approx(1 + 20 / 300)

    def test_semiconductor_value(self):
        # equicorrelated R built so that tr(R^2) - p^2/m equals exactly 908;
        # the resulting coefficient must match 1 + 2p/(m sqrt(908)).
        p, m = 250, 1253
        target = 908.0
        r_off = np.sqrt((target + p * p / m - p) / (p * (p - 1)))
        r = np.full((p, p), r_off)
        np.fill_diagonal(r, 1.0)
        c = correction_coefficient(r, m)
        assert c == pytest.approx(1.0132426837909012, rel=1e-9)
        assert round(c, 2) == 1.01

    def test_limit_and_monotone_in_m(self):
        r = np.eye(10)
        values = [correction_coefficient(r, m) for m in (20, 100, 1000, 10**6)]
        assert all(v >= 1.0 for v in values)
        assert values == sorted(values, reverse=True)
        assert values[-1] == pytest.approx(1.0, abs=1e-3)

    def test_nonpositive_radicand_rejected(self):
        # fabricated "correlation" violating tr(R^2) >= p: impossible for
        # genuine data, but the guard must hold for junk input
        r = np.eye(4) * 0.1
        with pytest.raises(IllConditionedEstimateError):
            correction_coefficient(r, 3)


class TestTraceBundle:
    def test_matches_individual_estimators(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((120, 12))
        r = correlation(sample_covariance(x))
        t = make_trace_estimates(r, 120)
        assert t.tr2_hat == pytest.approx(estimate_tr_rho2(r, 120), rel=1e-12)
        assert t.tr3_hat == pytest.approx(estimate_tr_rho3(r, 120), rel=1e-10)
        assert t.tr4_hat == pytest.approx(trace_power(r, 4), rel=1e-10)
        assert t.c_pm == pytest.approx(correction_coefficient(r, 120), rel=1e-12)

    def test_exact_traces_identity(self):
        t = exact_traces(np.eye(8))
        assert (t.tr2_hat, t.tr3_hat, t.tr4_hat) == (8.0, 8.0, 8.0)
        assert t.c_pm == 1.0 and t.m_eff is None
