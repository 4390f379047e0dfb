import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from sparsevar.forecast import (
    DnsFactors, InsufficientHistoryError, YieldDataset, dns_fit, dns_forecast, dns_loadings, dns_select_eta,
    dns_yield_forecast, iterate_var, monthly_dates, rolling_evaluation, sparse_difference_var, svar_fit,
    svar_forecast, svar_lambda, synthetic_yields,
)
from sparsevar.penalties import PenaltySpec
from sparsevar.var_core import lagged_design

MATS = (3, 6, 12, 24, 36, 60, 84, 120)


def curve(beta, eta, mats=MATS):
    return dns_loadings(eta, mats) @ beta


class TestLoadings:
    def test_small_argument_limits(self):
        L = dns_loadings(1e-12, [1.0, 10.0])
        assert_allclose(L, [[1, 1, 0], [1, 1, 0]], atol=1e-10)

    def test_large_argument_limits(self):
        L = dns_loadings(1.0, [500.0])
        assert_allclose(L, [[1, 0.002, 0.002]], atol=1e-12)

    def test_closed_form(self):
        eta, tau = 0.05, np.array([3.0, 30.0, 120.0])
        x = eta * tau
        slope = (1 - np.exp(-x)) / x
        assert_allclose(dns_loadings(eta, tau), np.column_stack([np.ones(3), slope, slope - np.exp(-x)]),
                        rtol=1e-14)

    def test_scalar_shape(self):
        assert dns_loadings(0.06, 30.0).shape == (3,)

    def test_invalid(self):
        with pytest.raises(ValueError):
            dns_loadings(0.0, [1.0])
        with pytest.raises(ValueError):
            dns_loadings(0.1, [0.0, 1.0])


class TestEtaSelection:
    def test_scaling_identity(self):
        assert abs(dns_select_eta(60) - dns_select_eta(30) / 2) < 1e-8

    def test_maximises_curvature(self):
        eta = dns_select_eta(30)
        grid = np.linspace(0.01, 0.2, 190001)
        curv = dns_loadings(1.0, grid * 30)[:, 2]
        assert abs(grid[np.argmax(curv)] - eta) < 2e-6

    def test_value(self):
        # first-order condition of the curvature loading, solved independently
        from scipy.optimize import brentq

        def dcurv(x):
            e = np.exp(-x)
            return (x * e - (1 - e)) / x**2 + e

        x_star = brentq(dcurv, 0.5, 5.0, xtol=1e-14)
        # a maximiser located from function values is only accurate to ~sqrt(eps)
        assert_allclose(dns_select_eta(30), x_star / 30, rtol=1e-7)

    def test_invalid(self):
        with pytest.raises(ValueError):
            dns_select_eta(0)


class TestDnsFit:
    def test_exact_recovery(self):
        eta = dns_select_eta(30)
        beta = np.array([[5.0, -1.0, 0.5], [4.0, 0.5, -2.0], [6.0, -2.0, 1.0]])
        Y = np.array([curve(b, eta) for b in beta])
        f = dns_fit(YieldDataset(monthly_dates("2000-01", 3), MATS, Y))
        assert_allclose(f.beta, beta, atol=1e-10)

    def test_flat_curve(self):
        f = dns_fit(YieldDataset(monthly_dates("2000-01", 2), MATS, np.full((2, 8), 4.2)))
        assert_allclose(f.beta, [[4.2, 0, 0]] * 2, atol=1e-10)

    def test_residuals_orthogonal_to_loadings(self):
        ds = synthetic_yields(1, n_months=40)
        f = dns_fit(ds)
        L = dns_loadings(f.eta[0], ds.maturities)
        resid = ds.yields - f.beta @ L.T
        assert np.max(np.abs(resid @ L)) < 1e-9

    def test_needs_three_maturities(self):
        with pytest.raises(ValueError):
            dns_fit(YieldDataset(monthly_dates("2000-01", 2), (3, 6), np.ones((2, 2))))


class TestDnsForecast:
    def test_noiseless_ar1_exact(self):
        beta = np.empty((60, 3))
        beta[0] = [5.0, -1.0, 0.3]
        for t in range(1, 60):
            beta[t] = np.array([1.0, 0.2, -0.1]) + np.array([0.8, 0.5, 0.6]) * beta[t - 1]
        f = DnsFactors(beta, np.full(60, 0.06))
        for h in (1, 3, 6, 12):
            expect = beta[40].copy()
            for _ in range(h):
                expect = np.array([1.0, 0.2, -0.1]) + np.array([0.8, 0.5, 0.6]) * expect
            assert_allclose(dns_forecast(f, h, upto=40), expect, rtol=1e-9)

    def test_insufficient_history(self):
        f = DnsFactors(np.ones((5, 3)), np.full(5, 0.06))
        with pytest.raises(InsufficientHistoryError):
            dns_forecast(f, 4)
        with pytest.raises(ValueError):
            dns_forecast(f, 0)

    def test_yield_forecast_shape(self):
        ds = synthetic_yields(2, n_months=50)
        out = dns_yield_forecast(dns_fit(ds), 3, ds.maturities)
        assert out.shape == (8,)


class TestSvar:
    def test_lambda_formula(self):
        assert_allclose(svar_lambda(8, 264), 0.0116967, atol=5e-8)
        assert_allclose(svar_lambda(8, 264), (8 * 264) ** -0.4 / 4)

    def test_iterate_scalar_ar1(self):
        out = iterate_var(np.array([[0.5]]), np.array([[2.0]]), 1, 3)
        assert_allclose(out[:, 0], [1.0, 0.5, 0.25])

    def test_zero_coefficients_give_random_walk(self):
        ds = synthetic_yields(3, n_months=80)
        pred = svar_forecast(ds, 3, h_max=5, lam=1e6)
        assert_array_equal(pred, np.tile(ds.yields[-1], (5, 1)))

    def test_one_step_matches_regression_form(self):
        ds = synthetic_yields(4, n_months=120)
        r = 3
        fit = svar_fit(ds.yields, r, PenaltySpec("scad", 0.02))
        coef = fit.theta_hat.reshape(8, 8 * r, order="F")
        diffs = np.diff(ds.yields, axis=0)
        one = ds.yields[-1] + coef @ lagged_design(diffs[-r:], r)
        pred = svar_forecast(ds, r, PenaltySpec("scad", 0.02), h_max=2)
        assert_allclose(pred[0], one, rtol=1e-12)

    def test_upto_ignores_future(self):
        ds = synthetic_yields(5, n_months=100)
        a = svar_forecast(ds, 2, h_max=3, upto=69)
        b = svar_forecast(YieldDataset(ds.dates[:70], ds.maturities, ds.yields[:70]), 2, h_max=3)
        assert_array_equal(a, b)

    def test_insufficient(self):
        with pytest.raises(InsufficientHistoryError):
            svar_fit(np.ones((5, 2)), 4)

    def test_generator_is_sparse_and_stable(self):
        p = sparse_difference_var(8, 12, 0)
        assert np.mean(p.theta != 0) < 0.05


class TestDataset:
    def test_validation(self):
        d = monthly_dates("2000-01", 3)
        with pytest.raises(ValueError):
            YieldDataset(d, MATS, np.ones((3, 7)))
        with pytest.raises(ValueError):
            YieldDataset(d[::-1], MATS, np.ones((3, 8)))
        bad = np.ones((3, 8))
        bad[1, 2] = np.nan
        with pytest.raises(ValueError):
            YieldDataset(d, MATS, bad)

    def test_csv_roundtrip(self, tmp_path):
        ds = synthetic_yields(0, n_months=30)
        ds.to_csv(tmp_path / "y.csv")
        back = YieldDataset.from_csv(tmp_path / "y.csv")
        assert_array_equal(back.dates, ds.dates)
        assert back.maturities == ds.maturities
        assert_array_equal(back.yields, ds.yields)

    def test_index_of(self):
        ds = synthetic_yields(0, n_months=30)
        assert ds.index_of("1986-03") == 2
        with pytest.raises(KeyError):
            ds.index_of("1990-01")


class TestRolling:
    def test_counts(self):
        ds = synthetic_yields(0)
        assert str(ds.dates[-1]) == "2007-12"
        rep = rolling_evaluation(ds, "2001-12", "2007-12", methods=("RW", "DNS"))
        assert rep.counts == {1: 72, 3: 70, 6: 67, 12: 61}

    def test_random_walk_rmse_by_hand(self):
        ds = synthetic_yields(1, n_months=60)
        rep = rolling_evaluation(ds, "1988-06", "1990-12", horizons=(2,), methods=("RW",))
        i0, i1 = ds.index_of("1988-06"), ds.index_of("1990-12")
        errs = np.array([ds.yields[o + 2] - ds.yields[o] for o in range(i0, i1 - 1)])
        assert_allclose(rep.rmse["RW"][0], np.sqrt(np.mean(errs**2, axis=0)))

    def test_report_tables(self):
        ds = synthetic_yields(2, n_months=80)
        rep = rolling_evaluation(ds, "1990-01", "1992-08", horizons=(1, 3), r=2)
        d = rep.to_dict()
        assert len(d["ratio_sVAR_RW"]) == 2 and d["counts"] == {"1": 31, "3": 29}
        assert list(rep.rmse_table().columns[:2]) == ["method", "h"]
        assert rep.ratio_table().shape == (2, 9)
        assert np.all(rep.rmse["sVAR"] >= 0)

    def test_window_too_short(self):
        ds = synthetic_yields(2, n_months=40)
        with pytest.raises(ValueError):
            rolling_evaluation(ds, "1987-01", "1987-01")
