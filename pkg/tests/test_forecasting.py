import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridbuffer.errors import ConfigError, DataError, ForecasterError, UndefinedMetricError
from gridbuffer.forecasting import (
    ConfidenceVector,
    ForecastRequest,
    OracleForecaster,
    PersistenceForecaster,
    SeasonalNaiveForecaster,
    confidence,
    forecast,
    mape,
    persistence_result,
    seasonal_naive_samples,
)


def req(history, horizon, num_samples=20, origin=None):
    return ForecastRequest(np.asarray(history, float), horizon, num_samples, origin)


class TestSeasonalNaive:
    def test_constant_history(self):
        backend = SeasonalNaiveForecaster(period=4, seed=0)
        result = forecast(backend, req([5.0] * 16, 8))
        np.testing.assert_allclose(result.mean, 5.0)
        np.testing.assert_allclose(result.std, 0.0)

    def test_exact_periodic_lookup(self):
        pattern = np.sin(2 * np.pi * np.arange(96) / 96) * 100 + 300
        history = np.concatenate([pattern, pattern])
        result = forecast(SeasonalNaiveForecaster(period=96, seed=1), req(history, 96))
        np.testing.assert_allclose(result.mean, pattern, atol=1e-12)
        np.testing.assert_allclose(result.std, 0.0, atol=1e-12)

    def test_short_history_persists(self):
        backend = SeasonalNaiveForecaster(period=96, seed=0)
        paths = backend.sample_paths(req([1.0, 2.0, 4.0], 5, num_samples=3))
        assert paths.shape == (3, 5)
        # base is the last value; noise scale is the history's own std
        assert paths.mean() == pytest.approx(4.0, abs=3.0)

    def test_period_lag_base(self):
        paths = seasonal_naive_samples([1.0, 2.0, 1.0, 2.0], 2, 1, 2, np.random.default_rng(0))
        np.testing.assert_allclose(paths[0], [1.0, 2.0])

    def test_same_seed_reproducible(self):
        a = SeasonalNaiveForecaster(period=4, seed=9).sample_paths(req([1, 2, 3, 4] * 3, 6, 4))
        b = SeasonalNaiveForecaster(period=4, seed=9).sample_paths(req([1, 2, 3, 4] * 3, 6, 4))
        np.testing.assert_array_equal(a, b)

    def test_empty_history_rejected(self):
        with pytest.raises(ConfigError):
            req([], 4)

    def test_mean_std_match_brute_force_recompute(self):
        history = list(np.linspace(10, 40, 48))
        request = req(history, 12, num_samples=16)
        paths = SeasonalNaiveForecaster(period=8, seed=3).sample_paths(request)
        result = forecast(SeasonalNaiveForecaster(period=8, seed=3), request)
        np.testing.assert_array_equal(result.mean, paths.mean(axis=0))
        np.testing.assert_array_equal(result.std, paths.std(axis=0))


class TestOtherBackends:
    def test_persistence(self):
        result = forecast(PersistenceForecaster(), req([3.0, 7.0], 4))
        np.testing.assert_array_equal(result.mean, [7.0] * 4)
        np.testing.assert_array_equal(result.std, [0.0] * 4)

    def test_oracle_replays_future(self):
        truth = np.arange(100.0)
        result = forecast(OracleForecaster(truth), req([0.0], 5, origin=10))
        np.testing.assert_array_equal(result.mean, [10, 11, 12, 13, 14])
        np.testing.assert_array_equal(result.std, 0.0)

    def test_oracle_pads_past_the_end(self):
        truth = np.array([1.0, 2.0, 3.0])
        result = forecast(OracleForecaster(truth), req([0.0], 4, origin=2))
        np.testing.assert_array_equal(result.mean, [3.0, 3.0, 3.0, 3.0])

    def test_oracle_needs_origin(self):
        with pytest.raises(ForecasterError):
            forecast(OracleForecaster([1.0]), req([0.0], 2))

    def test_bad_shape_flagged(self):
        class Bad:
            def sample_paths(self, request):
                return np.zeros((1, 1))

        with pytest.raises(ForecasterError, match="shape"):
            forecast(Bad(), req([1.0], 4, num_samples=2))

    def test_backend_exception_wrapped(self):
        class Exploder:
            def sample_paths(self, request):
                raise RuntimeError("gpu on fire")

        with pytest.raises(ForecasterError, match="gpu on fire"):
            forecast(Exploder(), req([1.0], 4))

    def test_persistence_result_fallback(self):
        result = persistence_result(42.0, 3)
        np.testing.assert_array_equal(result.mean, [42.0] * 3)
        np.testing.assert_array_equal(result.std, [0.0] * 3)


class TestConfidence:
    def test_perfect_forecast_full_confidence(self):
        rho = confidence([0, 0], [0, 0], [1, 1], [1, 1], decay=1.0).rho
        np.testing.assert_array_equal(rho, [1.0, 1.0])

    def test_unit_cv_halves(self):
        rho = confidence([5.0], [0.0], [5.0], [1.0], decay=1.0).rho
        assert rho[0] == pytest.approx(0.5)

    def test_decay_power(self):
        rho = confidence([0.0] * 11, [0.0] * 11, [1.0] * 11, [1.0] * 11, decay=0.99).rho
        assert rho[10] == pytest.approx(0.99**10, rel=1e-12)
        assert rho[10] == pytest.approx(0.9044, abs=1e-4)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            confidence([0.0], [0.0, 0.0], [1.0], [1.0])

    @given(
        std=st.floats(min_value=0.0, max_value=50.0),
        bump=st.floats(min_value=0.0, max_value=50.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_std(self, std, bump):
        lo = confidence([std], [0.0], [10.0], [1.0]).rho[0]
        hi = confidence([std + bump], [0.0], [10.0], [1.0]).rho[0]
        assert hi <= lo

    def test_monotone_in_horizon_at_fixed_std(self):
        n = 20
        rho = confidence([2.0] * n, [0.0] * n, [10.0] * n, [1.0] * n, decay=0.995).rho
        assert np.all(np.diff(rho) < 0)

    def test_range(self):
        rho = confidence([9.0, 0.1], [3.0, 0.2], [1e-9, 5.0], [2.0, 1.0]).rho
        assert np.all(rho > 0) and np.all(rho <= 1)


class TestMape:
    def test_perfect(self):
        assert mape([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_ten_percent(self):
        assert mape([110.0], [100.0]) == pytest.approx(0.10)

    def test_all_zero_actuals(self):
        with pytest.raises(UndefinedMetricError):
            mape([1.0], [0.0])

    def test_zero_actuals_excluded(self):
        assert mape([110.0, 5.0], [100.0, 0.0]) == pytest.approx(0.10)

    def test_seasonal_naive_periodic_is_exact(self):
        pattern = 100 + 50 * np.cos(2 * np.pi * np.arange(24) / 24)
        history = np.tile(pattern, 3)
        result = forecast(SeasonalNaiveForecaster(period=24, seed=0), req(history, 24))
        assert mape(result.mean, pattern) == pytest.approx(0.0, abs=1e-14)


def test_confidence_vector_validates_range():
    with pytest.raises(DataError):
        ConfidenceVector(np.array([0.0]))
    with pytest.raises(DataError):
        ConfidenceVector(np.array([1.2]))
