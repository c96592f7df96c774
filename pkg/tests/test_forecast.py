import numpy as np
import pytest

from ordlattice.covariates import FourierFit, N_FOURIER_TERMS
from ordlattice.errors import DimensionMismatchError
from ordlattice.forecast import (
    ForecastDraws,
    forecast_drought,
    posterior_median_level,
    posterior_median_levels,
    rmse,
    within_one_probability,
)
from ordlattice.model import Cutoffs, ordinal_from_latent
from ordlattice.storage import DrawStore

CUTOFFS = Cutoffs(5)


def flat_fits(I, n_series):
    return [FourierFit(coef=np.zeros((n_series, N_FOURIER_TERMS))) for _ in range(I)]


def make_store(rng, M, I, P, T, *, gamma=1.0, sigma2=0.5, beta_level=2.0):
    return DrawStore(
        site_ids=np.arange(1, I + 1),
        beta=np.concatenate(
            [
                np.full((M, I, 1), beta_level),
                0.1 * rng.standard_normal((M, I, P)),
            ],
            axis=2,
        ),
        gamma=np.full((M, I), gamma),
        sigma2=np.full((M, I), sigma2),
        z=np.full((M, I, T), beta_level),
    )


def run_forecast(rng, store, horizon, *, delta=0.3, sigma_scale=0.4):
    M, I = store.gamma.shape
    P = store.beta.shape[2] - 1
    var_delta = np.full((M, I, P), delta)
    var_sigma = np.tile(sigma_scale * np.eye(P), (M, I, 1, 1))
    return forecast_drought(
        store,
        var_delta,
        var_sigma,
        flat_fits(I, P),
        last_detrended=np.zeros((I, P)),
        last_x_row=np.hstack([np.ones((I, 1)), np.zeros((I, P))]),
        t_end=store.z.shape[2],
        horizon=horizon,
        cutoffs=CUTOFFS,
        rng=rng,
    )


class TestForecastDrought:
    def test_degenerate_persistence_freezes_levels(self, rng):
        # variance ~ 0 and rho ~ 1 with constant covariates: z stays at z_T
        store = make_store(rng, 50, 3, 1, 10, gamma=40.0, sigma2=1e-12)
        store.beta[:, :, 1] = 0.0
        store.z[:, :, -1] = 2.6
        draws = run_forecast(rng, store, 6, delta=0.0, sigma_scale=1e-12)
        assert np.allclose(draws.z, 2.6, atol=1e-5)
        assert np.all(draws.y == 3)  # 2.6 lies in (2, 3]

    def test_zero_horizon_rejected(self, rng):
        store = make_store(rng, 5, 2, 1, 4)
        with pytest.raises(DimensionMismatchError):
            run_forecast(rng, store, 0)

    def test_mismatched_draw_counts_rejected(self, rng):
        store = make_store(rng, 10, 2, 1, 4)
        var_delta = np.zeros((9, 2, 1))
        var_sigma = np.tile(np.eye(1), (9, 2, 1, 1))
        with pytest.raises(DimensionMismatchError, match="differ"):
            forecast_drought(
                store,
                var_delta,
                var_sigma,
                flat_fits(2, 1),
                np.zeros((2, 1)),
                np.hstack([np.ones((2, 1)), np.zeros((2, 1))]),
                4,
                3,
                CUTOFFS,
                rng,
            )

    def test_one_step_mean_matches_closed_form(self, rng):
        # E[z_{T+1}] = x'beta + rho (z_T - x_T' beta), averaged over draws
        M, I, P, T = 400, 4, 1, 6
        store = make_store(rng, M, I, P, T)
        store.gamma = rng.standard_normal((M, I))
        store.z[:, :, -1] = 2.0 + rng.standard_normal((M, I))
        draws = run_forecast(rng, store, 1, delta=0.0, sigma_scale=0.3)
        expit = lambda g: 1 / (1 + np.exp(-g))
        # trend is zero and last detrended is zero, so the future x row is
        # [1, noise]; noise has mean 0, and beta_1 is independent with mean 0
        mu_prev = store.beta[:, :, 0]
        expected = (
            store.beta[:, :, 0]
            + expit(store.gamma) * (store.z[:, :, -1] - mu_prev)
        ).mean(axis=0)
        got = draws.z[:, :, 0].mean(axis=0)
        mc_se = draws.z[:, :, 0].std(axis=0) / np.sqrt(M)
        assert np.all(np.abs(got - expected) < 4 * mc_se + 0.05)

    def test_levels_consistent_with_latents(self, rng):
        store = make_store(rng, 30, 3, 1, 5)
        draws = run_forecast(rng, store, 4)
        draws.validate(CUTOFFS)
        assert np.array_equal(draws.y, ordinal_from_latent(draws.z, CUTOFFS))

    def test_no_cross_draw_dependence(self, rng):
        # path m depends only on draw m and its own randomness: forecasting
        # a prefix of the store reproduces the prefix of the paths
        M, I, P, T = 40, 3, 1, 5
        store = make_store(rng, M, I, P, T)
        store.gamma = rng.standard_normal((M, I))
        full = run_forecast(np.random.default_rng(5), store, 3)
        prefix_store = DrawStore(
            site_ids=store.site_ids,
            beta=store.beta[:20],
            gamma=store.gamma[:20],
            sigma2=store.sigma2[:20],
            z=store.z[:20],
        )
        prefix = run_forecast(np.random.default_rng(5), prefix_store, 3)
        assert np.array_equal(full.y[:20], prefix.y)
        assert np.array_equal(full.z[:20], prefix.z)


class TestWithinOne:
    def test_perfect_draws(self):
        y = np.full((10, 2, 3), 4)
        draws = ForecastDraws(y=y, z=y.astype(float), horizon=3)
        per_site, mean = within_one_probability(draws, np.full((2, 3), 4))
        assert np.all(per_site == 1.0)
        assert np.all(mean == 1.0)

    def test_uniform_draws_combinatorics(self, rng):
        M = 60000
        y = rng.integers(0, 6, (M, 1, 1))
        draws = ForecastDraws(y=y, z=y.astype(float), horizon=1)
        per_site, _ = within_one_probability(draws, np.zeros((1, 1), dtype=int))
        assert per_site[0, 0] == pytest.approx(2.0 / 6.0, abs=0.01)

    def test_dimension_mismatch(self):
        draws = ForecastDraws(y=np.zeros((5, 2, 3), dtype=int), z=np.zeros((5, 2, 3)), horizon=3)
        with pytest.raises(DimensionMismatchError):
            within_one_probability(draws, np.zeros((2, 4), dtype=int))

    def test_single_level_everything_within_one(self, rng):
        c1 = Cutoffs(1)  # two levels: always within one of each other
        z = rng.standard_normal((100, 3, 2))
        y = ordinal_from_latent(z, c1)
        draws = ForecastDraws(y=y, z=z, horizon=2)
        per_site, _ = within_one_probability(draws, rng.integers(0, 2, (3, 2)))
        assert np.all(per_site == 1.0)

    def test_monotone_in_noise(self, rng):
        # larger noise variance cannot help the horizon-1 within-one score
        M, I, T = 3000, 6, 5
        base = make_store(rng, M, I, 1, T, gamma=2.0, sigma2=0.2)
        base.z[:, :, -1] = 2.0
        noisy = DrawStore(
            site_ids=base.site_ids,
            beta=base.beta.copy(),
            gamma=base.gamma.copy(),
            sigma2=base.sigma2 * 16.0,
            z=base.z.copy(),
        )
        truth = np.full((I, 1), 2)
        a = run_forecast(np.random.default_rng(77), base, 1)
        b = run_forecast(np.random.default_rng(77), noisy, 1)
        _, mean_a = within_one_probability(a, truth)
        _, mean_b = within_one_probability(b, truth)
        mc_sd = np.sqrt(0.25 / (M * I))
        assert mean_b[0] <= mean_a[0] + 2 * mc_sd


class TestRmse:
    def test_perfect(self):
        f = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.all(rmse(f, f) == 0.0)

    def test_constant_offset(self):
        f = np.zeros((4, 3))
        assert np.allclose(rmse(f + 2.5, f), 2.5)

    def test_matches_direct_arithmetic(self, rng):
        f = rng.standard_normal((7, 4))
        h = rng.standard_normal((7, 4))
        expected = np.sqrt(np.mean((f - h) ** 2, axis=0))
        assert np.allclose(rmse(f, h), expected, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            rmse(np.zeros((2, 2)), np.zeros((3, 2)))


class TestMedianLevel:
    def test_examples(self):
        y = np.array([1, 1, 2]).reshape(3, 1, 1)
        draws = ForecastDraws(y=y, z=y.astype(float), horizon=1)
        assert posterior_median_level(draws, 0, 0) == 1
        y = np.array([0, 5]).reshape(2, 1, 1)
        draws = ForecastDraws(y=y, z=y.astype(float), horizon=1)
        assert posterior_median_level(draws, 0, 0) == 0  # lower median on ties

    def test_matches_sorting_oracle(self, rng):
        y = rng.integers(0, 6, (101, 4, 3))
        draws = ForecastDraws(y=y, z=y.astype(float), horizon=3)
        meds = posterior_median_levels(draws)
        for i in range(4):
            for h in range(3):
                arr = np.sort(y[:, i, h])
                assert meds[i, h] == arr[(arr.size - 1) // 2]
                assert posterior_median_level(draws, i, h) == meds[i, h]

    def test_empty_draws(self):
        draws = ForecastDraws(
            y=np.zeros((0, 1, 1), dtype=int), z=np.zeros((0, 1, 1)), horizon=1
        )
        with pytest.raises(ValueError):
            posterior_median_level(draws, 0, 0)
