import math

import numpy as np
import pytest
from scipy import stats

from ordlattice.model import (
    Cutoffs,
    SitePanel,
    SiteParams,
    Stage1Prior,
    ar1_log_density,
    inverse_logit,
    latent_bounds,
    latent_bounds_series,
    logit,
    ordinal_from_latent,
    stage1_log_prior,
)


@pytest.fixture
def cutoffs():
    return Cutoffs(5)


class TestOrdinalLink:
    @pytest.mark.parametrize("z,expected", [(-0.3, 0), (1.5, 2), (4.7, 5), (0.0, 0), (1.0, 1)])
    def test_examples(self, cutoffs, z, expected):
        assert ordinal_from_latent(z, cutoffs) == expected

    def test_vectorized(self, cutoffs):
        z = np.array([-5.0, 0.5, 3.999, 4.001])
        assert ordinal_from_latent(z, cutoffs).tolist() == [0, 1, 4, 5]

    @pytest.mark.parametrize("y,expected", [(0, (-np.inf, 0.0)), (3, (2.0, 3.0)), (5, (4.0, np.inf))])
    def test_bounds_examples(self, cutoffs, y, expected):
        assert latent_bounds(y, cutoffs) == expected

    def test_bounds_out_of_range(self, cutoffs):
        with pytest.raises(ValueError):
            latent_bounds(6, cutoffs)
        with pytest.raises(ValueError):
            latent_bounds(-1, cutoffs)

    def test_link_inverts_bounds(self, cutoffs, rng):
        # any z inside bounds(y) maps back to y, including boundary points
        for y in range(cutoffs.J + 1):
            lo, hi = latent_bounds(y, cutoffs)
            a = lo if np.isfinite(lo) else hi - 3.0
            b = hi if np.isfinite(hi) else lo + 3.0
            zs = a + (b - a) * rng.random(200)
            zs = zs[zs > lo]
            assert np.all(ordinal_from_latent(zs, cutoffs) == y)
            assert ordinal_from_latent(hi if np.isfinite(hi) else lo + 10, cutoffs) == y

    def test_configurable_levels(self):
        c = Cutoffs(2)
        assert c.n_levels == 3
        assert ordinal_from_latent(0.5, c) == 1
        assert ordinal_from_latent(1.5, c) == 2


class TestAr1LogDensity:
    def test_single_point_zero_residual(self):
        x = np.array([[1.0, 0.3]])
        beta = np.array([0.4, 2.0])
        z = np.array([x[0] @ beta])
        val = ar1_log_density(z, beta, 0.0, 1.0, x)
        assert val == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_rho_zero_reduces_to_independent(self, rng):
        T = 8
        x = np.hstack([np.ones((T, 1)), rng.standard_normal((T, 1))])
        beta = rng.standard_normal(2)
        z = rng.standard_normal(T)
        sigma2 = 0.7
        got = ar1_log_density(z, beta, logit(0.5) * 0.0 - 1e9, sigma2, x)
        # gamma -> -inf means rho -> 0 exactly
        expected = float(np.sum(stats.norm.logpdf(z, x @ beta, np.sqrt(sigma2))))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_matches_per_term_oracle(self, rng):
        T = 5
        x = np.hstack([np.ones((T, 1)), rng.standard_normal((T, 2))])
        beta = rng.standard_normal(3)
        gamma = 0.8
        sigma2 = 0.4
        z = rng.standard_normal(T)
        rho = inverse_logit(gamma)
        mu = x @ beta
        sd = np.sqrt(sigma2)
        expected = stats.norm.logpdf(z[0], mu[0], sd)
        for t in range(1, T):
            expected += stats.norm.logpdf(z[t], mu[t] + rho * (z[t - 1] - mu[t - 1]), sd)
        assert ar1_log_density(z, beta, gamma, sigma2, x) == pytest.approx(
            float(expected), rel=1e-12
        )

    def test_shift_invariance_with_intercept(self, rng):
        T = 12
        x = np.hstack([np.ones((T, 1)), rng.standard_normal((T, 1))])
        beta = rng.standard_normal(2)
        z = rng.standard_normal(T)
        for c in (-3.0, 0.4, 10.0):
            shifted = ar1_log_density(z + c, beta + np.array([c, 0.0]), 0.3, 0.9, x)
            assert shifted == pytest.approx(
                ar1_log_density(z, beta, 0.3, 0.9, x), abs=1e-9
            )


class TestStage1Prior:
    def test_gamma_zero_is_logistic_mode(self):
        p = Stage1Prior(xi=np.array([3.0]))
        params = SiteParams(np.zeros(1), 0.0, 1.0, np.zeros(3))
        base = SiteParams(np.zeros(1), 5.0, 1.0, np.zeros(3))
        delta = stage1_log_prior(params, p) - stage1_log_prior(base, p)
        logistic = lambda g: -abs(g) - 2 * np.log1p(np.exp(-abs(g)))
        assert delta == pytest.approx(logistic(0.0) - logistic(5.0))
        assert logistic(0.0) == pytest.approx(math.log(0.25))

    def test_beta_zero_contribution(self):
        xi = np.array([3.0, 1.5])
        p = Stage1Prior(xi=xi)
        a = SiteParams(np.zeros(2), 0.3, 1.0, np.zeros(2))
        expected_beta_part = float(np.sum(-0.5 * np.log(2 * np.pi * xi**2)))
        got = stage1_log_prior(a, p)
        only_rest = (
            stats.logistic.logpdf(0.3) + stats.invgamma.logpdf(1.0, 0.5, scale=0.5)
        )
        assert got == pytest.approx(expected_beta_part + float(only_rest), rel=1e-12)

    def test_matches_scalar_density_oracle(self, rng):
        for _ in range(25):
            P = int(rng.integers(1, 4))
            xi = np.exp(rng.standard_normal(P))
            shape, scale = np.exp(rng.standard_normal(2) * 0.3)
            prior = Stage1Prior(xi=xi, ig_shape=shape, ig_scale=scale)
            params = SiteParams(
                rng.standard_normal(P),
                float(rng.standard_normal() * 3),
                float(np.exp(rng.standard_normal())),
                np.zeros(2),
            )
            expected = float(
                np.sum(stats.norm.logpdf(params.beta, 0, xi))
                + stats.logistic.logpdf(params.gamma)
                + stats.invgamma.logpdf(params.sigma2, shape, scale=scale)
            )
            assert stage1_log_prior(params, prior) == pytest.approx(expected, abs=1e-12)

    def test_finite_everywhere_reasonable(self, rng):
        prior = Stage1Prior(xi=np.array([3.0]))
        for _ in range(50):
            params = SiteParams(
                rng.standard_normal(1) * 50,
                float(rng.standard_normal() * 40),
                float(np.exp(rng.standard_normal() * 4)),
                np.zeros(1),
            )
            assert np.isfinite(stage1_log_prior(params, prior))

    def test_logistic_on_logit_scale_is_uniform_on_rho(self, rng):
        # change of variables: f(gamma) = f(rho) * |drho/dgamma| with f(rho)=1
        for gamma in rng.standard_normal(20) * 4:
            rho = inverse_logit(float(gamma))
            jacobian = rho * (1 - rho)
            logistic_pdf = float(np.exp(-abs(gamma)) / (1 + np.exp(-abs(gamma))) ** 2)
            assert logistic_pdf == pytest.approx(jacobian, rel=1e-12)


class TestLogit:
    @pytest.mark.parametrize("rho,expected", [(0.5, 0.0), (0.9, math.log(9.0))])
    def test_values(self, rho, expected):
        assert logit(rho) == pytest.approx(expected, rel=1e-14)

    def test_inverse_at_zero(self):
        assert inverse_logit(0.0) == pytest.approx(0.5)

    def test_round_trip(self, rng):
        for rho in rng.random(50) * 0.999998 + 1e-6:
            assert inverse_logit(logit(float(rho))) == pytest.approx(rho, abs=1e-14)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.7])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            logit(bad)


class TestPanels:
    def test_panel_validation(self, rng):
        x = np.hstack([np.ones((4, 1)), rng.standard_normal((4, 1))])
        panel = SitePanel(site_id=1, y=np.array([0, 1, 2, 0]), x=x)
        assert panel.T == 4 and panel.P == 1

    def test_panel_requires_intercept_column(self):
        with pytest.raises(ValueError, match="constant 1"):
            SitePanel(site_id=1, y=np.array([0, 1]), x=np.array([[2.0], [1.0]]))

    def test_params_validate_bounds(self, cutoffs):
        x = np.ones((3, 1))
        panel = SitePanel(site_id=1, y=np.array([0, 2, 5]), x=x)
        good = SiteParams(np.zeros(1), 0.0, 1.0, np.array([-0.5, 1.5, 4.5]))
        good.validate_against(panel, cutoffs)
        bad = SiteParams(np.zeros(1), 0.0, 1.0, np.array([0.5, 1.5, 4.5]))
        with pytest.raises(ValueError, match="bounds"):
            bad.validate_against(panel, cutoffs)

    def test_bounds_series(self, cutoffs):
        lo, hi = latent_bounds_series(np.array([0, 3, 5]), cutoffs)
        assert lo.tolist() == [-np.inf, 2.0, 4.0]
        assert hi.tolist() == [0.0, 3.0, np.inf]
