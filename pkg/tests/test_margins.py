import itertools
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from copula_errors import ConfigurationError, DomainError
from margins import (LINKS, get_link, make_family, margin_cdf, margin_logpdf, margin_mean,
                     margin_offset, margin_pdf, margin_quantile, margin_sample,
                     margin_variance, params_from_eta)

# parameter values used for the count families
COUNT_CASES = [
    ("poisson", [2.5]),
    ("geometric", [1.7]),
    ("negbin1", [3.0, 0.6]),
    ("zalg", [0.7, 0.3]),
    ("zip", [2.0, 0.25]),
    ("zanbi", [2.0, 0.8, 0.35]),
    ("zinbi", [2.0, 0.8, 0.35]),
]

# predictor ranges over which h(eta) does not saturate
LINK_RANGES = {
    "identity": (-50.0, 50.0),
    "log": (-30.0, 30.0),
    "logit": (-15.0, 15.0),
    "probit": (-6.0, 6.0),
    "cloglog": (-30.0, 3.0),
    "atanh": (-7.0, 7.0),
    "log_minus_one": (-15.0, 30.0),
    "log_negative": (-30.0, 30.0),
    "log_negative_minus_one": (-15.0, 30.0),
}


class TestLinks:

    @pytest.mark.parametrize("link_id", sorted(LINKS))
    def test_round_trip(self, link_id):
        link = get_link(link_id)
        lo, hi = LINK_RANGES[link_id]
        eta = np.linspace(lo, hi, 201)
        assert_allclose(link.link(link.response(eta)), eta, rtol=1e-6, atol=1e-6)

    @pytest.mark.parametrize("link_id", sorted(LINKS))
    def test_dresponse_matches_finite_difference(self, link_id):
        link = get_link(link_id)
        eta = np.linspace(-2.0, 2.0, 41)
        step = 1e-6
        numeric = (link.response(eta + step) - link.response(eta - step)) / (2 * step)
        assert_allclose(link.dresponse(eta), numeric, rtol=1e-6, atol=1e-9)

    def test_cloglog_response(self):
        eta = np.array([-3.0, 0.0, 1.5])
        assert_allclose(get_link("cloglog").response(eta), 1.0 - np.exp(-np.exp(eta)))

    def test_unknown_link(self):
        with pytest.raises(ConfigurationError):
            get_link("sqrt")


class TestFamilies:

    def test_default_links(self):
        assert make_family("bernoulli").links == ("logit",)
        assert make_family("gaussian").links == ("identity", "log")
        assert make_family("zip").links == ("log", "logit")
        assert make_family("zinbi").links == ("log", "log", "logit")
        assert make_family("zalg").links == ("logit", "logit")

    def test_probability_links_admissible_for_bernoulli(self):
        for link_id in ("logit", "probit", "cloglog"):
            assert make_family("bernoulli", [link_id]).links == (link_id,)

    def test_inadmissible_link(self):
        with pytest.raises(ConfigurationError):
            make_family("poisson", ["identity"])

    def test_wrong_link_count(self):
        with pytest.raises(ConfigurationError):
            make_family("negbin1", ["log"])

    def test_unknown_family(self):
        with pytest.raises(ConfigurationError):
            make_family("beta")

    def test_param_names(self):
        assert make_family("zanbi").param_names == ("mu", "sigma", "nu")


class TestCountKernels:

    @pytest.mark.parametrize("family_id,params", COUNT_CASES)
    def test_pmf_sums_to_one(self, family_id, params):
        family = make_family(family_id)
        y = np.arange(0, 3000)
        assert_allclose(np.sum(margin_pdf(family, y, params)), 1.0, atol=1e-10)

    @pytest.mark.parametrize("family_id,params", COUNT_CASES)
    def test_cdf_is_cumulative_pmf(self, family_id, params):
        family = make_family(family_id)
        y = np.arange(0, 40)
        assert_allclose(margin_cdf(family, y, params),
                        np.cumsum(margin_pdf(family, y, params)), rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("family_id,params", COUNT_CASES)
    def test_moments_match_sums(self, family_id, params):
        family = make_family(family_id)
        y = np.arange(0, 3000, dtype=float)
        pmf = margin_pdf(family, y, params)
        mean = np.sum(y * pmf)
        variance = np.sum((y - mean) ** 2 * pmf)
        assert_allclose(margin_mean(family, params), mean, rtol=1e-8)
        assert_allclose(margin_variance(family, params), variance, rtol=1e-8)

    @pytest.mark.parametrize("family_id,params", COUNT_CASES)
    def test_quantile_is_generalized_inverse(self, family_id, params):
        family = make_family(family_id)
        p = np.array([0.01, 0.2, 0.5, 0.77, 0.99, 0.999])
        q = margin_quantile(family, p, params)
        assert np.all(margin_cdf(family, q, params) >= p)
        below = margin_cdf(family, q - 1, params)
        assert np.all((q == 0) | (below < p))

    def test_zip_zero_mass(self):
        family = make_family("zip")
        assert_allclose(margin_pdf(family, 0, [2.0, 0.25]), 0.25 + 0.75 * np.exp(-2.0))

    def test_zanbi_zero_mass_is_nu(self):
        family = make_family("zanbi")
        assert_allclose(margin_pdf(family, 0, [2.0, 0.8, 0.35]), 0.35)

    def test_zalg_zero_mass_is_sigma(self):
        family = make_family("zalg")
        assert_allclose(margin_pdf(family, 0, [0.7, 0.3]), 0.3)

    def test_negative_count_rejected(self):
        with pytest.raises(DomainError):
            margin_logpdf(make_family("poisson"), np.array([1.0, -1.0]), [2.0])

    def test_fractional_count_rejected(self):
        with pytest.raises(DomainError, match="observation 2"):
            margin_logpdf(make_family("zip"), np.array([1.0, 2.0, 0.5]), [2.0, 0.2])

    def test_zalg_mu_must_be_interior(self):
        with pytest.raises(DomainError):
            margin_logpdf(make_family("zalg"), np.array([1.0]), [1.0, 0.2])

    def test_zalg_cdf_matches_log_series(self):
        family = make_family("zalg")
        y = np.array([1, 2, 5, 12, 30, 80], dtype=float)
        expected = 0.3 + 0.7 * stats.logser.cdf(y, 0.9)
        assert_allclose(margin_cdf(family, y, [0.9, 0.3]), expected, rtol=1e-10)

    def test_zalg_cdf_at_huge_counts(self):
        family = make_family("zalg")
        y = np.array([3.0, 9_000_000.0])
        cdf = margin_cdf(family, y, [0.5, 0.2])
        assert cdf[1] == pytest.approx(1.0, abs=1e-15)
        assert_allclose(cdf[0], 0.2 + 0.8 * stats.logser.cdf(3, 0.5), rtol=1e-12)


class TestBinaryAndContinuous:

    def test_bernoulli_mass(self):
        family = make_family("bernoulli")
        assert_allclose(margin_pdf(family, np.array([0.0, 1.0]), [0.3]), [0.7, 0.3])

    def test_bernoulli_accepts_boundary_probabilities(self):
        family = make_family("bernoulli")
        assert_allclose(margin_pdf(family, np.array([1.0]), [1.0]), [1.0])

    def test_bernoulli_rejects_other_values(self):
        with pytest.raises(DomainError):
            margin_logpdf(make_family("bernoulli"), np.array([0.0, 2.0]), [0.5])

    def test_gaussian_matches_closed_form(self):
        family = make_family("gaussian")
        y = np.array([-1.0, 0.5, 3.0])
        expected = -0.5 * np.log(2 * np.pi * 4.0) - (y - 1.0) ** 2 / 8.0
        assert_allclose(margin_logpdf(family, y, [1.0, 2.0]), expected)
        assert_allclose(margin_variance(family, [1.0, 2.0]), 4.0)

    def test_gaussian_quantile_inverts_cdf(self):
        family = make_family("gaussian")
        p = np.array([0.05, 0.5, 0.9])
        assert_allclose(margin_cdf(family, margin_quantile(family, p, [2.0, 3.0]), [2.0, 3.0]), p)

    def test_gaussian_rejects_nonpositive_sigma(self):
        with pytest.raises(DomainError):
            margin_logpdf(make_family("gaussian"), np.array([0.0]), [0.0, 0.0])

    def test_quantile_level_must_be_interior(self):
        with pytest.raises(DomainError):
            margin_quantile(make_family("poisson"), np.array([0.5, 1.0]), [1.0])

    def test_params_from_eta(self):
        family = make_family("zip")
        mu, sigma = params_from_eta(family, [np.array([0.0]), np.array([0.0])])
        assert_allclose(mu, 1.0)
        assert_allclose(sigma, 0.5)


class TestOffsets:

    def test_bernoulli_offset_is_logit_of_mean(self):
        y = np.array([1, 0, 0, 1, 1, 1, 0, 1], dtype=float)
        assert_allclose(margin_offset(make_family("bernoulli"), y), [np.log(5.0 / 3.0)])

    def test_probit_offset(self):
        y = np.array([1, 0, 0, 0], dtype=float)
        offset = margin_offset(make_family("bernoulli", ["probit"]), y)
        assert_allclose(get_link("probit").response(offset), [0.25])

    def test_gaussian_offset(self, rng):
        y = rng.normal(3.0, 2.0, size=500)
        assert_allclose(margin_offset(make_family("gaussian"), y),
                        [np.mean(y), np.log(np.std(y))])

    def test_poisson_offset(self):
        y = np.array([0, 1, 2, 3, 4], dtype=float)
        assert_allclose(margin_offset(make_family("poisson"), y), [np.log(2.0)])

    def test_degenerate_sample_is_clamped(self, caplog):
        with caplog.at_level(logging.WARNING):
            offset = margin_offset(make_family("bernoulli"), np.zeros(20))
        assert np.isfinite(offset).all()
        assert offset[0] < -10
        assert "clamped" in caplog.text

    @pytest.mark.parametrize("family_id,params", [c for c in COUNT_CASES
                                                  if len(c[1]) > 1])
    def test_numeric_offset_is_a_local_optimum(self, family_id, params, rng):
        family = make_family(family_id)
        y = margin_sample(family, params, 2000, rng)
        eta0 = margin_offset(family, y)

        def nll(eta):
            return -np.sum(margin_logpdf(family, y, params_from_eta(family, list(eta))))

        base = nll(eta0)
        for k in range(len(eta0)):
            for delta in (-0.05, 0.05):
                moved = eta0.copy()
                moved[k] += delta
                assert nll(moved) >= base - 1e-6

    @pytest.mark.parametrize("family_id,params", [c for c in COUNT_CASES
                                                  if len(c[1]) > 1])
    def test_numeric_offset_matches_grid_search(self, family_id, params, rng):
        family = make_family(family_id)
        y = margin_sample(family, params, 2000, rng)
        eta0 = margin_offset(family, y)

        def nll(eta):
            return -np.sum(margin_logpdf(family, y, params_from_eta(family, list(eta))))

        best = np.array([float(get_link(link_id).link(np.asarray(value)))
                         for link_id, value in zip(family.links, params)])
        for half_width, step in ((0.5, 0.05), (0.05, 0.005)):
            moves = np.arange(-half_width, half_width + step / 2, step)
            grid = [best + np.array(d) for d in itertools.product(moves, repeat=len(best))]
            best = min(grid, key=nll)
        assert nll(eta0) <= nll(best) + 1e-4
        assert np.max(np.abs(eta0 - best)) < 0.05

    def test_empty_response(self):
        with pytest.raises(DomainError):
            margin_offset(make_family("poisson"), np.array([]))
