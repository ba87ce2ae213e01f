import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, special, stats

from bivariate_normal import bvn_cdf
from copula_errors import ConfigurationError, DomainError
from copulas import (CopulaSpec, copula_cdf, copula_density, copula_hfun, copula_hinv,
                     copula_sample, kendall_tau, theta_link, theta_response)

# (label, parameter on the rotated scale)
CASES = [
    ("gauss", 0.6), ("gauss", -0.5),
    ("clayton", 2.0), ("clayton90", -2.0), ("clayton180", 2.0), ("clayton270", -2.0),
    ("gumbel", 2.5), ("gumbel90", -2.5), ("gumbel180", 2.5), ("gumbel270", -2.5),
    ("frank", 5.0), ("frank", -4.0),
    ("amh", 0.7), ("amh", -0.5),
    ("fgm", 0.8), ("fgm", -0.6),
    ("joe", 2.5), ("joe90", -2.5), ("joe180", 2.5), ("joe270", -2.5),
]
IDS = [f"{label}[{theta}]" for label, theta in CASES]

# three parameters per family from weak to strong dependence, plus every rotation
TAU_CASES = [
    ("gauss", -0.7), ("gauss", 0.2), ("gauss", 0.9),
    ("clayton", 0.3), ("clayton", 2.0), ("clayton", 8.0),
    ("gumbel", 1.2), ("gumbel", 2.5), ("gumbel", 6.0),
    ("frank", -8.0), ("frank", 1.0), ("frank", 12.0),
    ("amh", -0.9), ("amh", 0.3), ("amh", 0.95),
    ("fgm", -0.9), ("fgm", 0.3), ("fgm", 0.9),
    ("joe", 1.3), ("joe", 2.5), ("joe", 7.0),
    ("clayton90", -2.0), ("clayton180", 2.0), ("clayton270", -2.0),
    ("gumbel90", -2.5), ("gumbel180", 2.5), ("gumbel270", -2.5),
    ("joe90", -2.5), ("joe180", 2.5), ("joe270", -2.5),
]
TAU_IDS = [f"{label}[{theta}]" for label, theta in TAU_CASES]


def _grid(n=9, lo=0.1, hi=0.9):
    g = np.linspace(lo, hi, n)
    u, v = np.meshgrid(g, g)
    return u.ravel(), v.ravel()


class TestCdf:

    @pytest.mark.parametrize("label,theta", CASES, ids=IDS)
    def test_boundary_conditions(self, label, theta):
        spec = CopulaSpec.from_label(label)
        x = np.linspace(0.0, 1.0, 11)
        assert_allclose(copula_cdf(spec, x, 0.0, theta), 0.0)
        assert_allclose(copula_cdf(spec, 0.0, x, theta), 0.0)
        assert_allclose(copula_cdf(spec, x, 1.0, theta), x)
        assert_allclose(copula_cdf(spec, 1.0, x, theta), x)

    @pytest.mark.parametrize("label,theta", CASES, ids=IDS)
    def test_two_increasing(self, label, theta, rng):
        spec = CopulaSpec.from_label(label)
        a = rng.uniform(size=(10000, 2))
        b = rng.uniform(size=(10000, 2))
        u1, u2 = np.minimum(a[:, 0], b[:, 0]), np.maximum(a[:, 0], b[:, 0])
        v1, v2 = np.minimum(a[:, 1], b[:, 1]), np.maximum(a[:, 1], b[:, 1])
        volume = (copula_cdf(spec, u2, v2, theta) - copula_cdf(spec, u1, v2, theta)
                  - copula_cdf(spec, u2, v1, theta) + copula_cdf(spec, u1, v1, theta))
        assert volume.min() >= -1e-12

    @pytest.mark.parametrize("label,theta", CASES, ids=IDS)
    def test_frechet_bounds(self, label, theta):
        spec = CopulaSpec.from_label(label)
        u, v = _grid(15, 0.02, 0.98)
        c = copula_cdf(spec, u, v, theta)
        assert np.all(c <= np.minimum(u, v) + 1e-12)
        assert np.all(c >= np.maximum(u + v - 1.0, 0.0) - 1e-12)

    def test_rotation_90_definition(self):
        u, v = _grid()
        rotated = copula_cdf(CopulaSpec("clayton", 90), u, v, -2.0)
        base = copula_cdf(CopulaSpec("clayton"), 1.0 - u, v, 2.0)
        assert_allclose(rotated, v - base, atol=1e-14)

    def test_rotation_180_is_survival_copula(self):
        u, v = _grid()
        rotated = copula_cdf(CopulaSpec("gumbel", 180), u, v, 2.0)
        base = copula_cdf(CopulaSpec("gumbel"), 1.0 - u, 1.0 - v, 2.0)
        assert_allclose(rotated, u + v - 1.0 + base, atol=1e-14)

    def test_rotation_270_definition(self):
        u, v = _grid()
        rotated = copula_cdf(CopulaSpec("joe", 270), u, v, -3.0)
        base = copula_cdf(CopulaSpec("joe"), u, 1.0 - v, 3.0)
        assert_allclose(rotated, u - base, atol=1e-14)

    @pytest.mark.parametrize("family", ["gauss", "frank", "fgm", "amh"])
    def test_independence_at_zero(self, family):
        u, v = _grid()
        assert_allclose(copula_cdf(CopulaSpec(family), u, v, 0.0), u * v, atol=1e-14)

    def test_frank_is_radially_symmetric_in_sign(self):
        u, v = _grid()
        spec = CopulaSpec("frank")
        assert_allclose(copula_cdf(spec, u, v, -3.0), u - copula_cdf(spec, u, 1.0 - v, 3.0),
                        atol=1e-12)

    def test_clayton_closed_form(self):
        u, v = _grid()
        expected = (u ** -2.0 + v ** -2.0 - 1.0) ** -0.5
        assert_allclose(copula_cdf(CopulaSpec("clayton"), u, v, 2.0), expected, rtol=1e-12)


class TestConditionals:

    @pytest.mark.parametrize("label,theta", CASES, ids=IDS)
    @pytest.mark.parametrize("wrt", [1, 2])
    def test_hfun_matches_finite_difference(self, label, theta, wrt):
        spec = CopulaSpec.from_label(label)
        u, v = _grid()
        step = 1e-6
        if wrt == 1:
            numeric = (copula_cdf(spec, u + step, v, theta)
                       - copula_cdf(spec, u - step, v, theta)) / (2 * step)
        else:
            numeric = (copula_cdf(spec, u, v + step, theta)
                       - copula_cdf(spec, u, v - step, theta)) / (2 * step)
        assert_allclose(copula_hfun(spec, u, v, theta, wrt), numeric, rtol=1e-5, atol=1e-7)

    @pytest.mark.parametrize("label,theta", CASES, ids=IDS)
    def test_density_matches_finite_difference(self, label, theta):
        spec = CopulaSpec.from_label(label)
        u, v = _grid()
        step = 1e-5
        numeric = (copula_hfun(spec, u, v + step, theta, 1)
                   - copula_hfun(spec, u, v - step, theta, 1)) / (2 * step)
        assert_allclose(copula_density(spec, u, v, theta), numeric, rtol=1e-4, atol=1e-5)

    @pytest.mark.parametrize("label,theta", CASES, ids=IDS)
    def test_hinv_inverts_hfun(self, label, theta):
        spec = CopulaSpec.from_label(label)
        w, u = _grid(11, 0.05, 0.95)
        v = copula_hinv(spec, w, u, theta)
        assert_allclose(copula_hfun(spec, u, v, theta, 1), w, atol=1e-9)

    def test_hfun_edges(self):
        spec = CopulaSpec("gumbel")
        assert_allclose(copula_hfun(spec, 0.3, 0.0, 2.0, 1), 0.0)
        assert_allclose(copula_hfun(spec, 0.3, 1.0, 2.0, 1), 1.0)

    def test_wrt_must_be_one_or_two(self):
        with pytest.raises(ConfigurationError):
            copula_hfun(CopulaSpec("gauss"), 0.5, 0.5, 0.1, 3)


class TestKendallTau:

    def test_gauss(self):
        assert_allclose(kendall_tau(CopulaSpec("gauss"), 0.5), 1.0 / 3.0, rtol=1e-12)

    def test_clayton_and_gumbel(self):
        assert_allclose(kendall_tau(CopulaSpec("clayton"), 2.0), 0.5)
        assert_allclose(kendall_tau(CopulaSpec("gumbel"), 2.0), 0.5)

    def test_fgm(self):
        assert_allclose(kendall_tau(CopulaSpec("fgm"), np.array([-0.9, 0.9])), [-0.2, 0.2])

    @pytest.mark.parametrize("theta", [1.5, 3.0, 6.0])
    def test_joe_against_digamma_form(self, theta):
        expected = 1.0 + 2.0 / (2.0 - theta) * (special.digamma(2.0)
                                                 - special.digamma(2.0 / theta + 1.0))
        assert_allclose(kendall_tau(CopulaSpec("joe"), theta), expected, rtol=1e-7)

    def test_joe_independence(self):
        assert_allclose(kendall_tau(CopulaSpec("joe"), 1.0), 0.0, atol=1e-10)

    @pytest.mark.parametrize("theta", [-6.0, 0.5, 5.736])
    def test_frank_against_quadrature(self, theta):
        debye, _ = integrate.quad(lambda t: t / np.expm1(t), 0.0, theta)
        expected = 1.0 - 4.0 / theta + 4.0 * debye / theta ** 2
        assert_allclose(kendall_tau(CopulaSpec("frank"), theta), expected, rtol=1e-8)

    def test_frank_is_odd(self):
        spec = CopulaSpec("frank")
        assert_allclose(kendall_tau(spec, -3.0), -kendall_tau(spec, 3.0), rtol=1e-10)

    def test_amh_range_and_continuity(self):
        spec = CopulaSpec("amh")
        assert_allclose(kendall_tau(spec, 1.0), 1.0 / 3.0)
        below = kendall_tau(spec, 1e-3 - 1e-9)
        above = kendall_tau(spec, 1e-3 + 1e-9)
        assert_allclose(below, above, rtol=1e-5)
        assert_allclose(kendall_tau(spec, 1e-6), 2e-6 / 9.0, rtol=1e-5)

    def test_rotations_flip_sign(self):
        assert_allclose(kendall_tau(CopulaSpec("clayton", 270), -2.0), -0.5)
        assert_allclose(kendall_tau(CopulaSpec("gumbel", 90), -2.0), -0.5)
        assert_allclose(kendall_tau(CopulaSpec("clayton", 180), 2.0), 0.5)

    @pytest.mark.parametrize("label,theta", CASES, ids=IDS)
    def test_sample_tau_matches(self, label, theta):
        spec = CopulaSpec.from_label(label)
        u, v = copula_sample(spec, theta, 20000, seed=11)
        assert abs(stats.kendalltau(u, v)[0] - float(kendall_tau(spec, theta))) < 0.02

    @pytest.mark.slow
    @pytest.mark.parametrize("label,theta", TAU_CASES, ids=TAU_IDS)
    def test_large_sample_tau_matches(self, label, theta):
        spec = CopulaSpec.from_label(label)
        u, v = copula_sample(spec, theta, 200_000, seed=23)
        assert abs(stats.kendalltau(u, v)[0] - float(kendall_tau(spec, theta))) < 0.015


class TestSpec:

    def test_from_label(self):
        assert CopulaSpec.from_label("clayton270") == CopulaSpec("clayton", 270)
        assert CopulaSpec.from_label("Gauss") == CopulaSpec("gauss", 0)
        assert CopulaSpec("joe", 90).label == "joe90"

    def test_bad_label(self):
        with pytest.raises(ConfigurationError):
            CopulaSpec.from_label("student-t")

    def test_unknown_family(self):
        with pytest.raises(ConfigurationError):
            CopulaSpec("plackett")

    def test_negating_rotation_needs_rotatable_family(self):
        with pytest.raises(ConfigurationError):
            CopulaSpec("gauss", 90)

    def test_theta_links(self):
        assert CopulaSpec("gauss").theta_link == "atanh"
        assert CopulaSpec("clayton").theta_link == "log"
        assert CopulaSpec("clayton", 90).theta_link == "log_negative"
        assert CopulaSpec("gumbel", 270).theta_link == "log_negative_minus_one"
        assert CopulaSpec("joe", 180).theta_link == "log_minus_one"
        assert CopulaSpec("frank").theta_link == "identity"

    def test_theta_response_round_trip(self):
        spec = CopulaSpec("clayton", 270)
        eta = np.array([-2.0, 0.0, 1.5])
        theta = theta_response(spec, eta)
        assert np.all(theta < 0)
        assert_allclose(theta_link(spec, theta), eta)
        assert_allclose(theta_response(spec, 0.0), -1.0)

    def test_parameter_domain(self):
        with pytest.raises(DomainError):
            copula_cdf(CopulaSpec("clayton"), 0.5, 0.5, -1.0)
        with pytest.raises(DomainError):
            copula_cdf(CopulaSpec("clayton", 90), 0.5, 0.5, 2.0)
        with pytest.raises(DomainError):
            copula_cdf(CopulaSpec("gauss"), 0.5, 0.5, 1.5)
        with pytest.raises(DomainError):
            copula_cdf(CopulaSpec("gumbel"), 0.5, 0.5, 0.5)

    def test_arguments_outside_unit_square(self):
        with pytest.raises(DomainError):
            copula_cdf(CopulaSpec("gauss"), 1.2, 0.5, 0.1)


class TestBivariateNormal:

    def test_orthant_closed_form(self):
        r = np.linspace(-0.99, 0.99, 45)
        assert_allclose(bvn_cdf(0.0, 0.0, r), 0.25 + np.arcsin(r) / (2 * np.pi), atol=1e-14)

    def test_against_scipy(self):
        points = [(0.3, -1.2, 0.4), (1.5, 0.7, -0.8), (-0.4, 0.9, 0.95), (2.0, -0.5, -0.97)]
        for x, y, r in points:
            expected = stats.multivariate_normal(mean=[0.0, 0.0],
                                                 cov=[[1.0, r], [r, 1.0]]).cdf([x, y])
            assert_allclose(bvn_cdf(x, y, r), expected, atol=5e-5)

    def test_independence(self):
        x = np.array([-1.0, 0.0, 0.5, 2.0])
        assert_allclose(bvn_cdf(x, x[::-1], 0.0), special.ndtr(x) * special.ndtr(x[::-1]),
                        atol=1e-15)

    def test_infinite_limits(self):
        assert_allclose(bvn_cdf(np.inf, 0.3, 0.5), special.ndtr(0.3))
        assert_allclose(bvn_cdf(-np.inf, 0.3, 0.5), 0.0)

    def test_perfect_correlation(self):
        assert_allclose(bvn_cdf(0.2, -0.4, 1.0), special.ndtr(-0.4), atol=1e-14)
        assert_allclose(bvn_cdf(0.2, 0.4, -1.0),
                        special.ndtr(0.2) + special.ndtr(0.4) - 1.0, atol=1e-14)
