import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from qstein.core import (
    OUTSIDE_SUPPORT,
    Q_MAX,
    QGaussian,
    UnsupportedRegimeError,
    escort,
    log_density,
    moments,
    radial_law,
    radius_sq,
)

GRID_Q = (0.0, 0.3, 0.5, 0.8, 0.99)

# (3/2)^(2/3): with D = 1, m = 1 the normalizer ratio Gamma(5/2) / (sqrt(pi) Gamma(2)) is 3/4.
R2_Q0_D1 = 1.5 ** (2.0 / 3.0)


def _law_1d(q, mu=0.0, scale=1.0):
    return QGaussian(np.array([mu]), np.array([[scale]]), q)


class TestRadius:
    def test_hand_value(self):
        assert abs(radius_sq(0.0, 1) - R2_Q0_D1) < 1e-12

    def test_q_half_d2_closed_form(self):
        # m = 2, D = 2: Z = Gamma(4) / (pi Gamma(3)) = 3 / pi, R^2 = (16 * 3 / pi)^(1/3)
        assert radius_sq(0.5, 2) == pytest.approx((48.0 / math.pi) ** (1.0 / 3.0), rel=1e-13)

    def test_grows_with_q(self):
        assert radius_sq(0.999, 1) > radius_sq(0.99, 1) > radius_sq(0.5, 1)

    def test_huge_dimension_finite(self):
        for q in GRID_Q:
            r2 = radius_sq(q, 10**6)
            assert math.isfinite(r2) and r2 > 0

    def test_dimension_dominates_at_200(self):
        a, b = radius_sq(0.0, 200), radius_sq(0.5, 200)
        assert abs(b - a) < 0.1 * a

    def test_rejects_heavy_tails(self):
        with pytest.raises(UnsupportedRegimeError, match="heavy-tailed"):
            radius_sq(1.5, 1)

    def test_rejects_near_one_gap(self):
        with pytest.raises(UnsupportedRegimeError):
            radius_sq(1.0 - 1e-10, 1)
        assert math.isfinite(radius_sq(Q_MAX, 1))


class TestConstruction:
    def test_from_scale_factors(self):
        sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
        p = QGaussian.from_scale([0.0, 1.0], sigma, 0.5)
        np.testing.assert_allclose(p.sigma, sigma, rtol=1e-14)
        assert p.sigma_factor[0, 1] == 0.0

    def test_not_positive_definite(self):
        with pytest.raises(ValueError):
            QGaussian.from_scale([0.0, 0.0], np.array([[1.0, 2.0], [2.0, 1.0]]), 0.5)

    def test_upper_factor_rejected(self):
        with pytest.raises(ValueError):
            QGaussian(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 0.0)

    def test_immutable(self):
        p = QGaussian.standard(2, 0.5)
        with pytest.raises(ValueError):
            p.mu[0] = 1.0

    def test_json_round_trip_recomputes(self):
        p = QGaussian(np.array([0.1, -0.2]), np.array([[1.0, 0.0], [0.4, 0.8]]), 0.3)
        d = json.loads(p.to_json())
        assert set(d) == {"mu", "sigma_factor_rows", "q"}
        p2 = QGaussian.from_json(p.to_json())
        assert p2.radius_sq == p.radius_sq and p2.log_normalizer == p.log_normalizer

    def test_json_unknown_key(self):
        with pytest.raises(ValueError):
            QGaussian.from_dict({"mu": [0.0], "sigma_factor_rows": [[1.0]], "q": 0.0, "radius_sq": 3.0})


class TestLogDensity:
    def test_mode_at_location(self):
        p = _law_1d(0.5, mu=0.4, scale=0.7)
        grid = np.linspace(-3, 3, 601)[:, None]
        ld = log_density(p, grid)
        assert log_density(p, np.array([0.4])) >= ld.max()

    def test_boundary_is_sentinel(self):
        p = _law_1d(0.0)
        x = np.array([math.sqrt(p.radius_sq)])
        out = log_density(p, x)
        assert out is OUTSIDE_SUPPORT
        assert out == -math.inf

    def test_batch_exterior_minus_inf(self):
        p = QGaussian.standard(2, 0.5)
        R = math.sqrt(p.radius_sq)
        ld = log_density(p, np.array([[0.0, 0.0], [R * 1.01, 0.0]]))
        assert np.isfinite(ld[0]) and ld[1] == -np.inf

    @pytest.mark.parametrize("q", GRID_Q)
    def test_normalized_1d_scipy_quad(self, q):
        p = _law_1d(q, mu=0.3, scale=1.3)
        R = math.sqrt(p.radius_sq) * 1.3
        val, _ = integrate.quad(lambda t: p.density(np.array([t])), 0.3 - R, 0.3 + R, limit=200, epsabs=1e-13)
        assert abs(val - 1.0) < 1e-8

    def test_normalized_2d_scipy_dblquad(self):
        p = QGaussian.standard(2, 0.5)
        R = math.sqrt(p.radius_sq)

        def f(r, th):
            return r * p.density(np.array([r * math.cos(th), r * math.sin(th)]))

        val, _ = integrate.dblquad(f, 0.0, 2 * math.pi, 0.0, R, epsabs=1e-12)
        assert abs(val - 1.0) < 1e-8

    def test_gaussian_limit_mode(self):
        p = _law_1d(1.0)
        assert float(np.exp(log_density(p, np.array([0.0])))) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)

    def test_gaussian_limit_multivariate(self):
        L = np.array([[1.0, 0.0], [0.5, 2.0]])
        p = QGaussian(np.array([0.1, 0.2]), L, 1.0)
        x = np.array([[0.3, -1.0], [2.0, 0.5]])
        ref = stats.multivariate_normal(mean=p.mu, cov=L @ L.T).logpdf(x)
        np.testing.assert_allclose(log_density(p, x), ref, rtol=1e-12)

    def test_approaches_gaussian(self):
        grid = np.linspace(-4, 4, 401)[:, None]
        phi = stats.norm.pdf(grid[:, 0])
        dists = [np.max(np.abs(_law_1d(q).density(grid) - phi)) for q in (0.99, 0.999, 0.9999)]
        assert dists[0] > dists[1] > dists[2]


class TestEscort:
    def test_order_zero_is_base(self):
        p = _law_1d(0.3, mu=0.2, scale=0.9)
        x = np.linspace(-0.5, 0.9, 50)[:, None]
        np.testing.assert_allclose(escort(p, 0).density(x), p.density(x), rtol=1e-12)

    def test_exponent(self):
        assert escort(_law_1d(0.0), 1).exponent == 2.0

    def test_reweighting_form(self):
        p = _law_1d(0.5)
        star = escort(p, 1)
        R = math.sqrt(p.radius_sq)
        x = np.linspace(-0.95 * R, 0.95 * R, 50)[:, None]
        big_m, _ = integrate.quad(lambda t: (p.radius_sq - t * t) * p.density(np.array([t])), -R, R, epsabs=1e-13)
        lhs = star.density(x) * big_m
        rhs = (p.radius_sq - x[:, 0] ** 2) * p.density(x)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9)

    @pytest.mark.parametrize("q", (0.0, 0.5, 0.8))
    def test_power_law_relation(self, q):
        p = QGaussian(np.array([0.1, 0.0]), np.array([[1.0, 0.0], [0.3, 0.7]]), q)
        rng = np.random.default_rng(3)
        x = rng.uniform(-0.3, 0.3, size=(40, 2))
        diff = log_density(escort(p, 1), x) - (2.0 - q) * log_density(p, x)
        assert np.ptp(diff) < 1e-10

    def test_negative_order(self):
        with pytest.raises(ValueError):
            escort(_law_1d(0.0), -1)

    def test_boundary_vanishing(self):
        p = _law_1d(0.0)
        R = math.sqrt(p.radius_sq)
        x = np.array([[R * (1 - 1e-6)]])
        assert p.density(x)[0] < 1e-5 and escort(p, 1).density(x)[0] < 1e-10


class TestRadialLawAndMoments:
    def test_radial_law_shapes(self):
        p = _law_1d(0.0)
        assert (radial_law(p, 0).alpha, radial_law(p, 0).beta) == (0.5, 2.0)
        assert radial_law(p, 1).beta == 3.0
        assert radial_law(p, 0).radius_sq == pytest.approx(R2_Q0_D1, rel=1e-14)

    def test_radial_law_bad_order(self):
        with pytest.raises(ValueError):
            radial_law(_law_1d(0.0), 2)

    def test_radial_mean_matches_scipy_beta(self):
        p = QGaussian.standard(3, 0.3)
        law = radial_law(p, 0)
        ref = stats.beta(1.5, p.m + 1).mean() * p.radius_sq
        assert law.mean() == pytest.approx(ref, rel=1e-13)
        assert moments(p).E_s_p == pytest.approx(ref, rel=1e-13)

    def test_q0_d1_values(self):
        mom = moments(_law_1d(0.0))
        # R^2 / 5 with R^2 = (3/2)^(2/3)
        assert mom.E_s_p == pytest.approx(0.2620741394208897, rel=1e-13)
        assert mom.M == pytest.approx(4 * R2_Q0_D1 / 5, rel=1e-13)
        assert mom.E_s_p == pytest.approx(mom.M / 4, rel=1e-13)
        assert mom.E_s_star == pytest.approx(R2_Q0_D1 / 7, rel=1e-13)

    def test_gaussian_moments(self):
        mom = moments(QGaussian.standard(3, 1.0))
        assert mom.cov_scale == 1.0 and mom.E_s_p == 3.0 and math.isinf(mom.M)

    def test_moment_by_scipy_quad(self):
        p = _law_1d(0.8)
        R = math.sqrt(p.radius_sq)
        val, _ = integrate.quad(lambda t: t * t * p.density(np.array([t])), -R, R, epsabs=1e-13, limit=200)
        assert abs(val - moments(p).E_s_p) < 1e-8
