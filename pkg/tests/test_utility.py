import math

import numpy as np
import pytest

from frictionopt import (
    UtilitySpec,
    build_conjugate_table,
    check_assumptions,
    conjugate,
    delta2_ratio,
    exp_utility,
    log_utility,
    luxemburg_norm,
    orlicz_conjugate,
    power_utility,
    table_utility,
    vector_conjugate,
    young_pair,
)
from frictionopt.errors import (
    AssumptionViolationError,
    ConfigError,
    ConjugateUnboundedError,
    IndeterminateError,
)

YS = [0.25, 0.5, 1.0, 2.0, 4.0]


def linear_utility():
    return UtilitySpec("linear", "real", lambda x: np.asarray(x, float))


class TestConjugate:
    def test_log_matches_closed_form(self):
        u = log_utility()
        for y in YS:
            assert conjugate(u, y) == pytest.approx(-math.log(y) - 1.0, abs=1e-8)

    def test_exp_matches_closed_form(self):
        u = exp_utility(1.0)
        for y in YS:
            assert conjugate(u, y) == pytest.approx(1.0 - y + y * math.log(y), abs=1e-8)

    def test_exp_rate_parameter(self):
        a = 2.5
        u = exp_utility(a)
        for y in YS:
            expected = 1.0 - y / a + (y / a) * math.log(y / a)
            assert conjugate(u, y) == pytest.approx(expected, abs=1e-8)

    def test_power_matches_closed_form(self):
        u = power_utility(0.5)
        for y in YS:
            assert conjugate(u, y) == pytest.approx(1.0 / y, abs=1e-8)

    def test_rejects_nonpositive_y(self):
        u = log_utility()
        with pytest.raises(ConjugateUnboundedError):
            conjugate(u, 0.0)
        with pytest.raises(ConjugateUnboundedError):
            conjugate(u, -1.0)

    def test_linear_utility_diverges(self):
        with pytest.raises(ConjugateUnboundedError):
            conjugate(linear_utility(), 0.5)

    def test_table(self):
        u = exp_utility(1.0)
        tab = build_conjugate_table(u, YS)
        assert tab.utility_name == "exp"
        expected = [1.0 - y + y * math.log(y) for y in YS]
        np.testing.assert_allclose(tab.values, expected, atol=1e-8)
        with pytest.raises(ConfigError):
            build_conjugate_table(u, [1.0, 0.5])


class TestVectorConjugate:
    def test_analytic_route_matches_scalar(self):
        u = log_utility()
        pts = np.asarray(YS)
        got = vector_conjugate(u, pts)
        np.testing.assert_allclose(got, -np.log(pts) - 1.0, atol=1e-12)

    def test_numeric_route_interpolates_the_search(self):
        # same log utility but with the closed form withheld, forcing the
        # tabulated search; V is linear in ln y so the interpolation is clean
        base = log_utility()
        u = UtilitySpec("log-numeric", "positive", base.fn)
        pts = np.linspace(0.5, 2.0, 9)
        got = vector_conjugate(u, pts)
        np.testing.assert_allclose(got, -np.log(pts) - 1.0, atol=1e-8)

    def test_rejects_nonpositive_points(self):
        with pytest.raises(ConjugateUnboundedError):
            vector_conjugate(log_utility(), np.asarray([1.0, 0.0]))


class TestYoungPair:
    def test_beta_is_slope_at_zero(self):
        pair = young_pair(exp_utility(1.0))
        assert pair.beta == pytest.approx(1.0, abs=1e-6)
        assert pair.v_at_beta == pytest.approx(0.0, abs=1e-8)

    def test_beta_scales_with_rate(self):
        pair = young_pair(exp_utility(3.0))
        assert pair.beta == pytest.approx(3.0, abs=1e-5)

    def test_phi_vanishes_below_beta(self):
        pair = young_pair(exp_utility(1.0))
        np.testing.assert_array_equal(pair.phi(np.asarray([0.0, 0.25, 0.9, pair.beta])), 0.0)
        # the analytic kink sits within 1e-6 of the numerical beta, so the
        # value there is at worst a conjugate residue of order tol**2
        assert abs(pair.phi(np.asarray([1.0]))[0]) < 1e-12

    def test_phi_equals_shifted_conjugate_above_beta(self):
        pair = young_pair(exp_utility(1.0))
        ys = np.asarray([1.5, 2.0, 4.0, 10.0])
        expected = ys * np.log(ys) - ys + 1.0
        np.testing.assert_allclose(pair.phi(ys), expected, atol=1e-7)

    def test_phi_star_is_reflected_utility_bitwise(self):
        pair = young_pair(exp_utility(1.0))
        xs = np.asarray([0.0, 0.5, 1.0, 2.0, 5.0])
        np.testing.assert_array_equal(pair.phi_star(xs), np.exp(xs) - 1.0)

    def test_biconjugation_recovers_phi(self):
        pair = young_pair(exp_utility(1.0))
        ys = np.linspace(0.1, 5.0, 20)
        back = np.asarray([orlicz_conjugate(pair.phi_star, float(y)) for y in ys])
        np.testing.assert_allclose(back, pair.phi(ys), atol=1e-7)

    def test_delta2_flag_set_for_exp_pair(self):
        assert young_pair(exp_utility(1.0)).delta2_finite

    def test_rejects_utility_failing_assumptions(self):
        with pytest.raises(AssumptionViolationError):
            young_pair(linear_utility())


class TestDelta2:
    def test_exp_pair_ratio_near_two(self):
        pair = young_pair(exp_utility(1.0))
        rep = delta2_ratio(pair.phi)
        assert rep.finite
        assert 1.9 <= rep.ratio_estimate <= 2.2
        assert rep.grid_max == pytest.approx(1e6)

    def test_exponential_growth_flagged_infinite(self):
        pair = young_pair(exp_utility(1.0))
        rep = delta2_ratio(pair.phi_star)
        assert not rep.finite

    def test_power_function_exact_ratio(self):
        rep = delta2_ratio(lambda x: np.asarray(x, float) ** 2)
        assert rep.finite
        assert rep.ratio_estimate == pytest.approx(4.0, rel=1e-12)

    def test_grid_validation(self):
        with pytest.raises(ConfigError):
            delta2_ratio(lambda x: x, grid=np.asarray([-1.0, 1.0, 2.0] + list(range(3, 11))))
        with pytest.raises(ConfigError):
            delta2_ratio(lambda x: x, grid=np.asarray([1.0, 2.0]))

    def test_vanishing_phi_is_indeterminate(self):
        with pytest.raises(IndeterminateError):
            delta2_ratio(lambda x: np.zeros_like(np.asarray(x, float)))


class TestLuxemburgNorm:
    def test_constant_sample_closed_form_exponential_gauge(self):
        # mean of e^{c/g} - 1 equals 1 exactly at g = c / ln 2
        pair = young_pair(exp_utility(1.0))
        for c in (0.5, 1.0, 2.0):
            got = luxemburg_norm(np.full(17, c), pair.phi_star)
            assert got == pytest.approx(c / math.log(2.0), abs=1e-9)

    def test_constant_sample_closed_form_entropy_gauge(self):
        # phi(t) = t ln t - t + 1 hits 1 at t = e, so the norm is c / e
        pair = young_pair(exp_utility(1.0))
        for c in (0.5, 1.0, 2.0):
            got = luxemburg_norm(np.full(5, c), pair.phi)
            assert got == pytest.approx(c / math.e, rel=1e-9)

    def test_positive_homogeneity(self):
        pair = young_pair(exp_utility(1.0))
        rng = np.random.default_rng(3)
        x = rng.exponential(1.0, size=200)
        base = luxemburg_norm(x, pair.phi_star)
        for c in (0.5, 2.0):
            scaled = luxemburg_norm(c * x, pair.phi_star)
            assert scaled == pytest.approx(c * base, rel=1e-9)

    def test_monotone_in_the_sample(self):
        pair = young_pair(exp_utility(1.0))
        rng = np.random.default_rng(7)
        x = rng.exponential(1.0, size=100)
        assert luxemburg_norm(1.5 * x, pair.phi_star) >= luxemburg_norm(x, pair.phi_star)

    def test_zero_sample_and_validation(self):
        pair = young_pair(exp_utility(1.0))
        assert luxemburg_norm(np.zeros(4), pair.phi_star) == 0.0
        with pytest.raises(ConfigError):
            luxemburg_norm(np.asarray([]), pair.phi_star)
        with pytest.raises(ConfigError):
            luxemburg_norm(np.asarray([1.0, np.inf]), pair.phi_star)


class TestAssumptions:
    def test_exp_utility_passes(self):
        rep = check_assumptions(exp_utility(1.0))
        assert rep.passed
        assert rep.failures == ()

    def test_linear_utility_fails_boundedness(self):
        rep = check_assumptions(linear_utility())
        assert not rep.passed
        assert "appears unbounded above" in rep.failures

    def test_shifted_utility_fails_normalization(self):
        def fn(x):
            with np.errstate(over="ignore"):
                return 2.0 - np.exp(-np.asarray(x, float))

        u = UtilitySpec("shifted", "real", fn)
        rep = check_assumptions(u)
        assert "U(0) != 0" in rep.failures

    def test_positive_domain_rejected(self):
        with pytest.raises(ConfigError):
            check_assumptions(log_utility())


class TestTableUtility:
    def test_interpolation_and_extrapolation(self):
        u = table_utility([-1.0, 0.0, 1.0, 2.0], [-2.0, 0.0, 1.0, 1.5])
        assert u.domain == "real"
        np.testing.assert_allclose(u(np.asarray([0.5])), [0.5])
        # left of the knots: slope 2 through (-1, -2)
        np.testing.assert_allclose(u(np.asarray([-3.0])), [-6.0])
        # right of the knots: slope 0.5 through (2, 1.5)
        np.testing.assert_allclose(u(np.asarray([4.0])), [2.5])

    def test_positive_domain_when_knots_are_positive(self):
        u = table_utility([0.5, 1.0, 2.0], [0.0, 0.5, 0.75])
        assert u.domain == "positive"
        assert u(np.asarray([-1.0]))[0] == -np.inf

    def test_validation(self):
        with pytest.raises(ConfigError):
            table_utility([0.0, 0.0, 1.0], [0.0, 0.1, 0.2])
        with pytest.raises(ConfigError):
            table_utility([0.0, 1.0, 2.0], [0.0, 0.1, 0.5])  # convex kink
        with pytest.raises(ConfigError):
            table_utility([0.0, 1.0], [1.0, 0.0])  # decreasing
