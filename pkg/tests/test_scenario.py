import math

import numpy as np
import pytest

from frictionopt import (
    ArctanDrift,
    BlackScholes,
    Factor,
    PathDependentBS,
    ThetaGrid,
    TimeGrid,
    gaussian_panel,
    lattice_panel,
    simulate,
    simulate_panel,
)
from frictionopt.errors import ConfigError, InvalidModelError


class TestTimeGrid:
    def test_uniform_grid_endpoints(self):
        g = TimeGrid(2.0, 8)
        assert g.times[0] == 0.0
        assert g.times[-1] == 2.0
        assert g.dt == 0.25
        np.testing.assert_allclose(np.diff(g.times), g.dt)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigError):
            TimeGrid(0.0, 5)
        with pytest.raises(ConfigError):
            TimeGrid(1.0, 0)


class TestGaussianPanel:
    def test_shape_and_variance(self):
        g = TimeGrid(1.0, 20)
        n = gaussian_panel(g, 4000, 2, seed=5)
        assert n.increments.shape == (4000, 20, 2)
        # var of each increment is dt; 3 SE guard on the pooled estimate
        var = n.increments.var()
        count = n.increments.size
        se = g.dt * math.sqrt(2.0 / count)
        assert abs(var - g.dt) < 3 * se

    def test_seed_determinism(self):
        g = TimeGrid(1.0, 6)
        a = gaussian_panel(g, 50, 1, seed=9)
        b = gaussian_panel(g, 50, 1, seed=9)
        assert np.array_equal(a.increments, b.increments)
        c = gaussian_panel(g, 50, 1, seed=10)
        assert not np.array_equal(a.increments, c.increments)

    def test_substreams_independent_of_path_count(self):
        g = TimeGrid(1.0, 6)
        small = gaussian_panel(g, 8, 1, seed=3)
        large = gaussian_panel(g, 64, 1, seed=3)
        assert np.array_equal(small.increments, large.increments[:8])

    def test_probs_uniform(self):
        g = TimeGrid(1.0, 3)
        n = gaussian_panel(g, 10, 1, seed=0)
        np.testing.assert_allclose(n.probs, 0.1)


class TestLatticePanel:
    def test_exhaustive_signs(self):
        g = TimeGrid(1.0, 3)
        n = lattice_panel(g, 1)
        assert n.paths == 8
        assert n.probs.sum() == 1.0
        vals = np.unique(n.increments)
        np.testing.assert_allclose(np.abs(vals), math.sqrt(g.dt))
        # every sign pattern appears exactly once
        patterns = {tuple(np.sign(n.increments[m, :, 0]).astype(int)) for m in range(8)}
        assert len(patterns) == 8

    def test_prefix_blocks_contiguous(self):
        g = TimeGrid(1.0, 3)
        n = lattice_panel(g, 1)
        # first half of the paths all start with an up move
        assert np.all(n.increments[:4, 0, 0] > 0)
        assert np.all(n.increments[4:, 0, 0] < 0)

    def test_size_guard(self):
        with pytest.raises(ConfigError):
            lattice_panel(TimeGrid(1.0, 30), 1)


class TestBlackScholes:
    def test_zero_vol_is_deterministic_exponential(self):
        g = TimeGrid(1.0, 25)
        n = gaussian_panel(g, 16, 1, seed=1)
        s = simulate(BlackScholes(0.1, 0.0), g, n)
        np.testing.assert_allclose(s[:, -1], math.exp(0.1), rtol=1e-14)

    def test_exact_log_step(self):
        # one path, one step: S_1 = exp((mu - sigma^2/2) dt + sigma dW) bit-for-bit
        g = TimeGrid(1.0, 1)
        n = gaussian_panel(g, 5, 1, seed=2)
        mu, sig = 0.07, 0.3
        s = simulate(BlackScholes(mu, sig), g, n)
        dw = n.increments[:, 0, 0]
        expected = np.exp((mu - 0.5 * sig**2) * g.dt + sig * dw)
        np.testing.assert_array_equal(s[:, 1], expected)

    def test_weak_terminal_mean(self):
        g = TimeGrid(1.0, 10)
        n = gaussian_panel(g, 40000, 1, seed=7)
        s = simulate(BlackScholes(0.05, 0.2), g, n)
        term = s[:, -1]
        se = term.std(ddof=1) / math.sqrt(len(term))
        assert abs(term.mean() - math.exp(0.05)) < 3 * se

    def test_rejects_bad_params(self):
        with pytest.raises(InvalidModelError):
            BlackScholes(0.1, -0.2)
        with pytest.raises(InvalidModelError):
            BlackScholes(0.1, 0.2, s0=0.0)


class TestArctanDrift:
    def test_terminal_bounds(self):
        g = TimeGrid(1.0, 50)
        n = gaussian_panel(g, 1000, 1, seed=7)
        s = simulate(ArctanDrift(), g, n)
        assert s[:, -1].min() > 7.0 / 4.0
        assert s[:, -1].max() < 9.0 / 4.0
        # whole path band: t + 3/4 < S_t < t + 5/4
        t = g.times[None, :]
        assert np.all(s > t + 0.75)
        assert np.all(s < t + 1.25)

    def test_initial_price_one(self):
        g = TimeGrid(1.0, 4)
        n = gaussian_panel(g, 10, 1, seed=0)
        s = simulate(ArctanDrift(), g, n)
        np.testing.assert_array_equal(s[:, 0], 1.0)


class TestPathDependentBS:
    def test_constant_coefficients_match_black_scholes(self):
        g = TimeGrid(1.0, 12)
        n = gaussian_panel(g, 30, 1, seed=4)
        pd = PathDependentBS(mu_fn=lambda t, past: 0.08, sigma_fn=lambda t, past: 0.25)
        bs = simulate(BlackScholes(0.08, 0.25), g, n)
        s = simulate(pd, g, n)
        np.testing.assert_allclose(s, bs, rtol=1e-12)

    def test_clamping_applies(self):
        g = TimeGrid(1.0, 4)
        n = gaussian_panel(g, 10, 1, seed=4)
        wild = PathDependentBS(
            mu_fn=lambda t, past: 1e9,
            sigma_fn=lambda t, past: 1e9,
            mu_bounds=(-0.5, 0.5),
            sigma_bounds=(0.1, 0.4),
        )
        s = simulate(wild, g, n)
        capped = simulate(PathDependentBS(mu_fn=lambda t, past: 0.5, sigma_fn=lambda t, past: 0.4), g, n)
        np.testing.assert_allclose(s, capped, rtol=1e-12)

    def test_coefficients_see_only_the_past(self):
        g = TimeGrid(1.0, 5)
        n = gaussian_panel(g, 8, 1, seed=6)
        seen = []
        pd = PathDependentBS(
            mu_fn=lambda t, past: seen.append(past.shape[1]) or 0.0,
            sigma_fn=lambda t, past: 0.2,
        )
        simulate(pd, g, n)
        assert seen == [0, 1, 2, 3, 4]


class TestFactor:
    def test_zero_loadings_reduce_to_plain_dynamics(self):
        g = TimeGrid(1.0, 10)
        n = gaussian_panel(g, 20, 2, seed=8)
        f = Factor(
            theta=((0.0, 0.0), (0.0, 0.0)),
            m_fn=lambda y: 0.05,
            g_fn=lambda y: 0.0,
            sigma=0.2,
            rho=(0.0, 0.0),
        )
        s, y = f.simulate_with_factor(g, n)
        bs = simulate(BlackScholes(0.05, 0.2), g, n)
        np.testing.assert_allclose(s, bs, rtol=1e-12)
        np.testing.assert_array_equal(y, 0.0)

    def test_theta_feeds_the_drift(self):
        g = TimeGrid(1.0, 10)
        n = gaussian_panel(g, 500, 2, seed=8)
        base = dict(m_fn=lambda y: 0.0, g_fn=lambda y: 0.0, sigma=0.2, rho=(0.1, 0.1), y0=1.0)
        low = Factor(theta=((0.0, 0.0), (0.0, 0.0)), **base)
        high = Factor(theta=((0.5, 0.0), (0.0, 0.0)), **base)
        s_low = simulate(low, g, n)
        s_high = simulate(high, g, n)
        # positive drift loading on a positive factor raises prices pathwise at first step
        assert np.all(s_high[:, 1] > s_low[:, 1])

    def test_needs_two_drivers(self):
        g = TimeGrid(1.0, 4)
        n1 = gaussian_panel(g, 10, 1, seed=0)
        f = Factor(theta=((0.0, 0.0), (0.0, 0.0)), m_fn=lambda y: 0.0, g_fn=lambda y: 0.0, sigma=0.2, rho=(0.1, 0.1))
        with pytest.raises(ConfigError):
            simulate(f, g, n1)


class TestSimulatePanel:
    def test_common_noise_drift_monotonicity(self):
        # same noise, higher drift: prices dominate path by path
        g = TimeGrid(1.0, 20)
        n = gaussian_panel(g, 4, 1, seed=42)
        thetas = ThetaGrid((BlackScholes(-0.1, 0.2), BlackScholes(0.1, 0.2)))
        panel = simulate_panel(thetas, g, n)
        assert np.all(panel.prices[1][:, 1:] > panel.prices[0][:, 1:])

    def test_threads_do_not_change_results(self):
        g = TimeGrid(1.0, 10)
        n = gaussian_panel(g, 100, 1, seed=3)
        thetas = ThetaGrid(tuple(BlackScholes(mu, 0.2) for mu in (-0.1, 0.0, 0.1, 0.2)))
        p1 = simulate_panel(thetas, g, n, threads=1)
        p8 = simulate_panel(thetas, g, n, threads=8)
        assert np.array_equal(p1.prices, p8.prices)

    def test_mixed_driver_families_share_a_panel(self):
        g = TimeGrid(1.0, 5)
        n = gaussian_panel(g, 16, 2, seed=1)
        f = Factor(theta=((0.0, 0.0), (0.0, 0.0)), m_fn=lambda y: 0.0, g_fn=lambda y: 0.0, sigma=0.2, rho=(0.1, 0.1))
        thetas = ThetaGrid((BlackScholes(0.1, 0.2), f))
        panel = simulate_panel(thetas, g, n)
        assert panel.prices.shape == (2, 16, 6)

    def test_error_carries_theta_index(self):
        g = TimeGrid(1.0, 5)
        n = gaussian_panel(g, 8, 1, seed=1)
        thetas = ThetaGrid((BlackScholes(0.1, 0.2), Factor(theta=((0.0, 0.0), (0.0, 0.0)), m_fn=lambda y: 0.0, g_fn=lambda y: 0.0, sigma=0.2, rho=(0.1, 0.1))))
        with pytest.raises(ConfigError, match="theta index 1"):
            simulate_panel(thetas, g, n)
