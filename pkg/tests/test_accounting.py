import numpy as np
import pytest

from frictionopt import (
    ArctanDrift,
    BlackScholes,
    CostSpec,
    Strategy,
    TimeGrid,
    check_admissible_rplus,
    gaussian_panel,
    run_ledger,
    shadow_ledger,
    simulate,
)
from frictionopt.errors import ConfigError


def random_strategy(grid, paths, rng, h0_scale=1.0, jump_scale=0.2, flatten=True, nonneg_h0=False):
    d_up = np.zeros((paths, grid.steps + 1))
    d_dn = np.zeros((paths, grid.steps + 1))
    d_up[:, 1:] = rng.exponential(jump_scale, size=(paths, grid.steps))
    d_dn[:, 1:] = rng.exponential(jump_scale, size=(paths, grid.steps))
    h0 = float(rng.normal(0.0, h0_scale))
    if nonneg_h0:
        h0 = abs(h0)
    if flatten:
        d_up[:, -1] = 0.0
        d_dn[:, -1] = 0.0
        pos = h0
        for i in range(1, grid.steps):
            pos = (pos + d_up[:, i]) - d_dn[:, i]
        d_dn[:, -1] = np.maximum(pos, 0.0)
        d_up[:, -1] = np.maximum(-pos, 0.0)
    return Strategy(grid, h0, d_up, d_dn)


class TestRunLedger:
    def test_zero_strategy_identity(self):
        g = TimeGrid(1.0, 10)
        noise = gaussian_panel(g, 50, 1, seed=0)
        prices = simulate(BlackScholes(0.1, 0.2), g, noise)
        led = run_ledger(Strategy.zero(g, 50), prices, CostSpec(0.1, 7.0))
        np.testing.assert_array_equal(led.cash, 7.0)
        np.testing.assert_array_equal(led.position, 0.0)
        np.testing.assert_array_equal(led.liq, 7.0)

    def test_worked_round_trip(self):
        # x=10, lambda=0.01, S constant 2: buy 1 at t=0, sell at T
        g = TimeGrid(1.0, 1)
        prices = np.full((1, 2), 2.0)
        d_dn = np.array([[0.0, 1.0]])
        strat = Strategy(g, 1.0, np.zeros((1, 2)), d_dn)
        led = run_ledger(strat, prices, CostSpec(0.01, 10.0))
        assert led.cash[0, 0] == 8.0
        assert led.cash[0, 1] == 9.98
        assert led.liq[0, 1] == 9.98
        assert led.position[0, 1] == 0.0
        # round-trip cost is lambda * S
        assert 10.0 - led.liq[0, 1] == pytest.approx(0.02, abs=1e-15)

    def test_short_side_settles_at_bid(self):
        g = TimeGrid(1.0, 1)
        prices = np.full((1, 2), 2.0)
        strat = Strategy(g, -1.0, np.array([[0.0, 1.0]]), np.zeros((1, 2)))
        led = run_ledger(strat, prices, CostSpec(0.25, 10.0))
        # sell 1 at (1-lam)*2 = 1.5, buy back at 2
        assert led.cash[0, 0] == 11.5
        assert led.cash[0, 1] == 9.5
        assert led.position[0, 1] == 0.0

    def test_arctan_buy_and_hold_bound(self):
        # buy 1 at t=0, sell at T, lambda = 2/3: liq_T = x - S_0 + S_T/3 >= x - 1 + 7/12
        g = TimeGrid(1.0, 50)
        noise = gaussian_panel(g, 1000, 1, seed=7)
        prices = simulate(ArctanDrift(), g, noise)
        d_dn = np.zeros((1000, 51))
        d_dn[:, -1] = 1.0
        strat = Strategy(g, 1.0, np.zeros((1000, 51)), d_dn)
        x = 2.0
        led = run_ledger(strat, prices, CostSpec(2.0 / 3.0, x))
        expected = x - prices[:, 0] + prices[:, -1] / 3.0
        np.testing.assert_allclose(led.liq[:, -1], expected, rtol=1e-12)
        assert led.liq[:, -1].min() >= x - 1.0 + 7.0 / 12.0

    def test_cash_conservation_identity(self):
        g = TimeGrid(1.0, 20)
        noise = gaussian_panel(g, 40, 1, seed=3)
        prices = simulate(BlackScholes(0.05, 0.3), g, noise)
        rng = np.random.default_rng(12)
        lam, x = 0.02, 5.0
        for _ in range(25):
            strat = random_strategy(g, 40, rng, flatten=False)
            led = run_ledger(strat, prices, CostSpec(lam, x))
            h0p, h0m = max(strat.h0, 0.0), max(-strat.h0, 0.0)
            rhs = (
                -(prices * strat.d_up).sum(axis=1)
                + ((1 - lam) * prices * strat.d_dn).sum(axis=1)
                - h0p * prices[:, 0]
                + h0m * (1 - lam) * prices[:, 0]
            )
            np.testing.assert_allclose(led.cash[:, -1] - x, rhs, rtol=1e-12, atol=1e-12)

    def test_cost_monotonicity(self):
        g = TimeGrid(1.0, 8)
        noise = gaussian_panel(g, 30, 1, seed=5)
        prices = simulate(BlackScholes(0.1, 0.2), g, noise)
        rng = np.random.default_rng(9)
        strat = random_strategy(g, 30, rng, h0_scale=0.0, flatten=True)
        led_lo = run_ledger(strat, prices, CostSpec(0.01, 3.0))
        led_hi = run_ledger(strat, prices, CostSpec(0.10, 3.0))
        assert np.all(led_hi.liq[:, -1] <= led_lo.liq[:, -1])

    def test_grid_mismatch(self):
        g = TimeGrid(1.0, 4)
        strat = Strategy.zero(g, 3)
        with pytest.raises(ConfigError):
            run_ledger(strat, np.ones((3, 4)), CostSpec(0.1, 1.0))


class TestTerminalLinearity:
    def test_flat_terminal_position_makes_liq_equal_cash(self):
        g = TimeGrid(1.0, 6)
        noise = gaussian_panel(g, 25, 1, seed=2)
        prices = simulate(BlackScholes(0.1, 0.2), g, noise)
        rng = np.random.default_rng(4)
        strat = random_strategy(g, 25, rng, flatten=True)
        led = run_ledger(strat, prices, CostSpec(0.05, 4.0))
        np.testing.assert_array_equal(led.position[:, -1], 0.0)
        np.testing.assert_array_equal(led.liq[:, -1], led.cash[:, -1])

    def test_midpoint_combination_bitwise_on_dyadic_fixture(self):
        # dyadic prices and jumps: every product and sum is exact, so the
        # ledger of (A+B)/2 hits the average of the ledgers bit for bit
        g = TimeGrid(1.0, 3)
        prices = np.array([[1.0, 1.25, 0.75, 1.5], [1.0, 0.5, 1.75, 2.0]])
        lam = 0.5
        a_up = np.array([[0.0, 0.25, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0]])
        b_up = np.array([[0.0, 0.75, 0.5, 0.0], [0.0, 0.0, 0.25, 0.0]])

        def flatten(h0, d_up):
            d_dn = np.zeros_like(d_up)
            pos = h0 + d_up[:, 1] + d_up[:, 2]
            d_dn[:, 3] = pos
            return d_dn

        cost = CostSpec(lam, 4.0)
        a = Strategy(g, 0.5, a_up, flatten(0.5, a_up))
        b = Strategy(g, 0.25, b_up, flatten(0.25, b_up))
        mid_up = (a_up + b_up) / 2.0
        mid = Strategy(g, (0.5 + 0.25) / 2.0, mid_up, flatten((0.5 + 0.25) / 2.0, mid_up))
        led_a = run_ledger(a, prices, cost)
        led_b = run_ledger(b, prices, cost)
        led_mid = run_ledger(mid, prices, cost)
        np.testing.assert_array_equal(led_mid.liq[:, -1], (led_a.liq[:, -1] + led_b.liq[:, -1]) / 2.0)

    def test_midpoint_combination_float_tolerance_on_simulated_prices(self):
        # averaging d_up and d_dn coordinatewise (terminal trades included)
        # keeps liq_T affine: the mid strategy still nets to zero at T and
        # cash_T is linear in the trade coordinates once h0 >= 0 on both legs
        g = TimeGrid(1.0, 8)
        noise = gaussian_panel(g, 64, 1, seed=11)
        prices = simulate(BlackScholes(0.08, 0.25), g, noise)
        rng = np.random.default_rng(21)
        cost = CostSpec(0.03, 5.0)
        a = random_strategy(g, 64, rng, flatten=True, nonneg_h0=True)
        b = random_strategy(g, 64, rng, flatten=True, nonneg_h0=True)
        mid = Strategy(g, (a.h0 + b.h0) / 2.0, (a.d_up + b.d_up) / 2.0, (a.d_dn + b.d_dn) / 2.0)
        led_a = run_ledger(a, prices, cost)
        led_b = run_ledger(b, prices, cost)
        led_mid = run_ledger(mid, prices, cost)
        assert np.abs(led_mid.position[:, -1]).max() < 1e-12
        np.testing.assert_allclose(led_mid.liq[:, -1], (led_a.liq[:, -1] + led_b.liq[:, -1]) / 2.0, rtol=1e-12)


class TestShadowLedger:
    def test_zero_position_shadow_equals_cash(self):
        g = TimeGrid(1.0, 5)
        noise = gaussian_panel(g, 20, 1, seed=1)
        prices = simulate(BlackScholes(0.1, 0.2), g, noise)
        led = run_ledger(Strategy.zero(g, 20), prices, CostSpec(0.1, 3.0))
        shadowed = shadow_ledger(led, prices * 0.95)
        np.testing.assert_array_equal(shadowed.shadow, 3.0)

    def test_flat_terminal_shadow_equals_liq(self):
        g = TimeGrid(1.0, 6)
        noise = gaussian_panel(g, 30, 1, seed=8)
        prices = simulate(BlackScholes(0.1, 0.2), g, noise)
        rng = np.random.default_rng(5)
        strat = random_strategy(g, 30, rng, flatten=True)
        led = run_ledger(strat, prices, CostSpec(0.05, 6.0))
        shadowed = shadow_ledger(led, prices * 0.97)
        np.testing.assert_array_equal(shadowed.shadow[:, -1], shadowed.liq[:, -1])

    def test_band_shadow_dominates_liq_everywhere(self):
        g = TimeGrid(1.0, 10)
        noise = gaussian_panel(g, 50, 1, seed=6)
        prices = simulate(BlackScholes(0.05, 0.25), g, noise)
        rng = np.random.default_rng(17)
        lam = 0.1
        for _ in range(10):
            strat = random_strategy(g, 50, rng, flatten=True)
            led = run_ledger(strat, prices, CostSpec(lam, 8.0))
            shadowed = shadow_ledger(led, 0.95 * prices)
            assert np.all(shadowed.liq <= shadowed.shadow)


class TestAdmissibility:
    def test_zero_strategy_admissible_for_positive_capital(self):
        g = TimeGrid(1.0, 4)
        prices = np.ones((3, 5))
        led = run_ledger(Strategy.zero(g, 3), prices, CostSpec(0.2, 1.0))
        assert check_admissible_rplus(led).admissible

    def test_overleveraged_block_is_flagged_with_coordinates(self):
        # x=1, H0=10 on S=1, lambda=0.5: cash_0 = -9 and liq_0 = -9 + 10*0.5 = -4
        g = TimeGrid(1.0, 2)
        prices = np.ones((2, 3))
        d_dn = np.zeros((2, 3))
        d_dn[:, -1] = 10.0
        strat = Strategy(g, 10.0, np.zeros((2, 3)), d_dn)
        led = run_ledger(strat, prices, CostSpec(0.5, 1.0))
        rep = check_admissible_rplus(led)
        assert not rep.admissible
        assert rep.first_violation == (0, 0)

    def test_open_terminal_position_is_flagged(self):
        g = TimeGrid(1.0, 2)
        prices = np.full((1, 3), 2.0)
        strat = Strategy(g, 0.25, np.zeros((1, 3)), np.zeros((1, 3)))
        led = run_ledger(strat, prices, CostSpec(0.01, 10.0))
        rep = check_admissible_rplus(led)
        assert not rep.admissible
        assert rep.reason == "terminal position not flattened"
