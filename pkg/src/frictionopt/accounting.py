"""Exact transaction-cost accounting under proportional costs.

Purchases pay the ask price S, sales receive the bid (1 - lambda) S, and the
time-zero block trade h0 settles at the initial prices.  All balances follow
the jump-at-t convention: a trade placed at t_i settles at the t_i price and
is reflected in the balances from t_i on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractViolation
from .fvproc import Strategy, position_recursion
from .scenario import _readonly


@dataclass(frozen=True)
class CostSpec:
    """Proportional cost level and initial cash endowment."""

    lam: float
    x0: float

    def __post_init__(self) -> None:
        if not (0.0 < self.lam < 1.0):
            raise ConfigError(f"lambda must lie strictly between 0 and 1, got {self.lam}")
        if not math.isfinite(self.x0):
            raise ConfigError("x0 must be finite")


@dataclass(frozen=True)
class AccountingLedger:
    """Cash, holdings, liquidation value and optional shadow value per path and grid time.

    liq marks holdings to the unfavourable side (long positions at the bid,
    short positions at the ask); shadow, when present, marks them to a shadow
    price inside the bid-ask band and therefore dominates liq.
    """

    cost: CostSpec
    prices: np.ndarray
    cash: np.ndarray
    position: np.ndarray
    liq: np.ndarray
    shadow_prices: Optional[np.ndarray] = None
    shadow: Optional[np.ndarray] = None

    @property
    def paths(self) -> int:
        return self.prices.shape[0]

    def terminal_liq(self) -> np.ndarray:
        return self.liq[:, -1]


def run_ledger(strategy: Strategy, prices: np.ndarray, cost: CostSpec) -> AccountingLedger:
    """Settle a strategy against simulated prices.

    cash_0 = x0 - h0^+ S_0 + h0^- (1 - lambda) S_0 and afterwards each buy
    jump pays S dH_up while each sell jump receives (1 - lambda) S dH_dn.
    The liquidation value closes the running position at the same marks.
    """
    prices = np.asarray(prices, float)
    if prices.shape != (strategy.paths, strategy.grid.steps + 1):
        raise ConfigError(
            f"prices must have shape ({strategy.paths}, {strategy.grid.steps + 1}), got {prices.shape}"
        )
    lam = cost.lam
    h0_buy = max(strategy.h0, 0.0)
    h0_sell = max(-strategy.h0, 0.0)
    cash = np.empty_like(prices)
    cash[:, 0] = cost.x0 - h0_buy * prices[:, 0] + h0_sell * (1.0 - lam) * prices[:, 0]
    for i in range(1, prices.shape[1]):
        cash[:, i] = (
            cash[:, i - 1]
            - prices[:, i] * strategy.d_up[:, i]
            + (1.0 - lam) * prices[:, i] * strategy.d_dn[:, i]
        )
    pos = position_recursion(strategy.h0, strategy.d_up, strategy.d_dn)
    # mark the long leg against the precomputed bid array so that for any
    # shadow price inside the band (including its edges) liq <= cash + pos * sp
    # holds bitwise, by monotonicity of rounding in the per-entry products
    bid = (1.0 - lam) * prices
    liq = cash + np.maximum(pos, 0.0) * bid - np.maximum(-pos, 0.0) * prices
    return AccountingLedger(
        cost=cost, prices=_readonly(prices.copy()), cash=_readonly(cash), position=_readonly(pos), liq=_readonly(liq)
    )


def shadow_ledger(ledger: AccountingLedger, shadow_prices: np.ndarray) -> AccountingLedger:
    """Attach the shadow valuation cash + position * shadow_price to a ledger.

    Whenever the shadow prices sit inside the bid-ask band, marking to them is
    at least as favourable as liquidation; that dominance is asserted because
    it is a consequence of the band, not an extra assumption.
    """
    sp = np.asarray(shadow_prices, float)
    if sp.shape != ledger.prices.shape:
        raise ConfigError("shadow prices must match the ledger's price array shape")
    shadow = ledger.cash + ledger.position * sp
    lam = ledger.cost.lam
    in_band = np.all(((1.0 - lam) * ledger.prices <= sp) & (sp <= ledger.prices))
    if in_band and np.any(ledger.liq > shadow):
        raise ContractViolation("liquidation value exceeded the shadow value inside the band")
    return AccountingLedger(
        cost=ledger.cost,
        prices=ledger.prices,
        cash=ledger.cash,
        position=ledger.position,
        liq=ledger.liq,
        shadow_prices=_readonly(sp.copy()),
        shadow=_readonly(shadow),
    )


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    reason: str
    first_violation: Optional[tuple[int, int]] = None


def check_admissible_rplus(ledger: AccountingLedger) -> AdmissibilityReport:
    """Nonnegative-wealth admissibility: liq >= 0 at every path and grid time,
    and the terminal position is exactly zero (everything liquidated)."""
    bad = ledger.liq < 0.0
    if np.any(bad):
        m, i = np.argwhere(bad)[0]
        return AdmissibilityReport(False, "liquidation value went negative", (int(m), int(i)))
    open_pos = ledger.position[:, -1] != 0.0
    if np.any(open_pos):
        m = int(np.argmax(open_pos))
        return AdmissibilityReport(False, "terminal position not flattened", (m, ledger.position.shape[1] - 1))
    return AdmissibilityReport(True, "ok")
