"""Consistent price systems: shadow prices inside the bid-ask band together
with a change of measure under which they are martingales.

A pair (shadow, Q) is consistent at cost level lambda when
(1 - lambda) S <= shadow <= S holds pathwise and shadow is a Q-martingale;
it is strict when the band holds with room to spare on both sides.  The
measure change is carried as per-path weights dQ/dP against the panel's
base probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ContractViolation, NoCpsConstructibleError
from .scenario import ArctanDrift, BlackScholes, Model, NoisePanel, TimeGrid, _readonly, simulate

Array = np.ndarray


@dataclass(frozen=True)
class PriceSystem:
    """Shadow prices (paths, steps + 1), measure weights (paths,), and the
    bandwidth margin mu_level in [0, 1) the construction aimed for.

    Weights are normalized: their mean under the panel probabilities is 1
    within 1e-12, and every weight is strictly positive (equivalent change
    of measure).
    """

    shadow: Array
    weights: Array
    probs: Array
    mu_level: float
    label: str = ""

    def __post_init__(self) -> None:
        if self.shadow.ndim != 2 or self.weights.ndim != 1 or self.probs.ndim != 1:
            raise ConfigError("shadow must be 2d, weights and probs 1d")
        if self.shadow.shape[0] != self.weights.shape[0] or self.weights.shape != self.probs.shape:
            raise ConfigError("shadow, weights and probs disagree on the number of paths")
        if np.any(self.shadow <= 0.0):
            raise ConfigError("shadow prices must be strictly positive")
        if np.any(self.weights <= 0.0):
            raise ConfigError("measure weights must be strictly positive")
        if abs(float(np.dot(self.probs, self.weights)) - 1.0) > 1e-12:
            raise ConfigError("measure weights must average to 1 under the panel probabilities")
        if not (0.0 <= self.mu_level < 1.0):
            raise ConfigError(f"mu_level must lie in [0, 1), got {self.mu_level}")

    @property
    def q_probs(self) -> Array:
        return self.probs * self.weights


@dataclass(frozen=True)
class BandReport:
    """Pathwise band check: delta is the smallest slack
    min(shadow - (1 - lambda) S, S - shadow) over all paths and times,
    floored at zero for reporting; strict requires genuinely positive slack."""

    holds: bool
    strict: bool
    delta: float
    worst: tuple[int, int]


def verify_band(prices: Array, ps: PriceSystem, lam: float) -> BandReport:
    if prices.shape != ps.shadow.shape:
        raise ConfigError("prices and shadow must share a shape")
    if not (0.0 < lam < 1.0):
        raise ConfigError("lambda must lie strictly between 0 and 1")
    lower = ps.shadow - (1.0 - lam) * prices
    upper = prices - ps.shadow
    slack = np.minimum(lower, upper)
    raw = float(slack.min())
    m, i = np.unravel_index(int(np.argmin(slack)), slack.shape)
    return BandReport(holds=raw >= 0.0, strict=raw > 0.0, delta=max(raw, 0.0), worst=(int(m), int(i)))


def girsanov_cps(
    model: BlackScholes,
    grid: TimeGrid,
    noise: NoisePanel,
    shrink: Optional[float] = None,
) -> PriceSystem:
    """Price system for a geometric Brownian model by drift removal.

    The weights are the terminal density exp(-(mu/sigma) W_T - (mu/sigma)^2 T / 2)
    evaluated on the panel (then renormalized to empirical mean one), under
    which the exactly-stepped log-Euler prices are a martingale.  shrink, when
    given, scales the shadow to c * S with c in (0, 1), buying strict band
    slack on the upper side; mu_level records 1 - c.
    """
    if not isinstance(model, BlackScholes):
        raise NoCpsConstructibleError("drift-removal construction applies to the geometric Brownian family")
    if model.sigma == 0.0:
        raise NoCpsConstructibleError("deterministic model with drift admits no martingale shadow")
    if shrink is not None and not (0.0 < shrink < 1.0):
        raise ConfigError(f"shrink must lie in (0, 1), got {shrink}")
    a = model.mu / model.sigma
    w_t = noise.increments[:, :, 0].sum(axis=1)
    raw = np.exp(-a * w_t - 0.5 * a * a * grid.horizon)
    weights = raw / float(np.dot(noise.probs, raw))
    prices = simulate(model, grid, noise)
    c = 1.0 if shrink is None else shrink
    shadow = prices if shrink is None else c * prices
    return PriceSystem(
        shadow=_readonly(np.asarray(shadow)),
        weights=_readonly(weights),
        probs=noise.probs,
        mu_level=1.0 - c,
        label=f"girsanov(mu={model.mu}, sigma={model.sigma}, shrink={shrink})",
    )


def constant_cps(prices: Array, noise: NoisePanel, level: float, label: str = "constant") -> PriceSystem:
    """Price system with a constant shadow price; any constant is a martingale
    under the base measure itself (weights identically one)."""
    if level <= 0.0:
        raise ConfigError("constant shadow level must be positive")
    shadow = np.full_like(np.asarray(prices, float), level)
    return PriceSystem(
        shadow=_readonly(shadow),
        weights=_readonly(np.ones(prices.shape[0])),
        probs=noise.probs,
        mu_level=0.0,
        label=label,
    )


def _lattice_blocks(noise: NoisePanel, step: int) -> int:
    """Paths per tree node after `step` steps; valid because lattice paths are
    ordered most-significant-slot first, so prefix classes are contiguous."""
    if noise.kind != "lattice":
        raise ConfigError("tree-node grouping needs a lattice panel")
    return noise.paths >> (step * noise.drivers)


def lattice_cps(prices: Array, noise: NoisePanel, shrink: Optional[float] = None) -> PriceSystem:
    """Exact martingale measure for adapted prices on a binomial lattice.

    At each tree node the one-step conditional law puts mass q on the upper
    half and 1 - q on the lower half with q solving the node's martingale
    equation for the (possibly shrunken) shadow c * S.  Weights multiply the
    per-step likelihood ratios q / p_half along each path, so the shadow is a
    martingale exactly, node by node.
    """
    if noise.kind != "lattice":
        raise ConfigError("exact construction needs a lattice panel")
    if noise.drivers != 1:
        raise ConfigError("exact lattice construction is single-driver")
    prices = np.asarray(prices, float)
    if prices.shape != (noise.paths, noise.grid.steps + 1):
        raise ConfigError("prices do not match the lattice panel")
    if shrink is not None and not (0.0 < shrink < 1.0):
        raise ConfigError(f"shrink must lie in (0, 1), got {shrink}")
    c = 1.0 if shrink is None else shrink
    shadow = prices if shrink is None else c * prices
    n = noise.grid.steps
    m = noise.paths
    weights = np.ones(m)
    for i in range(n):
        block = _lattice_blocks(noise, i)
        half = block // 2
        nodes = m // block
        s_now = shadow[::block, i]
        s_up = shadow[::block, i + 1]
        s_dn = shadow[half::block, i + 1]
        denom = s_up - s_dn
        if np.any(np.abs(denom) < 1e-15):
            raise NoCpsConstructibleError("degenerate node: up and down moves coincide")
        q = (s_now - s_dn) / denom
        if np.any(q <= 0.0) or np.any(q >= 1.0):
            raise NoCpsConstructibleError("martingale weights left (0, 1); price moves do not straddle the node price")
        ratio = np.empty((nodes, block))
        ratio[:, :half] = (2.0 * q)[:, None]
        ratio[:, half:] = (2.0 * (1.0 - q))[:, None]
        weights *= ratio.reshape(m)
    total = float(np.dot(noise.probs, weights))
    if abs(total - 1.0) > 1e-9:
        raise ContractViolation("lattice weights failed to normalize")
    weights = weights / total
    return PriceSystem(
        shadow=_readonly(shadow if shrink is not None else prices.copy()),
        weights=_readonly(weights),
        probs=noise.probs,
        mu_level=1.0 - c,
        label=f"lattice(shrink={shrink})",
    )


@dataclass(frozen=True)
class MartingaleReport:
    """Step-by-step martingale verification of the shadow under Q.

    In lattice mode every node's conditional expectation must match exactly
    (within tol); in mc mode each step's weighted mean increment must sit
    within three standard errors of zero."""

    passed: bool
    mode: str
    max_defect: float
    max_z: float


def verify_martingale(ps: PriceSystem, noise: NoisePanel, mode: str = "auto", tol: float = 1e-10) -> MartingaleReport:
    if mode == "auto":
        mode = "lattice" if noise.kind == "lattice" else "mc"
    if mode == "lattice":
        defect = _max_node_defect(ps.shadow, ps, noise)
        return MartingaleReport(passed=defect <= tol, mode="lattice", max_defect=defect, max_z=0.0)
    if mode != "mc":
        raise ConfigError(f"unknown martingale mode {mode!r}")
    q = ps.q_probs
    max_z = 0.0
    for i in range(ps.shadow.shape[1] - 1):
        inc = ps.weights * (ps.shadow[:, i + 1] - ps.shadow[:, i])
        mean = float(np.dot(ps.probs, inc))
        se = _weighted_se(inc, ps.probs)
        z = abs(mean) / se if se > 0.0 else (0.0 if mean == 0.0 else math.inf)
        max_z = max(max_z, z)
    return MartingaleReport(passed=max_z <= 3.0, mode="mc", max_defect=float("nan"), max_z=max_z)


def _weighted_se(values: Array, probs: Array) -> float:
    mean = float(np.dot(probs, values))
    var = float(np.dot(probs, (values - mean) ** 2))
    n_eff = 1.0 / float(np.sum(probs**2))
    if n_eff <= 1.0:
        return 0.0
    return math.sqrt(var / (n_eff - 1.0))


def _max_node_defect(values: Array, ps: PriceSystem, noise: NoisePanel) -> float:
    """Largest |E_Q[X_{i+1} | node] - X_i| over all steps and tree nodes."""
    if noise.kind != "lattice":
        raise ConfigError("node defects need a lattice panel")
    qp = ps.q_probs
    worst = 0.0
    n = noise.grid.steps
    for i in range(n):
        block = _lattice_blocks(noise, i)
        nodes = noise.paths // block
        num = (qp * values[:, i + 1]).reshape(nodes, block).sum(axis=1)
        den = qp.reshape(nodes, block).sum(axis=1)
        now = values[::block, i]
        worst = max(worst, float(np.max(np.abs(num / den - now))))
    return worst


@dataclass(frozen=True)
class SupermartingaleReport:
    """Supermartingale verification of a value process under Q: conditional
    means may only decrease.  Lattice mode checks every node exactly; mc mode
    allows each step's increase up to three standard errors."""

    passed: bool
    mode: str
    max_rise: float
    max_z: float


def supermartingale_check(
    values: Array, ps: PriceSystem, noise: NoisePanel, mode: str = "auto", tol: float = 1e-10
) -> SupermartingaleReport:
    values = np.asarray(values, float)
    if values.shape != ps.shadow.shape:
        raise ConfigError("value process must match the shadow array shape")
    if mode == "auto":
        mode = "lattice" if noise.kind == "lattice" else "mc"
    if mode == "lattice":
        qp = ps.q_probs
        worst = -math.inf
        for i in range(noise.grid.steps):
            block = _lattice_blocks(noise, i)
            nodes = noise.paths // block
            num = (qp * values[:, i + 1]).reshape(nodes, block).sum(axis=1)
            den = qp.reshape(nodes, block).sum(axis=1)
            now = values[::block, i]
            spread = values[:, i].reshape(nodes, block)
            if float(np.max(spread.max(axis=1) - spread.min(axis=1))) > 1e-9:
                raise ContractViolation("value process is not adapted to the lattice filtration")
            worst = max(worst, float(np.max(num / den - now)))
        return SupermartingaleReport(passed=worst <= tol, mode="lattice", max_rise=worst, max_z=0.0)
    if mode != "mc":
        raise ConfigError(f"unknown supermartingale mode {mode!r}")
    max_z = 0.0
    worst = -math.inf
    for i in range(values.shape[1] - 1):
        inc = ps.weights * (values[:, i + 1] - values[:, i])
        mean = float(np.dot(ps.probs, inc))
        se = _weighted_se(inc, ps.probs)
        worst = max(worst, mean)
        if mean > 0.0:
            z = mean / se if se > 0.0 else math.inf
            max_z = max(max_z, z)
    return SupermartingaleReport(passed=max_z <= 3.0, mode="mc", max_rise=worst, max_z=max_z)


@dataclass(frozen=True)
class EntropyReport:
    """Generalized-entropy membership: estimate of E[V(dQ/dP)] with standard
    error, plus a finiteness heuristic (no single path carries half the mass
    of the estimate)."""

    estimate: float
    se: float
    finite: bool
    max_share: float


def entropy_membership(ps: PriceSystem, vconj: Callable[[Array], Array]) -> EntropyReport:
    vals = np.asarray(vconj(ps.weights), float)
    if not np.all(np.isfinite(vals)):
        return EntropyReport(estimate=math.inf, se=math.inf, finite=False, max_share=1.0)
    est = float(np.dot(ps.probs, vals))
    se = _weighted_se(vals, ps.probs)
    mass = ps.probs * np.abs(vals)
    total = float(mass.sum())
    share = float(mass.max() / total) if total > 0.0 else 0.0
    return EntropyReport(estimate=est, se=se, finite=share < 0.5, max_share=share)


@dataclass(frozen=True)
class PolarityReport:
    """One-sided polarity bound E_P[X y w] <= x0 y for payoffs X reachable
    from x0 and deflators y w built from a price system."""

    lhs: float
    bound: float
    se: float
    satisfied: bool


def polarity_gap(terminal: Array, ps: PriceSystem, x0: float, y: float) -> PolarityReport:
    vals = np.asarray(terminal, float) * ps.weights * y
    lhs = float(np.dot(ps.probs, vals))
    se = _weighted_se(vals, ps.probs)
    bound = x0 * y
    return PolarityReport(lhs=lhs, bound=bound, se=se, satisfied=lhs <= bound + 3.0 * se)


@dataclass(frozen=True)
class CpsCertificate:
    """Analytic existence or nonexistence verdict for a model and cost level."""

    exists: bool
    test_value: float
    reason: str
    shadow_level: Optional[float] = None


def cps_certificate(model: Model, lam: float) -> Optional[CpsCertificate]:
    """Closed-form certificates for registered model families.

    For the arctan family: terminal prices exceed 7/4 on every path while the
    initial price is 1, so for (1 - lambda) * 7/4 > 1 any shadow would have to
    end strictly above every value it may start from, contradicting the
    martingale property; for lambda >= 2/3 the constant 3/4 sits inside the
    band at all times and is trivially a martingale.  Models without a
    registered certificate return None.
    """
    if not (0.0 < lam < 1.0):
        raise ConfigError("lambda must lie strictly between 0 and 1")
    if isinstance(model, ArctanDrift):
        floor = (1.0 - lam) * 7.0 / 4.0
        if floor > 1.0:
            return CpsCertificate(
                exists=False,
                test_value=floor,
                reason=(
                    "terminal bid exceeds every admissible initial shadow: "
                    f"(1 - lambda) * 7/4 = {floor:.6f} > 1 = S_0"
                ),
            )
        if lam >= 2.0 / 3.0:
            return CpsCertificate(
                exists=True,
                test_value=floor,
                reason="constant shadow 3/4 lies inside the band on every path",
                shadow_level=0.75,
            )
        return None
    return None
