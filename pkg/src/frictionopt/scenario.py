"""Scenario generation: time grids, shared noise panels, and price-process families.

All models in a family are driven by the same noise panel (common random
numbers), so that worst-case comparisons across parameters are not polluted
by independent sampling error.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidModelError

MAX_LATTICE_SLOTS = 22


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform trading grid 0 = t_0 < t_1 < ... < t_N = horizon."""

    horizon: float
    steps: int
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ConfigError(f"horizon must be a positive finite number, got {self.horizon}")
        if not (isinstance(self.steps, int) and self.steps >= 1):
            raise ConfigError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "times", _readonly(np.linspace(0.0, self.horizon, self.steps + 1)))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


@dataclass(frozen=True)
class NoisePanel:
    """Brownian increments shared by every model in a scenario family.

    increments has shape (paths, steps, drivers); entry (m, i, j) is the
    increment of driver j over (t_i, t_{i+1}] on path m, with variance dt
    under the path weights in probs.  kind is "mc" for equally weighted
    Gaussian sampling and "lattice" for the exhaustive two-point tree.
    """

    kind: str
    seed: int
    grid: TimeGrid
    drivers: int
    increments: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("mc", "lattice"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.increments.shape != (self.paths, self.grid.steps, self.drivers):
            raise ConfigError("increment array shape does not match grid/drivers")
        if abs(float(self.probs.sum()) - 1.0) > 1e-12:
            raise ConfigError("path probabilities must sum to 1")

    @property
    def paths(self) -> int:
        return self.increments.shape[0]

    def brownian_paths(self, driver: int = 0) -> np.ndarray:
        """Cumulative driver paths of shape (paths, steps + 1), zero at t_0."""
        w = np.cumsum(self.increments[:, :, driver], axis=1)
        return np.hstack([np.zeros((self.paths, 1)), w])


def gaussian_panel(grid: TimeGrid, paths: int, drivers: int = 1, seed: int = 0) -> NoisePanel:
    """Monte Carlo noise panel with counter-based per-path substreams.

    Path m draws its (steps, drivers) block from a Philox generator keyed by
    (seed, m), in (step, driver) order, so enlarging the panel appends new
    paths without disturbing existing ones.
    """
    if paths < 1:
        raise ConfigError("paths must be at least 1")
    if drivers < 1:
        raise ConfigError("drivers must be at least 1")
    if seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    inc = np.empty((paths, grid.steps, drivers))
    root_dt = math.sqrt(grid.dt)
    for m in range(paths):
        bits = np.random.Philox(key=np.array([seed, m], dtype=np.uint64))
        inc[m] = np.random.Generator(bits).standard_normal((grid.steps, drivers))
    inc *= root_dt
    probs = np.full(paths, 1.0 / paths)
    return NoisePanel("mc", seed, grid, drivers, _readonly(inc), _readonly(probs))


def lattice_panel(grid: TimeGrid, drivers: int = 1) -> NoisePanel:
    """Exhaustive two-point panel: every sign pattern of +-sqrt(dt) increments.

    Paths are ordered so that the first increment slot is the most significant
    bit (sign +1 first); paths sharing a slot prefix therefore form contiguous
    blocks, which makes conditional expectations per tree node a reshape.
    """
    slots = grid.steps * drivers
    if slots > MAX_LATTICE_SLOTS:
        raise ConfigError(
            f"lattice needs 2^{slots} paths; {MAX_LATTICE_SLOTS} increment slots is the supported maximum"
        )
    n_paths = 1 << slots
    idx = np.arange(n_paths, dtype=np.uint64)[:, None]
    shifts = np.arange(slots - 1, -1, -1, dtype=np.uint64)[None, :]
    bits = (idx >> shifts) & 1
    signs = 1.0 - 2.0 * bits.astype(float)
    inc = signs.reshape(n_paths, grid.steps, drivers) * math.sqrt(grid.dt)
    probs = np.full(n_paths, 1.0 / n_paths)
    return NoisePanel("lattice", 0, grid, drivers, _readonly(inc), _readonly(probs))


class Model:
    """A parametrized risky-asset model consuming the first `drivers` noise columns."""

    drivers: int = 1
    s0: float = 1.0

    def simulate(self, grid: TimeGrid, noise: NoisePanel) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class BlackScholes(Model):
    """Geometric Brownian motion, stepped exactly in log space."""

    mu: float
    sigma: float
    s0: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise InvalidModelError(f"sigma must be nonnegative, got {self.sigma}")
        if self.s0 <= 0.0:
            raise InvalidModelError(f"s0 must be positive, got {self.s0}")

    def simulate(self, grid: TimeGrid, noise: NoisePanel) -> np.ndarray:
        dw = noise.increments[:, :, 0]
        log_steps = (self.mu - 0.5 * self.sigma**2) * grid.dt + self.sigma * dw
        logs = np.cumsum(log_steps, axis=1)
        out = np.empty((noise.paths, grid.steps + 1))
        out[:, 0] = self.s0
        out[:, 1:] = self.s0 * np.exp(logs)
        return out


@dataclass(frozen=True)
class PathDependentBS(Model):
    """Log-Euler scheme whose per-step drift and volatility are functions of
    the current time and the driver history up to that time.

    mu_fn and sigma_fn receive (t_i, past) where past has shape
    (paths, i) and holds the driver increments observed strictly before t_i;
    they return a scalar or a per-path array.  Outputs are clamped to the
    stated bounds so the coefficients stay admissible whatever the callables do.
    """

    mu_fn: Callable[[float, np.ndarray], np.ndarray]
    sigma_fn: Callable[[float, np.ndarray], np.ndarray]
    mu_bounds: tuple[float, float] = (-10.0, 10.0)
    sigma_bounds: tuple[float, float] = (1e-8, 10.0)
    s0: float = 1.0

    def __post_init__(self) -> None:
        if self.s0 <= 0.0:
            raise InvalidModelError(f"s0 must be positive, got {self.s0}")
        if not (self.mu_bounds[0] <= self.mu_bounds[1]):
            raise InvalidModelError("mu_bounds must be ordered")
        if not (0.0 < self.sigma_bounds[0] <= self.sigma_bounds[1]):
            raise InvalidModelError("sigma_bounds must be ordered and strictly positive")

    def simulate(self, grid: TimeGrid, noise: NoisePanel) -> np.ndarray:
        dw = noise.increments[:, :, 0]
        out = np.empty((noise.paths, grid.steps + 1))
        out[:, 0] = self.s0
        log_s = np.full(noise.paths, math.log(self.s0))
        for i in range(grid.steps):
            t_i = float(grid.times[i])
            past = dw[:, :i]
            mu_i = np.clip(np.broadcast_to(np.asarray(self.mu_fn(t_i, past), float), (noise.paths,)), *self.mu_bounds)
            sig_i = np.clip(
                np.broadcast_to(np.asarray(self.sigma_fn(t_i, past), float), (noise.paths,)), *self.sigma_bounds
            )
            log_s = log_s + (mu_i - 0.5 * sig_i**2) * grid.dt + sig_i * dw[:, i]
            out[:, i + 1] = np.exp(log_s)
        return out


@dataclass(frozen=True)
class Factor(Model):
    """Two-driver model: the asset loads on driver 1, an observable factor Y
    loads on both drivers and feeds the asset drift.

    With theta a 2x2 parameter matrix, the asset follows a log-Euler step with
    drift m(Y) + sigma * (theta[0,0] * Y + theta[1,0]) and volatility sigma;
    the factor follows an explicit Euler step
    dY = (g(Y) + rho[0] * (theta[0,0] * Y + theta[1,0])
               + rho[1] * (theta[0,1] * Y + theta[1,1])) dt
         + rho[0] dW1 + rho[1] dW2.
    """

    theta: tuple[tuple[float, float], tuple[float, float]]
    m_fn: Callable[[np.ndarray], np.ndarray]
    g_fn: Callable[[np.ndarray], np.ndarray]
    sigma: float
    rho: tuple[float, float]
    s0: float = 1.0
    y0: float = 0.0

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise InvalidModelError(f"sigma must be positive, got {self.sigma}")
        if self.s0 <= 0.0:
            raise InvalidModelError(f"s0 must be positive, got {self.s0}")

    @property
    def drivers(self) -> int:  # type: ignore[override]
        return 2

    def simulate(self, grid: TimeGrid, noise: NoisePanel) -> np.ndarray:
        return self.simulate_with_factor(grid, noise)[0]

    def simulate_with_factor(self, grid: TimeGrid, noise: NoisePanel) -> tuple[np.ndarray, np.ndarray]:
        th = self.theta
        dw1 = noise.increments[:, :, 0]
        dw2 = noise.increments[:, :, 1]
        s = np.empty((noise.paths, grid.steps + 1))
        y = np.empty((noise.paths, grid.steps + 1))
        s[:, 0] = self.s0
        y[:, 0] = self.y0
        log_s = np.full(noise.paths, math.log(self.s0))
        yi = np.full(noise.paths, self.y0)
        for i in range(grid.steps):
            load1 = th[0][0] * yi + th[1][0]
            load2 = th[0][1] * yi + th[1][1]
            drift_s = np.asarray(self.m_fn(yi), float) + self.sigma * load1
            log_s = log_s + (drift_s - 0.5 * self.sigma**2) * grid.dt + self.sigma * dw1[:, i]
            drift_y = np.asarray(self.g_fn(yi), float) + self.rho[0] * load1 + self.rho[1] * load2
            yi = yi + drift_y * grid.dt + self.rho[0] * dw1[:, i] + self.rho[1] * dw2[:, i]
            s[:, i + 1] = np.exp(log_s)
            y[:, i + 1] = yi
        return s, y


@dataclass(frozen=True)
class ArctanDrift(Model):
    """Closed-form family S_t = 1 + t + arctan(W_t) / (2 pi) on [0, horizon].

    Every path stays inside (t + 3/4, t + 5/4), so bid and ask are bounded
    away from zero without any clamping.
    """

    s0: float = 1.0

    def __post_init__(self) -> None:
        if self.s0 != 1.0:
            raise InvalidModelError("the arctan family is pinned at s0 = 1")

    def simulate(self, grid: TimeGrid, noise: NoisePanel) -> np.ndarray:
        w = noise.brownian_paths(0)
        return 1.0 + grid.times[None, :] + np.arctan(w) / (2.0 * math.pi)


@dataclass(frozen=True)
class ThetaGrid:
    """Finite family of candidate models sharing one noise panel."""

    models: tuple[Model, ...]

    def __post_init__(self) -> None:
        if len(self.models) == 0:
            raise ConfigError("theta grid must contain at least one model")

    def __len__(self) -> int:
        return len(self.models)


@dataclass(frozen=True)
class ScenarioPanel:
    """Simulated prices for every model of a family on a common panel; shape (K, paths, steps + 1)."""

    grid: TimeGrid
    thetas: ThetaGrid
    noise: NoisePanel
    prices: np.ndarray


def simulate(model: Model, grid: TimeGrid, noise: NoisePanel) -> np.ndarray:
    """Simulate one model on the shared panel, returning (paths, steps + 1) prices."""
    if noise.grid is not grid and not np.array_equal(noise.grid.times, grid.times):
        raise ConfigError("noise panel was generated on a different time grid")
    if noise.drivers < model.drivers:
        raise ConfigError(
            f"model needs {model.drivers} driver(s) but the noise panel carries {noise.drivers}"
        )
    prices = model.simulate(grid, noise)
    if not np.all(np.isfinite(prices)):
        raise InvalidModelError("simulation produced non-finite prices")
    if np.any(prices <= 0.0):
        raise InvalidModelError("simulation produced nonpositive prices")
    return _readonly(prices)


def simulate_panel(thetas: ThetaGrid, grid: TimeGrid, noise: NoisePanel, threads: int = 1) -> ScenarioPanel:
    """Simulate every candidate model on the same noise panel.

    The result is independent of the thread count: outputs are written into
    a preallocated block indexed by the model's position in the family.
    """
    k = len(thetas)
    prices = np.empty((k, noise.paths, grid.steps + 1))

    def run(idx: int) -> None:
        try:
            prices[idx] = simulate(thetas.models[idx], grid, noise)
        except Exception as exc:
            raise type(exc)(f"theta index {idx}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(k)))
    else:
        for idx in range(k):
            run(idx)
    return ScenarioPanel(grid, thetas, noise, _readonly(prices))
