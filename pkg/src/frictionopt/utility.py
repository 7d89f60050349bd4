"""Utility functions, convex conjugates, and the Orlicz-space tooling used by
the whole-line duality diagnostics.

Utilities are concave and nondecreasing, either on the positive axis (log,
power) or on the whole line (bounded exponential-type).  The conjugate is
V(y) = sup_x (U(x) - x y), computed by ternary search on the concave map
x -> U(x) - x y; Young pairs split V at beta, the left derivative of U at
zero, into a convex function Phi vanishing on [0, beta] and its complementary
function Phi*(x) = -U(-x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    AssumptionViolationError,
    ConfigError,
    ConjugateUnboundedError,
    IndeterminateError,
)

Array = np.ndarray


@dataclass(frozen=True)
class UtilitySpec:
    """A concave nondecreasing utility with its domain convention.

    domain is "positive" for utilities defined on (0, inf) (extended by -inf
    at nonpositive wealth) or "real" for whole-line utilities.  fn must accept
    numpy arrays.  analytic_conjugate, when available, is used by callers to
    cross-check the numerical conjugate, never to replace it.
    """

    name: str
    domain: str
    fn: Callable[[Array], Array]
    params: dict = field(default_factory=dict)
    analytic_conjugate: Optional[Callable[[float], float]] = None

    def __post_init__(self) -> None:
        if self.domain not in ("positive", "real"):
            raise ConfigError(f"domain must be 'positive' or 'real', got {self.domain!r}")

    def __call__(self, x: Array) -> Array:
        return self.fn(np.asarray(x, float))


def log_utility() -> UtilitySpec:
    def fn(x: Array) -> Array:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(x > 0.0, np.log(np.where(x > 0.0, x, 1.0)), -np.inf)

    return UtilitySpec("log", "positive", fn, {}, analytic_conjugate=lambda y: -math.log(y) - 1.0)


def power_utility(p: float) -> UtilitySpec:
    """U(x) = x^p / p for p in (0, 1)."""
    if not (0.0 < p < 1.0):
        raise ConfigError(f"power exponent must lie in (0, 1), got {p}")

    def fn(x: Array) -> Array:
        with np.errstate(invalid="ignore"):
            return np.where(x > 0.0, np.power(np.where(x > 0.0, x, 1.0), p) / p, -np.inf)

    def conj(y: float) -> float:
        return (1.0 / p - 1.0) * y ** (p / (p - 1.0))

    return UtilitySpec("power", "positive", fn, {"p": p}, analytic_conjugate=conj)


def exp_utility(a: float = 1.0) -> UtilitySpec:
    """Whole-line bounded utility U(x) = 1 - exp(-a x), normalized to U(0) = 0."""
    if a <= 0.0:
        raise ConfigError(f"exp utility needs a > 0, got {a}")

    def fn(x: Array) -> Array:
        with np.errstate(over="ignore"):
            return 1.0 - np.exp(-a * x)

    def conj(y: float) -> float:
        # sup_x (1 - e^{-ax} - xy) at x = -ln(y/a)/a
        return 1.0 - y / a + (y / a) * math.log(y / a)

    return UtilitySpec("exp", "real", fn, {"a": a}, analytic_conjugate=conj)


def table_utility(xs: Sequence[float], us: Sequence[float]) -> UtilitySpec:
    """Piecewise-linear utility through given knots, extrapolated by end slopes.

    Knots must be strictly increasing in x with concave nondecreasing values.
    The domain is "real" when the knots cross zero, otherwise "positive".
    """
    x = np.asarray(xs, float)
    u = np.asarray(us, float)
    if x.ndim != 1 or x.shape != u.shape or x.size < 2:
        raise ConfigError("table utility needs two equal-length 1d knot arrays")
    if np.any(np.diff(x) <= 0.0):
        raise ConfigError("knot abscissae must be strictly increasing")
    slopes = np.diff(u) / np.diff(x)
    if np.any(slopes < 0.0):
        raise ConfigError("table utility must be nondecreasing")
    if np.any(np.diff(slopes) > 1e-12):
        raise ConfigError("table utility must be concave")
    domain = "real" if x[0] < 0.0 else "positive"

    def fn(q: Array) -> Array:
        lo = u[0] + slopes[0] * (np.minimum(q, x[0]) - x[0])
        hi = u[-1] + slopes[-1] * (np.maximum(q, x[-1]) - x[-1])
        mid = np.interp(q, x, u)
        out = np.where(q < x[0], lo, np.where(q > x[-1], hi, mid))
        if domain == "positive":
            out = np.where(q > 0.0, out, -np.inf)
        return out

    return UtilitySpec("custom-table", domain, fn, {"x": x.tolist(), "u": u.tolist()})


_BRACKET_CAP = 1e120


def _ternary_max(g: Callable[[float], float], lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Maximize a concave scalar function on [lo, hi] to abscissa width tol."""
    a, b = lo, hi
    while b - a > tol:
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        if g(m1) < g(m2):
            a = m1
        else:
            b = m2
    x = 0.5 * (a + b)
    return x, g(x)


def conjugate(u: UtilitySpec, y: float, tol: float = 1e-10) -> float:
    """V(y) = sup_x (U(x) - x y) by bracketing and ternary search.

    For positive-domain utilities the supremum runs over x > 0; for whole-line
    utilities over all reals.  A bracket that keeps growing past 1e120 means
    the conjugate is infinite at this y.
    """
    if not (y > 0.0 and math.isfinite(y)):
        raise ConjugateUnboundedError(f"conjugate requested at y = {y}; finite only for y > 0")

    def g(x: float) -> float:
        return float(u(np.asarray([x]))[0]) - x * y

    hi = 1.0
    while g(2.0 * hi) > g(hi):
        hi *= 2.0
        if hi > _BRACKET_CAP:
            raise ConjugateUnboundedError(f"conjugate diverges at y = {y}")
    hi *= 2.0
    if u.domain == "positive":
        lo = 1e-300
        probe = min(1.0, hi / 4.0)
        while g(0.5 * probe) > g(probe) and probe > 1e-280:
            probe *= 0.5
        lo = max(lo, probe * 0.25)
    else:
        lo = -1.0
        while g(2.0 * lo) > g(lo):
            lo *= 2.0
            if lo < -_BRACKET_CAP:
                raise ConjugateUnboundedError(f"conjugate diverges at y = {y}")
        lo *= 2.0
    _, best = _ternary_max(g, lo, hi, tol)
    return best


@dataclass(frozen=True)
class ConjugateTable:
    """Numerical conjugate sampled on a y grid."""

    utility_name: str
    ys: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.ys.shape != self.values.shape or self.ys.ndim != 1:
            raise ConfigError("conjugate table needs matching 1d arrays")
        if np.any(np.diff(self.ys) <= 0.0) or np.any(self.ys <= 0.0):
            raise ConfigError("conjugate grid must be positive and strictly increasing")


def build_conjugate_table(u: UtilitySpec, ys: Sequence[float], tol: float = 1e-10) -> ConjugateTable:
    grid = np.asarray(ys, float)
    vals = np.asarray([conjugate(u, float(y), tol) for y in grid])
    return ConjugateTable(u.name, grid, vals)


def vector_conjugate(u: UtilitySpec, points: Array) -> Array:
    """V on an array of points: closed form when the utility carries one,
    otherwise a dense interpolated table of the numerical conjugate."""
    pts = np.asarray(points, float)
    if np.any(pts <= 0.0):
        raise ConjugateUnboundedError("vectorized conjugate needs strictly positive points")
    if u.analytic_conjugate is not None:
        return np.asarray([u.analytic_conjugate(float(t)) for t in pts.ravel()]).reshape(pts.shape)
    lo, hi = float(pts.min()), float(pts.max())
    grid = np.geomspace(lo * 0.999, hi * 1.001, 512)
    table = np.asarray([conjugate(u, float(t)) for t in grid])
    return np.interp(np.log(pts), np.log(grid), table)


def orlicz_conjugate(phi: Callable[[Array], Array], y: float, tol: float = 1e-10) -> float:
    """Conjugate of a convex function on the positive axis: sup_{x >= 0} (x y - phi(x))."""
    if y < 0.0:
        raise ConjugateUnboundedError("Orlicz conjugate requested at negative y")

    def g(x: float) -> float:
        return x * y - float(phi(np.asarray([x]))[0])

    hi = 1.0
    while g(2.0 * hi) > g(hi):
        hi *= 2.0
        if hi > _BRACKET_CAP:
            raise ConjugateUnboundedError(f"Orlicz conjugate diverges at y = {y}")
    hi *= 2.0
    _, best = _ternary_max(g, 0.0, hi, tol)
    return max(best, g(0.0))


@dataclass(frozen=True)
class YoungPair:
    """Complementary pair built from a whole-line utility.

    beta is the left derivative of U at zero; phi vanishes on [0, beta] and
    equals V(y) - V(beta) beyond it; phi_star(x) = -U(-x) is the complementary
    convex function.  delta2_finite records whether phi passes the doubling
    diagnostic on the default grid.
    """

    beta: float
    v_at_beta: float
    phi: Callable[[Array], Array]
    phi_star: Callable[[Array], Array]
    delta2_finite: bool


def _left_derivative_at_zero(u: UtilitySpec, tol: float = 1e-9) -> float:
    """One-sided difference quotient (U(0) - U(-h)) / h with Richardson step
    refinement, halting when successive extrapolations settle."""
    u0 = float(u(np.asarray([0.0]))[0])

    def quot(h: float) -> float:
        return (u0 - float(u(np.asarray([-h]))[0])) / h

    h = 1e-2
    prev = 2.0 * quot(h / 2.0) - quot(h)
    for _ in range(20):
        h *= 0.5
        cur = 2.0 * quot(h / 2.0) - quot(h)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    return prev


def young_pair(u: UtilitySpec, conj_tol: float = 1e-10) -> YoungPair:
    """Build the complementary Young pair of a whole-line utility."""
    report = check_assumptions(u)
    if not report.passed:
        raise AssumptionViolationError(f"utility fails structural checks: {report.failures}")
    beta = _left_derivative_at_zero(u)
    if not (beta > 0.0 and math.isfinite(beta)):
        raise AssumptionViolationError(f"left derivative at zero must be positive, got {beta}")
    v_beta = conjugate(u, beta, conj_tol)

    def phi(y: Array) -> Array:
        y = np.asarray(y, float)
        out = np.zeros_like(y)
        above = y > beta
        if np.any(above):
            vals = np.asarray([conjugate(u, float(t), conj_tol) - v_beta for t in y[above]])
            out[above] = np.maximum(vals, 0.0)
        return out

    def phi_star(x: Array) -> Array:
        x = np.asarray(x, float)
        return -u(-x)

    d2 = delta2_ratio(phi)
    return YoungPair(beta=beta, v_at_beta=v_beta, phi=phi, phi_star=phi_star, delta2_finite=d2.finite)


@dataclass(frozen=True)
class Delta2Report:
    """Doubling diagnostic for a convex function on a geometric grid.

    ratio_estimate is the largest phi(2x)/phi(x) over the top decade of the
    grid; finite is True when the top-decade maximum does not exceed the
    previous decade's, i.e. the doubling ratios are not still growing."""

    ratio_estimate: float
    finite: bool
    grid_max: float


def delta2_ratio(phi: Callable[[Array], Array], grid: Optional[np.ndarray] = None) -> Delta2Report:
    if grid is None:
        grid = np.geomspace(1.0, 1e6, 121)
    grid = np.asarray(grid, float)
    if np.any(grid <= 0.0) or grid.size < 10:
        raise ConfigError("delta2 grid must be positive with at least 10 points")
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.asarray(phi(grid), float)
    pos = vals > 0.0
    if not np.any(pos):
        raise IndeterminateError("phi vanishes on the whole grid; doubling ratio undefined")
    x = grid[pos]
    with np.errstate(over="ignore", invalid="ignore"):
        ratios = np.asarray(phi(2.0 * x), float) / vals[pos]
    top = x >= x[-1] / 10.0
    prev = (x >= x[-1] / 100.0) & ~top
    top_max = float(np.max(ratios[top]))
    if not np.any(prev):
        return Delta2Report(ratio_estimate=top_max, finite=math.isfinite(top_max), grid_max=float(x[-1]))
    prev_max = float(np.max(ratios[prev]))
    finite = math.isfinite(top_max) and top_max <= prev_max * (1.0 + 1e-9)
    return Delta2Report(ratio_estimate=top_max, finite=finite, grid_max=float(x[-1]))


def luxemburg_norm(sample: Array, phi: Callable[[Array], Array], rel_tol: float = 1e-12) -> float:
    """Luxemburg gauge inf{g > 0 : mean phi(|X| / g) <= 1} of an empirical sample.

    Brackets by doubling and bisects to the requested relative width; the
    all-zero sample has norm zero by convention.
    """
    x = np.abs(np.asarray(sample, float))
    if x.size == 0:
        raise ConfigError("cannot take the norm of an empty sample")
    if not np.all(np.isfinite(x)):
        raise ConfigError("sample must be finite")
    if np.all(x == 0.0):
        return 0.0

    def mean_phi(g: float) -> float:
        with np.errstate(over="ignore"):
            return float(np.mean(np.asarray(phi(x / g), float)))

    hi = float(np.max(x))
    if hi <= 0.0:
        hi = 1.0
    for _ in range(2000):
        if mean_phi(hi) <= 1.0:
            break
        hi *= 2.0
    else:
        raise IndeterminateError("could not bracket the Luxemburg norm from above")
    lo = hi
    for _ in range(2000):
        cand = lo / 2.0
        if mean_phi(cand) <= 1.0:
            lo = cand
        else:
            break
    else:
        return 0.0
    # invariant: mean_phi(lo) <= 1 < mean_phi(lo / 2)
    a, b = lo / 2.0, lo
    while (b - a) > rel_tol * b:
        mid = 0.5 * (a + b)
        if mean_phi(mid) <= 1.0:
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


@dataclass(frozen=True)
class AssumptionReport:
    """Structural checks for whole-line utilities: bounded above, U(0) = 0,
    nondecreasing and concave on probes, U(x)/x increasing toward -infinity,
    and the doubling condition for the induced phi."""

    bounded_above: bool
    zero_at_zero: bool
    nondecreasing: bool
    concave: bool
    left_tail_superlinear: bool
    failures: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return len(self.failures) == 0


def check_assumptions(u: UtilitySpec) -> AssumptionReport:
    if u.domain != "real":
        raise ConfigError("assumption checks apply to whole-line utilities")
    failures = []
    probes = np.asarray([-1e3, -1e2, -10.0, -1.0, -0.1, 0.0, 0.1, 1.0, 10.0, 1e2, 1e3])
    vals = np.asarray(u(probes), float)
    zero_at_zero = abs(float(u(np.asarray([0.0]))[0])) == 0.0
    if not zero_at_zero:
        failures.append("U(0) != 0")
    nondecreasing = bool(np.all(np.diff(vals) >= -1e-12))
    if not nondecreasing:
        failures.append("not nondecreasing")
    slopes = np.diff(vals) / np.diff(probes)
    concave = bool(np.all(np.diff(slopes) <= 1e-9))
    if not concave:
        failures.append("not concave on probes")
    tail = float(u(np.asarray([1e8]))[0]) - float(u(np.asarray([1e6]))[0])
    bounded_above = tail <= 1e-6 * 1e8
    if not bounded_above:
        failures.append("appears unbounded above")
    xs = np.asarray([-10.0, -1e2, -1e3])
    ratios = np.asarray(u(xs), float) / xs
    left_tail_superlinear = bool(np.all(np.diff(ratios) > 0.0))
    if not left_tail_superlinear:
        failures.append("U(x)/x not increasing along x -> -inf probes")
    return AssumptionReport(
        bounded_above=bounded_above,
        zero_at_zero=zero_at_zero,
        nondecreasing=nondecreasing,
        concave=concave,
        left_tail_superlinear=left_tail_superlinear,
        failures=tuple(failures),
    )
