"""Robust expected-utility maximization over a finite model family.

The decision variable is a trading policy (time-zero block plus nonnegative
buy/sell increments, with the final step reserved for forced liquidation, so
terminal positions are flat by construction).  The objective is the worst
expected utility of terminal liquidation wealth across the family, evaluated
on common noise; it is maximized by projected supergradient ascent, where the
supergradient at the current point is a finite-difference gradient of the
active (worst) model's objective.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .accounting import AccountingLedger, CostSpec, check_admissible_rplus, run_ledger, shadow_ledger
from .cps import (
    PriceSystem,
    constant_cps,
    cps_certificate,
    entropy_membership,
    girsanov_cps,
    lattice_cps,
    polarity_gap,
    supermartingale_check,
)
from .errors import ConfigError, NoFeasiblePointError, OracleTooLargeError
from .fvproc import Strategy
from .scenario import (
    ArctanDrift,
    BlackScholes,
    NoisePanel,
    ScenarioPanel,
    ThetaGrid,
    TimeGrid,
    simulate_panel,
)
from .utility import UtilitySpec, vector_conjugate

ARGMIN_TIE_TOL = 1e-12


@dataclass(frozen=True)
class RobustProblem:
    """A robust utility maximization instance on a shared noise panel.

    policy_class is "deterministic-schedule" (one increment schedule applied
    on every path) or "lattice-policy" (increments may depend on the tree
    node, lattice panels only).  admissibility is "rplus" (liquidation value
    nonnegative throughout, positive-axis utilities) or "supermartingale"
    (whole-line utilities; positions are flattened structurally and shadow
    values are monitored against registered price systems).
    """

    cost: CostSpec
    thetas: ThetaGrid
    utility: UtilitySpec
    grid: TimeGrid
    noise: NoisePanel
    policy_class: str = "deterministic-schedule"
    admissibility: str = "rplus"
    long_only: bool = False
    threads: int = 1
    panel: ScenarioPanel = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.policy_class not in ("deterministic-schedule", "lattice-policy"):
            raise ConfigError(f"unknown policy class {self.policy_class!r}")
        if self.admissibility not in ("rplus", "supermartingale"):
            raise ConfigError(f"unknown admissibility rule {self.admissibility!r}")
        if self.admissibility == "rplus":
            if self.utility.domain != "positive":
                raise ConfigError("nonnegative-wealth admissibility pairs with positive-axis utilities")
            if self.cost.x0 <= 0.0:
                raise ConfigError("nonnegative-wealth admissibility needs x0 > 0")
        else:
            if self.utility.domain != "real":
                raise ConfigError("supermartingale admissibility pairs with whole-line utilities")
        if self.policy_class == "lattice-policy" and self.noise.kind != "lattice":
            raise ConfigError("lattice policies need a lattice noise panel")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        object.__setattr__(
            self, "panel", simulate_panel(self.thetas, self.grid, self.noise, threads=self.threads)
        )

    @property
    def n_thetas(self) -> int:
        return len(self.thetas)


class PolicyCodec:
    """Bijection between flat parameter vectors and admissible-by-shape strategies.

    Layout: [h0, buy increments, sell increments].  Deterministic schedules
    carry one scalar per trading step 1..N-1; lattice policies carry one
    scalar per tree node at each of those steps.  Step N is not parametrized:
    decode always appends the forced liquidation trade that closes the
    position, using the same floating-point recursion the ledger applies, so
    terminal positions are exactly zero.  long_only problems drop the sell
    block and clamp h0 to be nonnegative.
    """

    def __init__(self, problem: RobustProblem):
        self.problem = problem
        grid = problem.grid
        noise = problem.noise
        self.paths = noise.paths
        self.steps = grid.steps
        if problem.policy_class == "deterministic-schedule":
            self.nodes_per_step = [1] * max(self.steps - 1, 0)
        else:
            self.nodes_per_step = [
                min(2 ** (i * noise.drivers), self.paths) for i in range(1, self.steps)
            ]
        self.block_per_step = [self.paths // n for n in self.nodes_per_step]
        self.n_side = int(sum(self.nodes_per_step))
        self.long_only = problem.long_only
        self.n_params = 1 + self.n_side + (0 if self.long_only else self.n_side)

    def zero(self) -> np.ndarray:
        return np.zeros(self.n_params)

    def project(self, vec: np.ndarray) -> np.ndarray:
        out = np.array(vec, float)
        out[1:] = np.maximum(out[1:], 0.0)
        if self.long_only:
            out[0] = max(out[0], 0.0)
        return out

    def side_columns(self, side: str) -> list[np.ndarray]:
        """Column indices of the parameter block for each step 1..N-1."""
        if side == "up":
            start = 1
        elif side == "dn":
            if self.long_only:
                return [np.empty(0, dtype=int)] * len(self.nodes_per_step)
            start = 1 + self.n_side
        else:
            raise ConfigError("side must be 'up' or 'dn'")
        cols = []
        ofs = start
        for n in self.nodes_per_step:
            cols.append(np.arange(ofs, ofs + n))
            ofs += n
        return cols

    def _expand(self, vec: np.ndarray, cols: np.ndarray, step_idx: int) -> np.ndarray:
        if cols.size == 0:
            return np.zeros(self.paths)
        vals = vec[cols]
        if vals.size == 1:
            return np.full(self.paths, vals[0])
        return np.repeat(vals, self.block_per_step[step_idx])

    def decode(self, vec: np.ndarray) -> Strategy:
        vec = np.asarray(vec, float)
        if vec.shape != (self.n_params,):
            raise ConfigError(f"parameter vector must have shape ({self.n_params},)")
        n1 = self.steps + 1
        d_up = np.zeros((self.paths, n1))
        d_dn = np.zeros((self.paths, n1))
        up_cols = self.side_columns("up")
        dn_cols = self.side_columns("dn")
        for j, i in enumerate(range(1, self.steps)):
            d_up[:, i] = self._expand(vec, up_cols[j], j)
            d_dn[:, i] = self._expand(vec, dn_cols[j], j)
        h0 = float(vec[0])
        pos = h0 * np.ones(self.paths)
        for i in range(1, self.steps):
            pos = (pos + d_up[:, i]) - d_dn[:, i]
        d_dn[:, self.steps] = np.maximum(pos, 0.0)
        d_up[:, self.steps] = np.maximum(-pos, 0.0)
        tag = "deterministic" if self.problem.policy_class == "deterministic-schedule" else "lattice"
        return Strategy(self.problem.grid, h0, d_up, d_dn, tag)


@dataclass(frozen=True)
class ObjectiveResult:
    """Worst-case expected utility of a parameter vector; infeasible vectors
    are reported as such rather than mapped to a low value."""

    feasible: bool
    per_theta: np.ndarray
    robust_value: float
    argmin_theta: int
    reason: str = "ok"


def _theta_value(problem: RobustProblem, strat: Strategy, k: int) -> float:
    """Expected terminal utility under model k; -inf when the strategy fails
    the nonnegative-wealth admissibility check for that model."""
    ledger = run_ledger(strat, problem.panel.prices[k], problem.cost)
    if problem.admissibility == "rplus" and not check_admissible_rplus(ledger).admissible:
        return -math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        uvals = problem.utility(ledger.terminal_liq())
    return float(np.dot(problem.noise.probs, uvals))


def _argmin_with_ties(per: np.ndarray) -> int:
    lo = float(np.min(per))
    return int(np.flatnonzero(per <= lo + ARGMIN_TIE_TOL)[0])


def objective(problem: RobustProblem, vec: np.ndarray, threads: int = 1) -> ObjectiveResult:
    """Evaluate min over the family of the expected terminal utility.

    A vector is infeasible when any model's admissibility check fails; that is
    reported distinctly from a finite (or -inf) objective value.
    """
    codec = PolicyCodec(problem)
    strat = codec.decode(vec)
    k = problem.n_thetas
    per = np.empty(k)
    if threads > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for idx, val in enumerate(pool.map(lambda j: _theta_value(problem, strat, j), range(k))):
                per[idx] = val
    else:
        for j in range(k):
            per[j] = _theta_value(problem, strat, j)
    if problem.admissibility == "rplus" and np.any(np.isneginf(per)):
        bad = int(np.flatnonzero(np.isneginf(per))[0])
        return ObjectiveResult(False, per, -math.inf, bad, reason=f"inadmissible under theta {bad}")
    robust = float(np.min(per))
    return ObjectiveResult(True, per, robust, _argmin_with_ties(per))


@dataclass(frozen=True)
class OptimizerSettings:
    """Projected supergradient ascent controls.

    Steps follow step0 / sqrt(k) along the normalized supergradient; rejected
    (infeasible) steps are halved up to max_halvings times before the iterate
    stays put.  The tail fraction of iterates is averaged into a smoothed
    candidate, mirroring the convex-combination convergence device.
    """

    iters: int = 150
    step0: float = 0.25
    fd_step: float = 1e-6
    max_halvings: int = 40
    tail_fraction: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class SolveReport:
    best_params: np.ndarray
    best_value: float
    per_theta: np.ndarray
    argmin_theta: int
    averaged_params: np.ndarray
    averaged_value: float
    history: tuple
    n_params: int
    policy_class: str
    admissibility: str
    strategy: Strategy
    diagnostics: Optional[dict] = None


def _fd_supergradient(problem: RobustProblem, codec: PolicyCodec, vec: np.ndarray, k: int, h: float) -> np.ndarray:
    g = np.empty(codec.n_params)
    for j in range(codec.n_params):
        vp = codec.project(_bump(vec, j, h))
        vm = codec.project(_bump(vec, j, -h))
        den = vp[j] - vm[j]
        if den == 0.0:
            g[j] = 0.0
            continue
        fp = _theta_value(problem, codec.decode(vp), k)
        fm = _theta_value(problem, codec.decode(vm), k)
        g[j] = (fp - fm) / den
    return np.nan_to_num(g, nan=0.0, posinf=1e6, neginf=-1e6)


def _bump(vec: np.ndarray, j: int, h: float) -> np.ndarray:
    out = vec.copy()
    out[j] += h
    return out


def solve(problem: RobustProblem, settings: OptimizerSettings = OptimizerSettings()) -> SolveReport:
    """Maximize the robust objective by projected supergradient ascent.

    Deterministic for a fixed problem and settings: the start point is the
    zero strategy, gradients are finite differences, and no randomness enters
    the iteration.  Returns the best visited iterate together with the tail
    average of the trajectory (also evaluated, for diagnostics).
    """
    codec = PolicyCodec(problem)
    cur = codec.zero()
    cur_res = objective(problem, cur, threads=problem.threads)
    if not cur_res.feasible:
        raise NoFeasiblePointError("the zero strategy is already inadmissible")
    best_vec, best_res = cur, cur_res
    iterates = [cur]
    history = [(0, cur_res.robust_value, cur_res.argmin_theta, 0.0)]
    for k in range(1, settings.iters + 1):
        g = _fd_supergradient(problem, codec, cur, cur_res.argmin_theta, settings.fd_step)
        norm = float(np.linalg.norm(g))
        if norm < 1e-15:
            history.append((k, cur_res.robust_value, cur_res.argmin_theta, 0.0))
            iterates.append(cur)
            continue
        step = settings.step0 / math.sqrt(k)
        cand = codec.project(cur + step * g / norm)
        cand_res = objective(problem, cand, threads=problem.threads)
        halvings = 0
        while not cand_res.feasible and halvings < settings.max_halvings:
            step *= 0.5
            cand = codec.project(cur + step * g / norm)
            cand_res = objective(problem, cand, threads=problem.threads)
            halvings += 1
        if not cand_res.feasible:
            cand, cand_res, step = cur, cur_res, 0.0
        cur, cur_res = cand, cand_res
        iterates.append(cur)
        history.append((k, cur_res.robust_value, cur_res.argmin_theta, step))
        if cur_res.robust_value > best_res.robust_value:
            best_vec, best_res = cur, cur_res
    start = int(len(iterates) * (1.0 - settings.tail_fraction))
    start = min(max(start, 0), len(iterates) - 1)
    avg_vec = codec.project(np.mean(np.stack(iterates[start:]), axis=0))
    avg_res = objective(problem, avg_vec, threads=problem.threads)
    avg_value = avg_res.robust_value if avg_res.feasible else -math.inf
    return SolveReport(
        best_params=best_vec,
        best_value=best_res.robust_value,
        per_theta=best_res.per_theta,
        argmin_theta=best_res.argmin_theta,
        averaged_params=avg_vec,
        averaged_value=avg_value,
        history=tuple(history),
        n_params=codec.n_params,
        policy_class=problem.policy_class,
        admissibility=problem.admissibility,
        strategy=codec.decode(best_vec),
    )


@dataclass(frozen=True)
class BruteForceReport:
    """Exhaustive grid optimum on a lattice panel, with the largest objective
    gap to the optimum's axis neighbors as the resolution certificate."""

    best_params: np.ndarray
    value: float
    per_theta: np.ndarray
    neighbor_gap: float
    n_combos: int
    n_feasible: int


MAX_BRUTE_COMBOS = 1_000_000


def brute_force(
    problem: RobustProblem,
    h0_grid: Sequence[float],
    up_grid: Sequence[float],
    dn_grid: Optional[Sequence[float]] = None,
) -> BruteForceReport:
    """Exact enumeration of the robust objective over a parameter product grid.

    Requires a lattice panel (so expectations are exact sums) and at most
    three trading steps; the combination count must stay within 10^6.
    """
    if problem.noise.kind != "lattice":
        raise ConfigError("the brute-force oracle runs on lattice panels only")
    if problem.grid.steps > 3:
        raise OracleTooLargeError("the brute-force oracle supports at most 3 steps")
    codec = PolicyCodec(problem)
    if dn_grid is None:
        dn_grid = up_grid
    axes: list[np.ndarray] = [np.asarray(h0_grid, float)]
    for _ in range(codec.n_side):
        axes.append(np.asarray(up_grid, float))
    if not codec.long_only:
        for _ in range(codec.n_side):
            axes.append(np.asarray(dn_grid, float))
    if any(np.any(a[1:] < a[:-1]) for a in axes):
        raise ConfigError("grids must be sorted ascending")
    if any(np.any(a < 0.0) for a in axes[1:]):
        raise ConfigError("increment grids must be nonnegative")
    sizes = tuple(len(a) for a in axes)
    n_combos = int(np.prod(sizes))
    if n_combos > MAX_BRUTE_COMBOS:
        raise OracleTooLargeError(f"{n_combos} combinations exceed the {MAX_BRUTE_COMBOS} budget")
    digits = np.unravel_index(np.arange(n_combos), sizes)
    vecs = np.stack([axes[j][digits[j]] for j in range(len(axes))], axis=1)

    per_theta = np.empty((problem.n_thetas, n_combos))
    feasible = np.ones(n_combos, dtype=bool)
    up_cols = codec.side_columns("up")
    dn_cols = codec.side_columns("dn")
    probs = problem.noise.probs
    lam = problem.cost.lam
    for kth in range(problem.n_thetas):
        prices = problem.panel.prices[kth]
        m = prices.shape[0]
        pos = np.repeat(vecs[:, 0:1], m, axis=1)
        s0 = prices[:, 0][None, :]
        cash = problem.cost.x0 - np.maximum(pos, 0.0) * s0 + np.maximum(-pos, 0.0) * (1.0 - lam) * s0
        liq = cash + np.maximum(pos, 0.0) * (1.0 - lam) * s0 - np.maximum(-pos, 0.0) * s0
        min_liq = liq.min(axis=1)
        for i in range(1, problem.grid.steps + 1):
            if i < problem.grid.steps:
                j = i - 1
                up_i = _grid_expand(vecs, up_cols[j], codec, j, m)
                dn_i = _grid_expand(vecs, dn_cols[j], codec, j, m)
            else:
                dn_i = np.maximum(pos, 0.0)
                up_i = np.maximum(-pos, 0.0)
            s_i = prices[:, i][None, :]
            cash = cash - s_i * up_i + (1.0 - lam) * s_i * dn_i
            pos = (pos + up_i) - dn_i
            liq = cash + np.maximum(pos, 0.0) * (1.0 - lam) * s_i - np.maximum(-pos, 0.0) * s_i
            min_liq = np.minimum(min_liq, liq.min(axis=1))
        with np.errstate(divide="ignore", invalid="ignore"):
            uvals = problem.utility(liq)
        per_theta[kth] = uvals @ probs
        if problem.admissibility == "rplus":
            feasible &= min_liq >= 0.0
    robust = per_theta.min(axis=0)
    robust[~feasible] = -math.inf
    n_feasible = int(feasible.sum())
    if n_feasible == 0:
        raise NoFeasiblePointError("no grid point is admissible")
    best = int(np.argmax(robust))
    best_digits = [int(d[best]) for d in digits]
    gap = 0.0
    for j, dsize in enumerate(sizes):
        for move in (-1, 1):
            nd = list(best_digits)
            nd[j] += move
            if not (0 <= nd[j] < dsize):
                continue
            flat = int(np.ravel_multi_index(nd, sizes))
            if math.isfinite(robust[flat]):
                gap = max(gap, float(robust[best] - robust[flat]))
    return BruteForceReport(
        best_params=vecs[best].copy(),
        value=float(robust[best]),
        per_theta=per_theta[:, best].copy(),
        neighbor_gap=gap,
        n_combos=n_combos,
        n_feasible=n_feasible,
    )


def _grid_expand(vecs: np.ndarray, cols: np.ndarray, codec: PolicyCodec, step_idx: int, m: int) -> np.ndarray:
    if cols.size == 0:
        return np.zeros((vecs.shape[0], m))
    vals = vecs[:, cols]
    if vals.shape[1] == 1:
        return np.repeat(vals, m, axis=1)
    return np.repeat(vals, codec.block_per_step[step_idx], axis=1)


def default_price_systems(problem: RobustProblem, shrink: Optional[float] = None) -> list[tuple[int, PriceSystem]]:
    """One registered price system per model where a construction is known:
    the exact node construction on lattice panels, drift removal for geometric
    Brownian models on Gaussian panels, the constant shadow for the arctan
    family at high cost levels."""
    out: list[tuple[int, PriceSystem]] = []
    for k, model in enumerate(problem.thetas.models):
        prices = problem.panel.prices[k]
        if problem.noise.kind == "lattice":
            out.append((k, lattice_cps(prices, problem.noise, shrink)))
        elif isinstance(model, BlackScholes) and model.sigma > 0.0:
            out.append((k, girsanov_cps(model, problem.grid, problem.noise, shrink)))
        elif isinstance(model, ArctanDrift):
            cert = cps_certificate(model, problem.cost.lam)
            if cert is not None and cert.exists:
                out.append((k, constant_cps(prices, problem.noise, cert.shadow_level)))
    return out


@dataclass(frozen=True)
class DualityRow:
    theta_index: int
    y: float
    u_hat: float
    v_hat: float
    bound: float
    se: float
    ok: bool


@dataclass(frozen=True)
class PolarityRow:
    theta_index: int
    y: float
    lhs: float
    bound: float
    se: float
    ok: bool


@dataclass(frozen=True)
class InadaRow:
    scale: float
    x: float
    value: float
    ratio: float


@dataclass(frozen=True)
class DualityReport:
    rows: tuple[DualityRow, ...]
    polarity: tuple[PolarityRow, ...]
    inada: tuple[InadaRow, ...]
    supermartingale_ok: bool
    all_ok: bool


FLOAT_SLACK = 1e-10


def duality_report(
    problem: RobustProblem,
    report: SolveReport,
    price_systems: Sequence[tuple[int, PriceSystem]],
    ys: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0),
    inada_scales: Sequence[float] = (1.0, 4.0, 16.0),
    settings: OptimizerSettings = OptimizerSettings(),
) -> DualityReport:
    """Diagnostics relating the solved primal value to dual quantities.

    For each registered price system and dual level y, the primal value per
    model must stay below E[V(y w)] + x0 y within three standard errors (zero
    on lattice panels, where the inequality is exact); the terminal payoff
    must satisfy the polarity bound E[X y w] <= x0 y; and the value at scaled
    endowments k x0 must exhibit decreasing average utility u/(k x0), the
    finite-sample face of sublinear growth.
    """
    strat = report.strategy
    u_se = np.zeros(problem.n_thetas)
    terminal = {}
    values_proc = {}
    for k in range(problem.n_thetas):
        ledger = run_ledger(strat, problem.panel.prices[k], problem.cost)
        terminal[k] = ledger.terminal_liq()
        values_proc[k] = ledger
        with np.errstate(divide="ignore", invalid="ignore"):
            uvals = problem.utility(terminal[k])
        mean = float(np.dot(problem.noise.probs, uvals))
        var = float(np.dot(problem.noise.probs, (uvals - mean) ** 2))
        n_eff = 1.0 / float(np.sum(problem.noise.probs ** 2))
        u_se[k] = math.sqrt(var / max(n_eff - 1.0, 1.0)) if problem.noise.kind == "mc" else 0.0
    rows = []
    pol = []
    sm_ok = True
    x0 = problem.cost.x0
    for k, ps in price_systems:
        shadowed = shadow_ledger(values_proc[k], ps.shadow)
        sm = supermartingale_check(shadowed.shadow, ps, problem.noise)
        sm_ok = sm_ok and sm.passed
        for y in ys:
            vvals = vector_conjugate(problem.utility, y * ps.weights)
            v_hat = float(np.dot(problem.noise.probs, vvals))
            if problem.noise.kind == "mc":
                mean = v_hat
                var = float(np.dot(problem.noise.probs, (vvals - mean) ** 2))
                n_eff = 1.0 / float(np.sum(problem.noise.probs ** 2))
                v_se = math.sqrt(var / max(n_eff - 1.0, 1.0))
            else:
                v_se = 0.0
            se = math.hypot(u_se[k], v_se)
            u_hat = float(report.per_theta[k])
            bound = v_hat + x0 * y
            rows.append(
                DualityRow(k, float(y), u_hat, v_hat, bound, se, u_hat <= bound + 3.0 * se + FLOAT_SLACK)
            )
            pg = polarity_gap(terminal[k], ps, x0, float(y))
            pol.append(
                PolarityRow(k, float(y), pg.lhs, pg.bound, pg.se, pg.lhs <= pg.bound + 3.0 * pg.se + FLOAT_SLACK)
            )
    inada_rows = []
    prev_ratio = math.inf
    inada_ok = True
    for s in inada_scales:
        if s == 1.0:
            val = report.best_value
        else:
            scaled = replace(problem, cost=CostSpec(problem.cost.lam, x0 * s))
            val = solve(scaled, settings).best_value
        ratio = val / (x0 * s)
        inada_rows.append(InadaRow(float(s), x0 * s, val, ratio))
        if ratio > prev_ratio + 1e-9:
            inada_ok = False
        prev_ratio = ratio
    all_ok = sm_ok and inada_ok and all(r.ok for r in rows) and all(p.ok for p in pol)
    return DualityReport(tuple(rows), tuple(pol), tuple(inada_rows), sm_ok, all_ok)
