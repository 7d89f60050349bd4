"""Batch harness: run the engine from a config file and leave a reproducible
directory of CSV/JSON outputs plus a manifest with content digests.

Numeric outputs are byte-identical across reruns with the same config and
across thread counts; the manifest additionally records wall time, which is
the one field expected to vary.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig
from .cps import (
    PriceSystem,
    constant_cps,
    cps_certificate,
    entropy_membership,
    girsanov_cps,
    lattice_cps,
    verify_band,
    verify_martingale,
)
from .errors import ConfigError, EngineError, NoCpsConstructibleError, NoFeasiblePointError
from .scenario import BlackScholes, simulate_panel
from .solver import default_price_systems, duality_report, solve
from .utility import conjugate, vector_conjugate


def _fmt(v: Any) -> str:
    """Shortest exact decimal for floats so files are stable across platforms."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _jsonify(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonify(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(_jsonify(obj), sort_keys=True, indent=2) + "\n")


def _digest(path: Path) -> dict:
    data = path.read_bytes()
    return {"name": path.name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}


def write_manifest(out_dir: Path, command: str, cfg: RunConfig, summary: dict, started: float) -> None:
    files = sorted(p for p in out_dir.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "engine": {"name": "frictionopt", "version": __version__},
        "command": command,
        "config": cfg.echo,
        "summary": summary,
        "outputs": [_digest(p) for p in files],
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    write_json(out_dir / "manifest.json", manifest)


def _prepare(cfg: RunConfig, out: Optional[str]) -> Path:
    out_dir = Path(out if out is not None else cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def cmd_simulate(cfg: RunConfig, out: Optional[str] = None) -> int:
    """Simulate the whole family on the shared panel and dump prices to CSV."""
    started = time.monotonic()
    out_dir = _prepare(cfg, out)
    noise = cfg.build_noise()
    panel = simulate_panel(cfg.thetas, cfg.grid, noise, threads=cfg.threads)

    def rows():
        for k in range(len(cfg.thetas)):
            for m in range(noise.paths):
                for i in range(cfg.grid.steps + 1):
                    yield (k, m, i, cfg.grid.times[i], panel.prices[k, m, i])

    write_csv(out_dir / "prices.csv", ["theta_index", "path", "time_index", "time", "price"], rows())
    summary = {
        "paths": noise.paths,
        "steps": cfg.grid.steps,
        "thetas": len(cfg.thetas),
        "terminal_means": [float(np.dot(noise.probs, panel.prices[k][:, -1])) for k in range(len(cfg.thetas))],
    }
    write_manifest(out_dir, "simulate", cfg, summary, started)
    return 0


def _build_price_system(cfg: RunConfig, panel, noise) -> PriceSystem:
    k = cfg.verify["theta_index"]
    model = cfg.thetas.models[k]
    prices = panel.prices[k]
    construction = cfg.verify["construction"]
    shrink = cfg.verify["shrink"]
    if construction == "auto":
        if noise.kind == "lattice":
            construction = "lattice"
        elif isinstance(model, BlackScholes):
            construction = "girsanov"
        else:
            cert = cps_certificate(model, cfg.cost.lam)
            if cert is not None and cert.exists:
                construction = "constant"
            else:
                raise NoCpsConstructibleError(f"no automatic construction for theta {k} on this panel")
    if construction == "lattice":
        return lattice_cps(prices, noise, shrink)
    if construction == "girsanov":
        return girsanov_cps(model, cfg.grid, noise, shrink)
    level = cfg.verify["level"]
    if level is None:
        level = 0.75
    return constant_cps(prices, noise, level)


def cmd_verify_cps(cfg: RunConfig, out: Optional[str] = None) -> int:
    """Construct a price system for one model and verify band, martingale
    property and entropy membership; exit 3 when verification fails or a
    nonexistence certificate fires."""
    started = time.monotonic()
    out_dir = _prepare(cfg, out)
    noise = cfg.build_noise()
    panel = simulate_panel(cfg.thetas, cfg.grid, noise, threads=cfg.threads)
    k = cfg.verify["theta_index"]
    model = cfg.thetas.models[k]
    cert = cps_certificate(model, cfg.cost.lam)
    result: dict[str, Any] = {"theta_index": k, "lambda": cfg.cost.lam, "certificate": cert}
    code = 0
    if cert is not None and not cert.exists:
        result["verdict"] = "no consistent price system exists at this cost level"
        code = 3
    else:
        try:
            ps = _build_price_system(cfg, panel, noise)
        except NoCpsConstructibleError as exc:
            result["verdict"] = f"construction failed: {exc}"
            code = 3
        else:
            band = verify_band(panel.prices[k], ps, cfg.cost.lam)
            mart = verify_martingale(ps, noise)
            entropy = entropy_membership(ps, lambda w: vector_conjugate(cfg.utility, w))
            result.update(
                {
                    "label": ps.label,
                    "mu_level": ps.mu_level,
                    "band": band,
                    "martingale": mart,
                    "entropy": entropy,
                }
            )
            ok = band.holds and mart.passed
            result["verdict"] = "verified" if ok else "verification failed"
            code = 0 if ok else 3
    write_json(out_dir / "verify.json", result)
    write_manifest(out_dir, "verify-cps", cfg, {"exit": code, "verdict": result["verdict"]}, started)
    return code


def _write_solve_outputs(out_dir: Path, cfg: RunConfig, problem, report) -> None:
    write_json(
        out_dir / "report.json",
        {
            "best_value": report.best_value,
            "averaged_value": report.averaged_value,
            "per_theta": report.per_theta,
            "argmin_theta": report.argmin_theta,
            "n_params": report.n_params,
            "policy_class": report.policy_class,
            "admissibility": report.admissibility,
            "best_params": report.best_params,
            "averaged_params": report.averaged_params,
            "h0": report.strategy.h0,
        },
    )
    write_csv(
        out_dir / "history.csv",
        ["iter", "robust_value", "argmin_theta", "step"],
        report.history,
    )
    write_csv(
        out_dir / "plot_value.csv",
        ["iter", "robust_value"],
        ((row[0], row[1]) for row in report.history),
    )
    strat = report.strategy
    write_csv(
        out_dir / "strategy.csv",
        ["path", "time_index", "d_up", "d_dn"],
        (
            (m, i, strat.d_up[m, i], strat.d_dn[m, i])
            for m in range(strat.paths)
            for i in range(cfg.grid.steps + 1)
        ),
    )
    from .accounting import run_ledger

    worst = report.argmin_theta
    ledger = run_ledger(strat, problem.panel.prices[worst], problem.cost)
    write_csv(
        out_dir / "ledger_worst.csv",
        ["path", "time_index", "cash", "position", "liq"],
        (
            (m, i, ledger.cash[m, i], ledger.position[m, i], ledger.liq[m, i])
            for m in range(strat.paths)
            for i in range(cfg.grid.steps + 1)
        ),
    )


def cmd_solve(cfg: RunConfig, out: Optional[str] = None) -> int:
    """Solve the robust problem and write report, history, strategy and the
    worst-model ledger; exit 4 when no admissible point exists."""
    started = time.monotonic()
    out_dir = _prepare(cfg, out)
    problem = cfg.build_problem()
    report = solve(problem, cfg.optimizer)
    _write_solve_outputs(out_dir, cfg, problem, report)
    summary = {
        "best_value": report.best_value,
        "argmin_theta": report.argmin_theta,
        "h0": report.strategy.h0,
    }
    write_manifest(out_dir, "solve", cfg, summary, started)
    return 0


def cmd_duality(cfg: RunConfig, out: Optional[str] = None) -> int:
    """Solve, then check duality bounds, polarity and the scaling diagnostic
    against the registered price systems; exit 3 when any check fails."""
    started = time.monotonic()
    out_dir = _prepare(cfg, out)
    problem = cfg.build_problem()
    report = solve(problem, cfg.optimizer)
    systems = default_price_systems(problem, cfg.duality["shrink"])
    if not systems:
        raise NoCpsConstructibleError("no price system construction is registered for this family")
    dual = duality_report(
        problem,
        report,
        systems,
        ys=cfg.duality["ys"],
        inada_scales=cfg.duality["inada_scales"],
        settings=cfg.optimizer,
    )
    write_json(
        out_dir / "duality.json",
        {
            "best_value": report.best_value,
            "rows": dual.rows,
            "polarity": dual.polarity,
            "inada": dual.inada,
            "supermartingale_ok": dual.supermartingale_ok,
            "all_ok": dual.all_ok,
        },
    )
    code = 0 if dual.all_ok else 3
    write_manifest(out_dir, "duality", cfg, {"exit": code, "all_ok": dual.all_ok}, started)
    return code


def cmd_selftest(out: Optional[str] = None) -> int:
    """Small built-in battery touching every module; exit 3 on any failure."""
    from .accounting import CostSpec, check_admissible_rplus, run_ledger
    from .fvproc import Strategy
    from .scenario import ArctanDrift, TimeGrid, gaussian_panel, simulate
    from .utility import log_utility

    try:
        grid = TimeGrid(1.0, 10)
        noise = gaussian_panel(grid, 64, 1, seed=1)
        prices = simulate(ArctanDrift(), grid, noise)
        assert prices.min() > 0.75 and prices.max() < 2.25
        cert = cps_certificate(ArctanDrift(), 0.7)
        assert cert is not None and cert.exists
        ps = constant_cps(prices, noise, 0.75)
        assert verify_band(prices, ps, 2.0 / 3.0).holds
        u = log_utility()
        assert abs(conjugate(u, 2.0) - (-np.log(2.0) - 1.0)) < 1e-8
        strat = Strategy.zero(grid, 64)
        ledger = run_ledger(strat, prices, CostSpec(0.1, 1.0))
        assert check_admissible_rplus(ledger).admissible
        assert float(np.max(np.abs(ledger.liq - 1.0))) == 0.0
    except AssertionError:
        print("selftest: FAIL")
        return 3
    print("selftest: PASS")
    return 0
