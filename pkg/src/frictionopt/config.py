"""Run configuration: strict JSON parsing with defaults for everything except
the model family, the cost level, and the utility.

Unknown keys anywhere in the document are rejected, so typos fail loudly
instead of silently falling back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .accounting import CostSpec
from .errors import ConfigError
from .scenario import (
    ArctanDrift,
    BlackScholes,
    Factor,
    Model,
    NoisePanel,
    PathDependentBS,
    ThetaGrid,
    TimeGrid,
    gaussian_panel,
    lattice_panel,
)
from .solver import OptimizerSettings, RobustProblem
from .utility import UtilitySpec, exp_utility, log_utility, power_utility, table_utility


def _require_keys(section: str, d: dict, allowed: set[str], required: set[str] = frozenset()) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{section} must be an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"missing required key(s) in {section}: {sorted(missing)}")


def _num(section: str, d: dict, key: str, default: Optional[float] = None) -> float:
    v = d.get(key, default)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"{section}.{key} must be a number, got {v!r}")
    return float(v)


def _int(section: str, d: dict, key: str, default: Optional[int] = None) -> int:
    v = d.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"{section}.{key} must be an integer, got {v!r}")
    return v


def _coeff_fn(section: str, d: Any):
    """Coefficient selector for the path-dependent family: a constant or an
    affine function of time, both JSON-representable."""
    _require_keys(section, d, {"kind", "value", "a", "b"}, {"kind"})
    kind = d["kind"]
    if kind == "const":
        c = _num(section, d, "value")
        return lambda t, past: c
    if kind == "linear_t":
        a = _num(section, d, "a")
        b = _num(section, d, "b")
        return lambda t, past: a * t + b
    raise ConfigError(f"{section}.kind must be 'const' or 'linear_t', got {kind!r}")


def parse_model(spec: Any, idx: int) -> Model:
    section = f"thetas[{idx}]"
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"{section} must be an object with a 'type' key")
    mtype = spec["type"]
    if mtype == "black_scholes":
        _require_keys(section, spec, {"type", "mu", "sigma", "s0"}, {"mu", "sigma"})
        return BlackScholes(mu=_num(section, spec, "mu"), sigma=_num(section, spec, "sigma"),
                            s0=_num(section, spec, "s0", 1.0))
    if mtype == "arctan_drift":
        _require_keys(section, spec, {"type"})
        return ArctanDrift()
    if mtype == "path_dependent_bs":
        _require_keys(
            section, spec, {"type", "mu", "sigma", "mu_bounds", "sigma_bounds", "s0"}, {"mu", "sigma"}
        )
        kwargs: dict[str, Any] = {
            "mu_fn": _coeff_fn(f"{section}.mu", spec["mu"]),
            "sigma_fn": _coeff_fn(f"{section}.sigma", spec["sigma"]),
            "s0": _num(section, spec, "s0", 1.0),
        }
        if "mu_bounds" in spec:
            kwargs["mu_bounds"] = tuple(float(v) for v in spec["mu_bounds"])
        if "sigma_bounds" in spec:
            kwargs["sigma_bounds"] = tuple(float(v) for v in spec["sigma_bounds"])
        return PathDependentBS(**kwargs)
    if mtype == "factor":
        _require_keys(
            section, spec, {"type", "theta", "sigma", "rho", "m", "g", "s0", "y0"}, {"theta", "sigma", "rho"}
        )
        th = spec["theta"]
        if (not isinstance(th, list) or len(th) != 2 or any(len(r) != 2 for r in th)):
            raise ConfigError(f"{section}.theta must be a 2x2 array")
        m_spec = spec.get("m", {"kind": "affine", "a": 0.0, "b": 0.0})
        g_spec = spec.get("g", {"kind": "affine", "a": 0.0, "b": 0.0})

        def affine(sec: str, d: Any):
            _require_keys(sec, d, {"kind", "a", "b"}, {"kind"})
            if d["kind"] != "affine":
                raise ConfigError(f"{sec}.kind must be 'affine'")
            a, b = _num(sec, d, "a", 0.0), _num(sec, d, "b", 0.0)
            return lambda y: a * y + b

        return Factor(
            theta=((float(th[0][0]), float(th[0][1])), (float(th[1][0]), float(th[1][1]))),
            m_fn=affine(f"{section}.m", m_spec),
            g_fn=affine(f"{section}.g", g_spec),
            sigma=_num(section, spec, "sigma"),
            rho=(float(spec["rho"][0]), float(spec["rho"][1])),
            s0=_num(section, spec, "s0", 1.0),
            y0=_num(section, spec, "y0", 0.0),
        )
    raise ConfigError(f"{section}.type {mtype!r} is not a known model type")


def parse_utility(spec: Any) -> UtilitySpec:
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError("utility must be an object with a 'name' key")
    name = spec["name"]
    if name == "log":
        _require_keys("utility", spec, {"name"})
        return log_utility()
    if name == "power":
        _require_keys("utility", spec, {"name", "p"}, {"p"})
        return power_utility(_num("utility", spec, "p"))
    if name == "exp":
        _require_keys("utility", spec, {"name", "a"})
        return exp_utility(_num("utility", spec, "a", 1.0))
    if name == "custom-table":
        _require_keys("utility", spec, {"name", "x", "u"}, {"x", "u"})
        return table_utility(spec["x"], spec["u"])
    raise ConfigError(f"utility name {name!r} is not known")


TOP_KEYS = {
    "seed", "threads", "out", "grid", "noise", "cost", "thetas", "utility",
    "policy", "admissibility", "optimizer", "verify", "duality",
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration plus the normalized document that
    produced it (echoed into manifests)."""

    seed: int
    threads: int
    out: str
    grid: TimeGrid
    noise_kind: str
    noise_paths: int
    noise_drivers: int
    cost: CostSpec
    thetas: ThetaGrid
    utility: UtilitySpec
    policy_class: str
    long_only: bool
    admissibility: str
    optimizer: OptimizerSettings
    verify: dict
    duality: dict
    echo: dict = field(repr=False)

    def build_noise(self) -> NoisePanel:
        if self.noise_kind == "lattice":
            return lattice_panel(self.grid, self.noise_drivers)
        return gaussian_panel(self.grid, self.noise_paths, self.noise_drivers, self.seed)

    def build_problem(self) -> RobustProblem:
        return RobustProblem(
            cost=self.cost,
            thetas=self.thetas,
            utility=self.utility,
            grid=self.grid,
            noise=self.build_noise(),
            policy_class=self.policy_class,
            admissibility=self.admissibility,
            long_only=self.long_only,
            threads=self.threads,
        )


def load_config(path: str | Path, overrides: Optional[dict] = None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc, overrides)


def parse_config(doc: Any, overrides: Optional[dict] = None) -> RunConfig:
    """Validate a config document and apply CLI overrides (seed, threads, out)."""
    _require_keys("config", doc, TOP_KEYS, {"thetas", "cost", "utility"})
    doc = dict(doc)
    for key, val in (overrides or {}).items():
        if val is not None:
            doc[key] = val

    seed = _int("config", doc, "seed", 0)
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    threads = _int("config", doc, "threads", 1)
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    out = doc.get("out", "run-out")
    if not isinstance(out, str) or not out:
        raise ConfigError("out must be a nonempty string")

    grid_spec = doc.get("grid", {})
    _require_keys("grid", grid_spec, {"horizon", "steps"})
    grid = TimeGrid(_num("grid", grid_spec, "horizon", 1.0), _int("grid", grid_spec, "steps", 50))

    noise_spec = doc.get("noise", {})
    _require_keys("noise", noise_spec, {"kind", "paths", "drivers"})
    noise_kind = noise_spec.get("kind", "mc")
    if noise_kind not in ("mc", "lattice"):
        raise ConfigError(f"noise.kind must be 'mc' or 'lattice', got {noise_kind!r}")
    noise_paths = _int("noise", noise_spec, "paths", 1000)
    noise_drivers = _int("noise", noise_spec, "drivers", 0)

    cost_spec = doc.get("cost")
    _require_keys("cost", cost_spec, {"lambda", "x0"}, {"lambda"})
    cost = CostSpec(lam=_num("cost", cost_spec, "lambda"), x0=_num("cost", cost_spec, "x0", 1.0))

    theta_spec = doc.get("thetas")
    if not isinstance(theta_spec, list) or not theta_spec:
        raise ConfigError("thetas must be a nonempty array of model objects")
    thetas = ThetaGrid(tuple(parse_model(s, i) for i, s in enumerate(theta_spec)))
    needed_drivers = max(m.drivers for m in thetas.models)
    if noise_drivers == 0:
        noise_drivers = needed_drivers
    elif noise_drivers < needed_drivers:
        raise ConfigError(f"noise.drivers = {noise_drivers} but the family needs {needed_drivers}")

    utility = parse_utility(doc.get("utility"))

    policy_spec = doc.get("policy", {})
    _require_keys("policy", policy_spec, {"class", "long_only"})
    policy_class = policy_spec.get("class", "deterministic-schedule")
    long_only = policy_spec.get("long_only", False)
    if not isinstance(long_only, bool):
        raise ConfigError("policy.long_only must be a boolean")

    admissibility = doc.get("admissibility", "auto")
    if admissibility == "auto":
        admissibility = "rplus" if utility.domain == "positive" else "supermartingale"
    if admissibility not in ("rplus", "supermartingale"):
        raise ConfigError(f"admissibility must be 'auto', 'rplus' or 'supermartingale', got {admissibility!r}")

    opt_spec = doc.get("optimizer", {})
    _require_keys("optimizer", opt_spec, {"iters", "step0", "fd_step", "tail_fraction", "seed"})
    optimizer = OptimizerSettings(
        iters=_int("optimizer", opt_spec, "iters", 150),
        step0=_num("optimizer", opt_spec, "step0", 0.25),
        fd_step=_num("optimizer", opt_spec, "fd_step", 1e-6),
        tail_fraction=_num("optimizer", opt_spec, "tail_fraction", 0.5),
        seed=_int("optimizer", opt_spec, "seed", 0),
    )
    if optimizer.iters < 1:
        raise ConfigError("optimizer.iters must be at least 1")
    if not (0.0 < optimizer.tail_fraction <= 1.0):
        raise ConfigError("optimizer.tail_fraction must lie in (0, 1]")

    verify = doc.get("verify", {})
    _require_keys("verify", verify, {"theta_index", "construction", "shrink", "level"})
    theta_index = _int("verify", verify, "theta_index", 0)
    if not (0 <= theta_index < len(thetas)):
        raise ConfigError("verify.theta_index out of range")
    construction = verify.get("construction", "auto")
    if construction not in ("auto", "girsanov", "lattice", "constant"):
        raise ConfigError(f"verify.construction {construction!r} is not known")
    shrink = verify.get("shrink")
    if shrink is not None and (not isinstance(shrink, (int, float)) or isinstance(shrink, bool)):
        raise ConfigError("verify.shrink must be a number or null")
    verify_resolved = {
        "theta_index": theta_index,
        "construction": construction,
        "shrink": None if shrink is None else float(shrink),
        "level": _num("verify", verify, "level", 0.75) if "level" in verify or construction == "constant" else None,
    }

    duality = doc.get("duality", {})
    _require_keys("duality", duality, {"ys", "inada_scales", "shrink"})
    ys = duality.get("ys", [0.25, 0.5, 1.0, 2.0, 4.0])
    inada_scales = duality.get("inada_scales", [1.0, 4.0, 16.0])
    if not isinstance(ys, list) or not all(isinstance(v, (int, float)) and v > 0 for v in ys):
        raise ConfigError("duality.ys must be a list of positive numbers")
    if not isinstance(inada_scales, list) or not all(isinstance(v, (int, float)) and v > 0 for v in inada_scales):
        raise ConfigError("duality.inada_scales must be a list of positive numbers")
    d_shrink = duality.get("shrink")
    if d_shrink is not None and (not isinstance(d_shrink, (int, float)) or isinstance(d_shrink, bool)):
        raise ConfigError("duality.shrink must be a number or null")
    duality_resolved = {
        "ys": [float(v) for v in ys],
        "inada_scales": [float(v) for v in inada_scales],
        "shrink": None if d_shrink is None else float(d_shrink),
    }

    echo = {
        "seed": seed,
        "threads": threads,
        "out": out,
        "grid": {"horizon": grid.horizon, "steps": grid.steps},
        "noise": {"kind": noise_kind, "paths": noise_paths, "drivers": noise_drivers},
        "cost": {"lambda": cost.lam, "x0": cost.x0},
        "thetas": theta_spec,
        "utility": {k: v for k, v in (doc.get("utility") or {}).items()},
        "policy": {"class": policy_class, "long_only": long_only},
        "admissibility": admissibility,
        "optimizer": {
            "iters": optimizer.iters,
            "step0": optimizer.step0,
            "fd_step": optimizer.fd_step,
            "tail_fraction": optimizer.tail_fraction,
            "seed": optimizer.seed,
        },
        "verify": verify_resolved,
        "duality": duality_resolved,
    }
    return RunConfig(
        seed=seed,
        threads=threads,
        out=out,
        grid=grid,
        noise_kind=noise_kind,
        noise_paths=noise_paths,
        noise_drivers=noise_drivers,
        cost=cost,
        thetas=thetas,
        utility=utility,
        policy_class=policy_class,
        long_only=long_only,
        admissibility=admissibility,
        optimizer=optimizer,
        verify=verify_resolved,
        duality=duality_resolved,
        echo=echo,
    )
