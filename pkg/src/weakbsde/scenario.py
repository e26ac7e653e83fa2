"""Scenario configs: JSON schema, validation, and the built-in catalogue.

A scenario bundles a lattice, the two drivers, a loss pair, primal grid
settings, dual search settings, and a list of named checks with their
tolerances.  Configs are plain JSON; unknown keys anywhere are rejected so
typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .drivers import Driver, LossPair, make_driver, make_loss
from .lattice import MAX_PATH_LEVELS, Lattice, build_lattice

SCHEMA_VERSION = 1
DEFAULT_SEED = 90210

KNOWN_CHECKS = (
    "attainment",
    "monotonicity",
    "convexity",
    "continuity",
    "dpp",
    "weak_duality",
    "value_envelope",
    "restriction",
    "comparison",
    "roundtrip",
    "admissibility",
    "equivalence",
)

DEFAULT_TOLERANCES = {
    "attainment_extra": 1e-9,      # added to twice the grid slack
    "monotonicity": 1e-10,
    "convexity": 2e-3,
    "continuity_exponent": 0.20,   # PASS needs a fit at or above this
    "dpp_multi_factor": 2.0,       # multi-step residual vs grid spacing
    "weak_duality": 1e-9,
    "value_envelope": 1e-9,
    "restriction": 1e-12,
    "comparison": 1e-14,
    "roundtrip": 1e-12,
    "admissibility": 1e-9,
    "equivalence": 1e-2,
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    """Validated, fully-resolved run description."""

    name: str
    lattice: Lattice
    driver_f: Driver
    driver_g: Driver
    loss: LossPair
    grid_size: int
    n_a: int
    scheme: str
    m_list: tuple
    continuity_base: float
    dual_enabled: bool
    l_max: float
    dual_rounds: int
    dual_m_list: tuple
    checks: tuple
    tolerances: dict = field(repr=False)
    seed: int
    config: dict = field(repr=False)  # normalized dict the hash is taken over

    @property
    def config_sha256(self) -> str:
        return config_sha256(self.config)


def config_sha256(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _require_keys(section: dict, allowed, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ScenarioError(f"unknown keys {sorted(unknown)} in {where}")


def _as_positive_number(value, where: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where} must be a number, got {value!r}") from None
    if not (math.isfinite(out) and out > 0):
        raise ScenarioError(f"{where} must be positive and finite, got {value!r}")
    return out


def build_scenario(config: dict) -> Scenario:
    """Validate a config dict and resolve every name against the catalogues."""
    if not isinstance(config, dict):
        raise ScenarioError("scenario config must be a JSON object")
    allowed = ("schema_version", "name", "lattice", "driver_f", "driver_g",
               "loss", "primal", "dual", "checks", "tolerances", "seed")
    _require_keys(config, allowed, "the scenario")
    version = config.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version!r}")
    name = config.get("name", "unnamed")
    if not isinstance(name, str) or not name:
        raise ScenarioError("name must be a nonempty string")

    lat_cfg = dict(config.get("lattice", {}))
    _require_keys(lat_cfg, ("horizon", "steps"), "lattice")
    horizon = _as_positive_number(lat_cfg.get("horizon", 1.0), "lattice.horizon")
    steps = lat_cfg.get("steps", 8)
    if not isinstance(steps, int) or isinstance(steps, bool):
        raise ScenarioError(f"lattice.steps must be an integer, got {steps!r}")
    if steps > MAX_PATH_LEVELS:
        raise ScenarioError(
            f"lattice.steps = {steps} exceeds the path enumeration guard "
            f"(max {MAX_PATH_LEVELS} levels for scenario runs)"
        )
    lattice = build_lattice(horizon, steps)

    def resolve_driver(key: str) -> Driver:
        block = dict(config.get(key, {"name": "zero"}))
        _require_keys(block, ("name", "params"), key)
        params = dict(block.get("params", {}))
        return make_driver(block.get("name", "zero"), **params)

    driver_f = resolve_driver("driver_f")
    driver_g = resolve_driver("driver_g")

    loss_block = dict(config.get("loss", {"name": "identity"}))
    _require_keys(loss_block, ("name", "params"), "loss")
    loss = make_loss(loss_block.get("name", "identity"),
                     **dict(loss_block.get("params", {})))

    primal_cfg = dict(config.get("primal", {}))
    _require_keys(primal_cfg, ("grid_size", "n_a", "m_list", "scheme",
                               "continuity_base"), "primal")
    grid_size = primal_cfg.get("grid_size", 201)
    n_a = primal_cfg.get("n_a", 21)
    for label, val in (("grid_size", grid_size), ("n_a", n_a)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 2:
            raise ScenarioError(f"primal.{label} must be an integer >= 2")
    scheme = primal_cfg.get("scheme", "explicit")
    if scheme not in ("explicit", "implicit"):
        raise ScenarioError(f"primal.scheme must be explicit/implicit, got {scheme!r}")
    m_list = tuple(float(m) for m in primal_cfg.get(
        "m_list", [round(0.1 * i, 10) for i in range(1, 10)]))
    if not m_list:
        raise ScenarioError("primal.m_list must be nonempty")
    if any(not (0.0 <= m <= 1.0) for m in m_list):
        raise ScenarioError("primal.m_list entries must lie in [0, 1]")
    continuity_base = float(primal_cfg.get("continuity_base", 0.3))

    dual_cfg = dict(config.get("dual", {}))
    _require_keys(dual_cfg, ("enabled", "l_max", "rounds", "m_list"), "dual")
    dual_enabled = bool(dual_cfg.get("enabled", True))
    l_max = _as_positive_number(dual_cfg.get("l_max", 4.0), "dual.l_max")
    dual_rounds = dual_cfg.get("rounds", 3)
    if not isinstance(dual_rounds, int) or isinstance(dual_rounds, bool) \
            or dual_rounds < 1:
        raise ScenarioError("dual.rounds must be a positive integer")
    dual_m_list = tuple(float(m) for m in dual_cfg.get("m_list", m_list))

    checks = tuple(config.get("checks", (
        "attainment", "monotonicity", "convexity", "continuity", "dpp",
        "weak_duality", "value_envelope",
    )))
    for chk in checks:
        if chk not in KNOWN_CHECKS:
            raise ScenarioError(
                f"unknown check {chk!r}; known: {sorted(KNOWN_CHECKS)}"
            )

    tolerances = dict(DEFAULT_TOLERANCES)
    user_tol = dict(config.get("tolerances", {}))
    _require_keys(user_tol, DEFAULT_TOLERANCES, "tolerances")
    for key, val in user_tol.items():
        tolerances[key] = _as_positive_number(val, f"tolerances.{key}")

    seed = config.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioError("seed must be a nonnegative integer")

    normalized = {
        "schema_version": SCHEMA_VERSION,
        "name": name,
        "lattice": {"horizon": horizon, "steps": steps},
        "driver_f": {"name": driver_f.name, "params": driver_f.params},
        "driver_g": {"name": driver_g.name, "params": driver_g.params},
        "loss": {"name": loss.name, "params": loss.params},
        "primal": {"grid_size": grid_size, "n_a": n_a, "m_list": list(m_list),
                   "scheme": scheme, "continuity_base": continuity_base},
        "dual": {"enabled": dual_enabled, "l_max": l_max,
                 "rounds": dual_rounds, "m_list": list(dual_m_list)},
        "checks": list(checks),
        "tolerances": tolerances,
        "seed": seed,
    }
    return Scenario(
        name=name, lattice=lattice, driver_f=driver_f, driver_g=driver_g,
        loss=loss, grid_size=grid_size, n_a=n_a, scheme=scheme, m_list=m_list,
        continuity_base=continuity_base, dual_enabled=dual_enabled,
        l_max=l_max, dual_rounds=dual_rounds, dual_m_list=dual_m_list,
        checks=checks, tolerances=tolerances, seed=seed, config=normalized,
    )


def parse_scenario(path) -> Scenario:
    """Load and validate a JSON scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}"
            ) from None
    return build_scenario(config)


# ---------------------------------------------------------------------------
# built-in catalogue
# ---------------------------------------------------------------------------

def _decimals():
    return [round(0.1 * i, 10) for i in range(1, 10)]


def catalogue() -> dict:
    """Named ready-to-run configs; values are plain config dicts."""
    standard_checks = ["attainment", "monotonicity", "convexity", "continuity",
                       "dpp", "weak_duality", "value_envelope", "restriction"]
    tiny = {
        "lattice": {"horizon": 1.0, "steps": 3},
        "primal": {"grid_size": 161, "n_a": 7, "m_list": [0.5]},
        "dual": {"enabled": False},
        "checks": ["equivalence", "monotonicity", "value_envelope"],
    }
    cfgs = {
        "jensen": {
            "name": "jensen",
            "lattice": {"horizon": 1.0, "steps": 8},
            "driver_f": {"name": "zero"},
            "driver_g": {"name": "zero"},
            "loss": {"name": "power", "params": {"p": 2.0}},
            "primal": {"grid_size": 201, "n_a": 21, "m_list": _decimals()},
            "checks": standard_checks,
        },
        "identity": {
            "name": "identity",
            "lattice": {"horizon": 1.0, "steps": 8},
            "driver_f": {"name": "zero"},
            "driver_g": {"name": "zero"},
            "loss": {"name": "identity"},
            "primal": {"grid_size": 201, "n_a": 21, "m_list": _decimals()},
            "checks": standard_checks,
        },
        "envelope": {
            "name": "envelope",
            "lattice": {"horizon": 1.0, "steps": 8},
            "driver_f": {"name": "zero"},
            "driver_g": {"name": "zero"},
            "loss": {"name": "s_shaped"},
            "primal": {"grid_size": 201, "n_a": 21, "m_list": _decimals()},
            "checks": standard_checks,
        },
        "call_spread": {
            "name": "call_spread",
            "lattice": {"horizon": 1.0, "steps": 8},
            "driver_f": {"name": "zero"},
            "driver_g": {"name": "zero"},
            "loss": {"name": "call_spread", "params": {"lo": 0.3, "hi": 0.7}},
            "primal": {"grid_size": 201, "n_a": 21, "m_list": _decimals()},
            "checks": standard_checks,
        },
        "risk_pair": {
            "name": "risk_pair",
            "lattice": {"horizon": 1.0, "steps": 8},
            "driver_f": {"name": "neg_abs_z", "params": {"kappa": 0.3}},
            "driver_g": {"name": "abs_z", "params": {"kappa": 0.2}},
            "loss": {"name": "power", "params": {"p": 2.0}},
            "primal": {"grid_size": 201, "n_a": 21, "m_list": _decimals()},
            "dual": {"enabled": True, "m_list": [0.25, 0.5, 0.75]},
            "checks": standard_checks + ["comparison", "roundtrip",
                                         "admissibility"],
        },
        "tiny_identity": {
            "name": "tiny_identity",
            "driver_f": {"name": "zero"},
            "driver_g": {"name": "zero"},
            "loss": {"name": "identity"},
            **tiny,
        },
        "tiny_power": {
            "name": "tiny_power",
            "driver_f": {"name": "zero"},
            "driver_g": {"name": "zero"},
            "loss": {"name": "power", "params": {"p": 2.0}},
            **tiny,
        },
        "tiny_risk": {
            "name": "tiny_risk",
            "driver_f": {"name": "neg_abs_z", "params": {"kappa": 0.3}},
            "driver_g": {"name": "abs_z", "params": {"kappa": 0.2}},
            "loss": {"name": "power", "params": {"p": 2.0}},
            **tiny,
        },
    }
    return {k: json.loads(json.dumps(v)) for k, v in cfgs.items()}


def catalogue_scenario(name: str) -> Scenario:
    cfgs = catalogue()
    if name not in cfgs:
        raise ScenarioError(
            f"unknown catalogue scenario {name!r}; known: {sorted(cfgs)}"
        )
    return build_scenario(cfgs[name])
