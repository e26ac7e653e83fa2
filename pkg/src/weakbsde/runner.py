"""Scenario pipeline: solve, bound, check, and write deterministic artifacts.

execute() drives one scenario end to end: primal surface -> value curve ->
dual bounds -> the scenario's named checks, then writes curve.csv,
surface.csv and report.json into the output directory.  Nothing in the
default pipeline reads the clock or draws unseeded randomness, so a rerun
with the same config produces byte-identical files.
"""

from __future__ import annotations

import io
import json
import math
import os

import numpy as np

from . import __version__
from .bsde import comparison_check, compute_corridor
from .control import (NodePolicy, admissible, representation_roundtrip,
                      truncate_at_ceiling, truncate_at_floor)
from .dual import dual_bound
from .primal import (PrimalScenario, apriori_bound_check, attainment_check,
                     brute_force_policy_value, brute_force_weak_formulation,
                     continuity_modulus, convexity_check, dpp_check,
                     monotonicity_violation, primal_value_dp,
                     restriction_check, value_curve)
from .scenario import Scenario

REPORT_SCHEMA_VERSION = 1


def _jsonify(obj):
    """Make numpy scalars/arrays JSON-serializable, recursively."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        out = float(obj)
        return out if math.isfinite(out) else repr(out)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def render_report_json(report: dict) -> str:
    return json.dumps(_jsonify(report), sort_keys=True, indent=2) + "\n"


def _result(name, status, measured, threshold, **detail):
    out = {"check": name, "status": status, "measured": measured,
           "threshold": threshold}
    if detail:
        out["detail"] = detail
    return out


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _check_attainment(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    worst = 0.0
    tol = 0.0
    for m in sc.m_list:
        res = attainment_check(surface, m)
        worst = max(worst, res["gap"])
        tol = 2.0 * surface.grid_slack + sc.tolerances["attainment_extra"]
    return _result("attainment", _verdict(worst <= tol), worst, tol)


def _check_monotonicity(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    tol = sc.tolerances["monotonicity"]
    worst = monotonicity_violation(surface)
    curve = ctx["curve"]
    order = np.argsort(sc.m_list)
    sorted_vals = np.asarray(curve)[order]
    if sorted_vals.size > 1:
        worst = max(worst, float(np.max(sorted_vals[:-1] - sorted_vals[1:])))
    return _result("monotonicity", _verdict(worst <= tol), worst, tol)


def _check_convexity(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    tol = sc.tolerances["convexity"]
    res = convexity_check(surface, tol=tol)
    if res["status"] == "skipped":
        return _result("convexity", "SKIPPED", None, tol, reason=res["reason"])
    return _result("convexity", _verdict(res["ok"]), res["violation"], tol)


def _check_continuity(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    floor = sc.tolerances["continuity_exponent"]
    res = continuity_modulus(surface, sc.continuity_base)
    if res["status"] == "vacuous":
        return _result("continuity", "PASS", None, floor, note=res["note"])
    return _result("continuity", _verdict(res["exponent"] >= floor),
                   res["exponent"], floor, direction="at_or_above")


def _check_dpp(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    one = dpp_check(surface, 0, 1)
    multi = dpp_check(surface, 0, sc.lattice.steps)
    tol = sc.tolerances["dpp_multi_factor"] * surface.grid_slack
    ok = one["residual"] == 0.0 and multi["residual"] <= tol
    return _result("dpp", _verdict(ok), multi["residual"], tol,
                   one_step_residual=one["residual"])


def _check_weak_duality(ctx):
    sc, curve = ctx["scenario"], ctx["curve"]
    tol = sc.tolerances["weak_duality"]
    duals = ctx["duals"]
    if not duals:
        return _result("weak_duality", "SKIPPED", None, tol,
                       reason="dual search disabled for this scenario")
    surface = ctx["surface"]
    worst = -math.inf
    for m, res in duals.items():
        primal = float(value_curve(surface, m)[0])
        for l, cert in res["trace"]:
            worst = max(worst, l * m - cert - primal)
    return _result("weak_duality", _verdict(worst <= tol), worst, tol,
                   meaning="max over trace of bound minus primal")


def _check_value_envelope(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    tol = sc.tolerances["value_envelope"]
    res = apriori_bound_check(surface, tol=tol)
    return _result("value_envelope", _verdict(res["ok"]), res["excess"], tol)


def _check_restriction(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    tol = sc.tolerances["restriction"]
    if sc.lattice.steps < 2:
        return _result("restriction", "SKIPPED", None, tol,
                       reason="needs at least two levels")
    res = restriction_check(surface, 1, 1, tol=tol)
    return _result("restriction", _verdict(res["ok"]), res["max_diff"], tol)


def _check_comparison(ctx):
    sc = ctx["scenario"]
    tol = sc.tolerances["comparison"]
    rng = np.random.default_rng(sc.seed)
    n = sc.lattice.steps
    worst = -math.inf
    for d in (sc.driver_f, sc.driver_g):
        for _ in range(10):
            a = rng.uniform(0.0, 1.0, n + 1)
            b = rng.uniform(0.0, 1.0, n + 1)
            res = comparison_check(sc.lattice, d, np.minimum(a, b),
                                   np.maximum(a, b), scheme=sc.scheme)
            worst = max(worst, res["max_violation"])
    return _result("comparison", _verdict(worst <= tol), worst, tol)


def _check_roundtrip(ctx):
    sc = ctx["scenario"]
    tol = sc.tolerances["roundtrip"]
    rng = np.random.default_rng(sc.seed + 1)
    n = sc.lattice.steps
    worst = 0.0
    for d in (sc.driver_f, sc.driver_g):
        for _ in range(10):
            xi = rng.uniform(0.0, 1.0, n + 1)
            res = representation_roundtrip(sc.lattice, d, xi)
            worst = max(worst, res["max_error"])
    return _result("roundtrip", _verdict(worst <= tol), worst, tol)


def _check_admissibility(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    tol = sc.tolerances["admissibility"]
    rng = np.random.default_rng(sc.seed + 2)
    lat = sc.lattice
    corridor = surface.corridor
    bound = 1.0 / lat.sqrt_dt
    lo, hi = surface.root_corridor()
    mu0 = 0.5 * (lo + hi)
    worst = 0.0
    for _ in range(10):
        raw = NodePolicy(lat, [rng.uniform(-bound, bound, k + 1)
                               for k in range(lat.steps)])
        policy = truncate_at_ceiling(
            lat, sc.driver_f, corridor,
            truncate_at_floor(lat, sc.driver_f, corridor, raw))
        res = admissible(lat, sc.driver_f, corridor, mu0, policy)
        worst = max(worst, res["worst_violation"])
    return _result("admissibility", _verdict(worst <= tol), worst, tol,
                   note="random policies truncated at both corridor edges")


def _check_equivalence(ctx):
    sc, surface = ctx["scenario"], ctx["surface"]
    tol = sc.tolerances["equivalence"]
    if sc.lattice.steps > 3:
        return _result("equivalence", "SKIPPED", None, tol,
                       reason="exhaustive oracles capped at 3 levels")
    prim = ctx["primal_scenario"]
    worst = 0.0
    for m in sc.m_list:
        dp = float(value_curve(surface, m)[0])
        pol = brute_force_policy_value(prim, m)["value"]
        weak = brute_force_weak_formulation(prim, m)["value"]
        worst = max(worst, abs(dp - pol), abs(dp - weak), abs(pol - weak))
    return _result("equivalence", _verdict(worst <= tol), worst, tol,
                   meaning="max pairwise gap dp/policy-enum/leaf-search")


CHECK_HANDLERS = {
    "attainment": _check_attainment,
    "monotonicity": _check_monotonicity,
    "convexity": _check_convexity,
    "continuity": _check_continuity,
    "dpp": _check_dpp,
    "weak_duality": _check_weak_duality,
    "value_envelope": _check_value_envelope,
    "restriction": _check_restriction,
    "comparison": _check_comparison,
    "roundtrip": _check_roundtrip,
    "admissibility": _check_admissibility,
    "equivalence": _check_equivalence,
}


def _curve_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("m,primal,dual_bound,gap\n")
    for row in rows:
        bound = "" if row["dual_bound"] is None else repr(row["dual_bound"])
        gap = "" if row["gap"] is None else repr(row["gap"])
        buf.write(f"{row['m']!r},{row['primal']!r},{bound},{gap}\n")
    return buf.getvalue()


def _surface_csv(surface) -> str:
    buf = io.StringIO()
    buf.write("level,node,m,value,control\n")
    for k, (grids, vals, ctrls) in enumerate(zip(surface.grids, surface.values,
                                                 surface.controls)):
        for j in range(k + 1):
            for m, v, a in zip(grids[j], vals[j], ctrls[j]):
                buf.write(f"{k},{j},{m!r},{v!r},{a!r}\n")
    return buf.getvalue()


def execute(sc: Scenario, out_dir=None, quiet: bool = False) -> dict:
    """Run the full pipeline for one scenario; returns the report dict."""
    stage = "primal surface"
    try:
        prim = PrimalScenario(
            lattice=sc.lattice, driver_f=sc.driver_f, driver_g=sc.driver_g,
            loss=sc.loss, grid_size=sc.grid_size, n_a=sc.n_a, scheme=sc.scheme,
        )
        surface = primal_value_dp(prim)
        stage = "value curve"
        curve = np.asarray(value_curve(surface, sc.m_list), dtype=float)
        stage = "dual bound"
        duals = {}
        if sc.dual_enabled:
            for m in sc.dual_m_list:
                duals[m] = dual_bound(sc.lattice, sc.driver_f, sc.driver_g,
                                      sc.loss, m, l_max=sc.l_max,
                                      rounds=sc.dual_rounds)
    except Exception as exc:
        raise type(exc)(f"[stage: {stage}] {exc}") from exc

    ctx = {
        "scenario": sc,
        "primal_scenario": prim,
        "surface": surface,
        "curve": curve,
        "duals": duals,
    }
    checks = []
    for name in sc.checks:
        try:
            checks.append(CHECK_HANDLERS[name](ctx))
        except Exception as exc:
            raise type(exc)(f"[stage: check {name}] {exc}") from exc

    all_m = sorted(set(sc.m_list) | set(duals))
    rows = []
    for m in all_m:
        primal = float(value_curve(surface, m)[0])
        if m in duals:
            bound = duals[m]["bound"]
            rows.append({"m": m, "primal": primal, "dual_bound": bound,
                         "gap": primal - bound})
        else:
            rows.append({"m": m, "primal": primal, "dual_bound": None,
                         "gap": None})

    lo, hi = surface.root_corridor()
    failed = [c["check"] for c in checks if c["status"] == "FAIL"]
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "name": sc.name,
        "provenance": {
            "config_sha256": sc.config_sha256,
            "package_version": __version__,
        },
        "scenario": sc.config,
        "corridor_root": [lo, hi],
        "clamp_events": surface.clamp_events,
        "curve": rows,
        "dual": {
            str(m): {"l_star": res["l_star"], "bound": res["bound"],
                     "certificate": res["certificate"],
                     "n_slope_evaluations": res["n_slope_evaluations"]}
            for m, res in duals.items()
        },
        "checks": checks,
        "status": "FAIL" if failed else "PASS",
    }

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "curve.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write(_curve_csv(rows))
        with open(os.path.join(out_dir, "surface.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write(_surface_csv(surface))
        with open(os.path.join(out_dir, "report.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(render_report_json(report))

    if not quiet:
        for chk in checks:
            measured = chk["measured"]
            shown = "n/a" if measured is None else f"{measured:.3e}"
            print(f"{sc.name}: {chk['check']:<16} {chk['status']:<7} "
                  f"measured {shown} vs {chk['threshold']:.3e}")
        print(f"{sc.name}: overall {report['status']}")
    return report
