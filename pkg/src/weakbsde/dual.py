"""Dual side of the threshold problem: adjoint processes and lower bounds.

A dual candidate is a slope l > 0 together with four deterministic step
profiles (u, v) and (p, q) living in the conjugate domains of the cost
driver g and the constraint driver f.  Two multiplicative adjoints follow:

    L_{k+1} = L_k (1 + u_k dt + v_k dW),   L_0 = 1
    A_{k+1} = A_k (1 + p_k dt + q_k dW),   A_0 = l

and the candidate's certificate value is the exact average over all 2^N
paths of

    sum_k L_k gtil(u_k, v_k) dt  -  sum_k A_k ftil(p_k, q_k) dt
         + L_N poltil(A_N / L_N)

where gtil/ftil are the convex/concave conjugates and poltil the polar of
the loss map.  For every m in the root corridor and every candidate,
l m - certificate <= primal value: the certificate search can only ever
tighten a valid lower bound, never break it.  dual_value minimizes the
certificate over the profiles by coordinate descent (an upper bound on
the true infimum, which keeps the inequality safe), and dual_bound
maximizes l m - dual_value(l) over l by golden-section search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bsde import solve_on_path_tree
from .drivers import (ConjugateDomainError, Driver, LossPair,
                      concave_conjugate, convex_conjugate)
from .lattice import MAX_PATH_LEVELS, Lattice, LatticeError, sign_matrix
from .primal import ValueSurface, attainment_check

POSITIVITY_MARGIN = 1e-6
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DualFeasibilityError(ValueError):
    pass


@dataclass(frozen=True)
class DualControls:
    """Slope plus per-step conjugate arguments (deterministic in time)."""

    slope: float
    value_drift: np.ndarray       # u_k, argument of the g-conjugate
    value_noise: np.ndarray       # v_k
    threshold_drift: np.ndarray   # p_k, argument of the f-conjugate
    threshold_noise: np.ndarray   # q_k

    def __post_init__(self):
        if not (np.isfinite(self.slope) and self.slope > 0.0):
            raise DualFeasibilityError(f"slope must be positive, got {self.slope!r}")
        arrays = {}
        n = None
        for name in ("value_drift", "value_noise",
                     "threshold_drift", "threshold_noise"):
            arr = np.array(getattr(self, name), dtype=float)  # private copy
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise DualFeasibilityError(f"{name} must be a finite 1-d profile")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise DualFeasibilityError("all four profiles must share a length")
            arr.flags.writeable = False
            arrays[name] = arr
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def steps(self) -> int:
        return self.value_drift.size

    @classmethod
    def zeros(cls, lattice: Lattice, slope: float) -> "DualControls":
        z = np.zeros(lattice.steps)
        return cls(slope, z, z.copy(), z.copy(), z.copy())

    def factors_ok(self, lattice: Lattice, margin: float = POSITIVITY_MARGIN) -> bool:
        dt, sq = lattice.dt, lattice.sqrt_dt
        for drift, noise in ((self.value_drift, self.value_noise),
                             (self.threshold_drift, self.threshold_noise)):
            lo = 1.0 + drift * dt - np.abs(noise) * sq
            if np.min(lo) < margin:
                return False
        return True


def _require_factors(lattice: Lattice, dc: DualControls) -> None:
    if dc.steps != lattice.steps:
        raise DualFeasibilityError(
            f"profiles have {dc.steps} steps, lattice has {lattice.steps}"
        )
    if not dc.factors_ok(lattice):
        raise DualFeasibilityError(
            f"an adjoint factor drops below the {POSITIVITY_MARGIN} margin"
        )


def adjoint_forward(lattice: Lattice, dc: DualControls, path) -> tuple:
    """(A, L) along one sign path; A is homogeneous of degree 1 in the slope."""
    _require_factors(lattice, dc)
    signs = np.asarray(path, dtype=float)
    if signs.size != lattice.steps or not np.all(np.abs(signs) == 1.0):
        raise LatticeError("path must list +1/-1 signs, one per step")
    dt, sq = lattice.dt, lattice.sqrt_dt
    a_fac = 1.0 + dc.threshold_drift * dt + dc.threshold_noise * signs * sq
    l_fac = 1.0 + dc.value_drift * dt + dc.value_noise * signs * sq
    a = dc.slope * np.concatenate([[1.0], np.cumprod(a_fac)])
    l = np.concatenate([[1.0], np.cumprod(l_fac)])
    return a, l


def _adjoint_panels(lattice: Lattice, dc: DualControls) -> tuple:
    """A and L at every level along every enumerated path: (2^N, N+1)."""
    n = lattice.steps
    signs = sign_matrix(n).astype(float)
    dt, sq = lattice.dt, lattice.sqrt_dt
    a_fac = 1.0 + dc.threshold_drift[None, :] * dt \
        + dc.threshold_noise[None, :] * signs * sq
    l_fac = 1.0 + dc.value_drift[None, :] * dt \
        + dc.value_noise[None, :] * signs * sq
    a = np.ones((signs.shape[0], n + 1))
    l = np.ones((signs.shape[0], n + 1))
    a[:, 1:] = np.cumprod(a_fac, axis=1)
    l[:, 1:] = np.cumprod(l_fac, axis=1)
    return dc.slope * a, l


def _conjugate_profiles(lattice: Lattice, dc: DualControls, d_f: Driver,
                        d_g: Driver) -> tuple:
    """Per-step conjugate values (ftil_k, gtil_k); raises if any is infinite."""
    gt = np.empty(lattice.steps)
    ft = np.empty(lattice.steps)
    for k in range(lattice.steps):
        t = lattice.time_at(k)
        gt[k] = float(convex_conjugate(d_g, dc.value_drift[k],
                                       dc.value_noise[k], t=t))
        ft[k] = float(concave_conjugate(d_f, dc.threshold_drift[k],
                                        dc.threshold_noise[k], t=t))
    if not np.all(np.isfinite(gt)):
        raise ConjugateDomainError("value profile leaves the g-conjugate domain")
    if not np.all(np.isfinite(ft)):
        raise ConjugateDomainError(
            "threshold profile leaves the f-conjugate domain")
    return ft, gt


def dual_objective(lattice: Lattice, dc: DualControls, d_f: Driver,
                   d_g: Driver, lp: LossPair) -> float:
    """Exact certificate value by full path enumeration."""
    if lattice.steps > MAX_PATH_LEVELS:
        raise LatticeError(
            f"path enumeration capped at {MAX_PATH_LEVELS} levels"
        )
    _require_factors(lattice, dc)
    ft, gt = _conjugate_profiles(lattice, dc, d_f, d_g)
    a, l = _adjoint_panels(lattice, dc)
    dt = lattice.dt
    running = (l[:, :-1] * gt[None, :] - a[:, :-1] * ft[None, :]).sum(axis=1) * dt
    terminal = l[:, -1] * np.asarray(lp.polar(a[:, -1] / l[:, -1]), dtype=float)
    return float(np.mean(running + terminal))


def _objective_or_inf(lattice, dc_args, d_f, d_g, lp) -> float:
    """Same as dual_objective but returns +inf on any infeasibility."""
    try:
        dc = DualControls(*dc_args)
        return dual_objective(lattice, dc, d_f, d_g, lp)
    except (DualFeasibilityError, ConjugateDomainError):
        return math.inf


def _feasible_start(lattice: Lattice, d: Driver, kind: str) -> tuple:
    """A point in the conjugate domain (drift, noise), preferring (0, 0)."""
    conj = convex_conjugate if kind == "convex" else concave_conjugate
    box = d.conjugate_box()
    if np.isfinite(float(conj(d, 0.0, 0.0, t=lattice.time_at(0)))):
        return 0.0, 0.0
    for drift in np.linspace(-box.half_width_y, box.half_width_y, 9):
        for noise in np.linspace(-box.half_width_z, box.half_width_z, 9):
            if np.isfinite(float(conj(d, drift, noise, t=lattice.time_at(0)))):
                return float(drift), float(noise)
    raise ConjugateDomainError(
        f"no finite conjugate point found for driver {d.name!r}"
    )


def dual_value(lattice: Lattice, l: float, d_f: Driver, d_g: Driver,
               lp: LossPair, rounds: int = 3, grid_points: int = 9,
               budget: int = 200_000) -> dict:
    """Coordinate descent on the four step profiles at fixed slope.

    Starts from the (0,0,0,0) profiles (or the nearest feasible point when
    a conjugate domain misses the origin), scans each coordinate on a
    shrinking window clipped to the conjugate box, and keeps a move only
    when it strictly lowers the certificate.  The result is an upper bound
    on the true infimum, so lower bounds built from it remain valid.
    """
    n = lattice.steps
    u0, v0 = _feasible_start(lattice, d_g, "convex")
    p0, q0 = _feasible_start(lattice, d_f, "concave")
    profiles = [np.full(n, u0), np.full(n, v0), np.full(n, p0), np.full(n, q0)]
    g_box = d_g.conjugate_box()
    f_box = d_f.conjugate_box()
    widths = [g_box.half_width_y, g_box.half_width_z,
              f_box.half_width_y, f_box.half_width_z]
    axes = [(i, k) for i, w in enumerate(widths) if w > 0.0 for k in range(n)]

    def pack():
        return (l, profiles[0].copy(), profiles[1].copy(),
                profiles[2].copy(), profiles[3].copy())

    best = _objective_or_inf(lattice, pack(), d_f, d_g, lp)
    if not math.isfinite(best):
        raise ConjugateDomainError("certificate infinite at the starting profiles")
    evaluations = 1
    sweep_cost = grid_points * max(1, len(axes))
    if sweep_cost > budget:
        raise DualFeasibilityError(
            f"one sweep needs {sweep_cost} evaluations, budget is {budget}"
        )
    for rnd in range(rounds):
        for i, k in axes:
            width = widths[i] / 4.0**rnd
            center = profiles[i][k]
            cand = np.clip(np.linspace(center - width, center + width,
                                       grid_points), -widths[i], widths[i])
            for val in np.unique(cand):
                if val == center:
                    continue
                if evaluations >= budget:
                    break
                profiles[i][k] = val
                trial = _objective_or_inf(lattice, pack(), d_f, d_g, lp)
                evaluations += 1
                if trial < best:
                    best = trial
                    center = val
                profiles[i][k] = center
    return {
        "value": best,
        "controls": DualControls(*pack()),
        "n_evaluations": evaluations,
    }


def dual_bound(lattice: Lattice, d_f: Driver, d_g: Driver, lp: LossPair,
               m: float, l_max: float = 4.0, tol: float = 1e-6,
               rounds: int = 3, budget: int = 200_000) -> dict:
    """Golden-section maximization of l*m - certificate(l) over l in (0, l_max].

    The trace records every (l, certificate) pair the search evaluated;
    each one is a standalone valid lower bound, so the reported bound is
    the best value ever seen, not just the final bracket midpoint.
    """
    if not (0.0 < l_max and np.isfinite(l_max)):
        raise DualFeasibilityError("l_max must be positive and finite")
    trace = []

    def height(l: float) -> float:
        res = dual_value(lattice, l, d_f, d_g, lp, rounds=rounds, budget=budget)
        trace.append((float(l), float(res["value"])))
        return l * m - res["value"]

    lo, hi = 1e-8, float(l_max)
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = height(x1), height(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = height(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = height(x1)
    best_idx = max(range(len(trace)), key=lambda i: trace[i][0] * m - trace[i][1])
    l_star, cert = trace[best_idx]
    return {
        "l_star": l_star,
        "bound": l_star * m - cert,
        "certificate": cert,
        "trace": trace,
        "n_slope_evaluations": len(trace),
    }


def _prefix_adjoints(lattice: Lattice, dc: DualControls) -> tuple:
    """A and L on the prefix tree: lists of (2^k,) arrays, k = 0..N."""
    _require_factors(lattice, dc)
    dt, sq = lattice.dt, lattice.sqrt_dt
    a_levels = [np.array([dc.slope])]
    l_levels = [np.array([1.0])]
    for k in range(lattice.steps):
        sign = np.empty(2 * a_levels[k].size)
        sign[0::2] = 1.0
        sign[1::2] = -1.0
        a_par = np.repeat(a_levels[k], 2)
        l_par = np.repeat(l_levels[k], 2)
        a_levels.append(a_par * (1.0 + dc.threshold_drift[k] * dt
                                 + dc.threshold_noise[k] * sign * sq))
        l_levels.append(l_par * (1.0 + dc.value_drift[k] * dt
                                 + dc.value_noise[k] * sign * sq))
    return a_levels, l_levels


def _polar_gradient(lp: LossPair, x: np.ndarray, step: float = 1e-5):
    if lp.polar_grad is not None:
        return np.asarray(lp.polar_grad(x), dtype=float)
    return None


def first_order_residuals(surface: ValueSurface, dc: DualControls,
                          m0: float) -> dict:
    """Max defect of the four optimality equations along the greedy optimum.

    Residuals: (1) Fenchel equality of the constraint driver on the
    threshold pair, (2) terminal threshold equals the polar gradient of the
    adjoint ratio, (3) Fenchel equality of the cost driver on the value
    pair, (4) exact polar equality at the terminal.  The second residual is
    reported as None when the polar has no usable gradient.
    """
    sc = surface.scenario
    lat = sc.lattice
    attained = attainment_check(surface, m0)
    states = attained["states"]          # prefix arrays, level 0..N
    controls = attained["controls"]      # prefix arrays, level 0..N-1
    leaf_cost = np.asarray(sc.loss.phi(states[-1]), dtype=float)
    y_levels, z_levels = solve_on_path_tree(lat, sc.driver_g,
                                            leaf_cost[None, :],
                                            scheme=sc.scheme, with_slopes=True)
    a_levels, l_levels = _prefix_adjoints(lat, dc)

    res_f = 0.0
    res_g = 0.0
    for k in range(lat.steps):
        t = lat.time_at(k)
        m_k = states[k]
        a_k = controls[k]
        ft = float(concave_conjugate(sc.driver_f, dc.threshold_drift[k],
                                     dc.threshold_noise[k], t=t))
        gt = float(convex_conjugate(sc.driver_g, dc.value_drift[k],
                                    dc.value_noise[k], t=t))
        lhs_f = np.asarray(sc.driver_f.fn(t, m_k, a_k), dtype=float)
        rhs_f = dc.threshold_drift[k] * m_k + dc.threshold_noise[k] * a_k - ft
        res_f = max(res_f, float(np.max(np.abs(lhs_f - rhs_f))))
        y_k = np.asarray(y_levels[k][0], dtype=float)
        z_k = np.asarray(z_levels[k][0], dtype=float)
        lhs_g = np.asarray(sc.driver_g.fn(t, y_k, z_k), dtype=float)
        rhs_g = dc.value_drift[k] * y_k + dc.value_noise[k] * z_k - gt
        res_g = max(res_g, float(np.max(np.abs(lhs_g - rhs_g))))

    ratio = a_levels[-1] / l_levels[-1]
    m_term = states[-1]
    grad = _polar_gradient(sc.loss, ratio)
    res_terminal = None if grad is None \
        else float(np.max(np.abs(m_term - grad)))
    polar_vals = np.asarray(sc.loss.polar(ratio), dtype=float)
    phi_vals = np.asarray(sc.loss.phi(m_term), dtype=float)
    res_polar = float(np.max(np.abs(phi_vals + polar_vals - m_term * ratio)))
    out = {
        "constraint_fenchel": res_f,
        "terminal_gradient": res_terminal,
        "cost_fenchel": res_g,
        "terminal_polar": res_polar,
    }
    if res_terminal is None:
        out["note"] = "polar gradient unavailable (kinked loss); not computed"
    return out
