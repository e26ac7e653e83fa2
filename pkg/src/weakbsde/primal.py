"""Exact dynamic programming for the minimal-cost threshold problem.

State is (level, node, m) where m is the running threshold the controller
still has to honour.  One backup step minimizes, over a finite slope grid,
the one-step nonlinear expectation of the interpolated next-level surface:

    V(k, j, m) = min_a  E_g-step( V(k+1, j+1, m_up), V(k+1, j, m_down) )
    m_up/down  = m - f(t_k, m, a) dt +/- a sqrt(dt)

subject to both successor states staying inside the admissibility corridor
(the nonlinear expectations of terminal 0 and 1 under the constraint
driver f).  At the terminal level V is the loss map phi itself, evaluated
exactly on the per-node m-grid.

The per-node control grid always contains 0 and the corridor-tracking
slopes, so a feasible control exists at every state; ties are broken
toward the smallest |a| (then the smallest a) to keep results
deterministic.  Two brute-force oracles (exhaustive policy enumeration and
a leaf-value grid search on the weak formulation) provide independent
cross-checks at tiny depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bsde import (Corridor, FIXED_POINT_TOL, MAX_FIXED_POINT_ITERS, SchemeError,
                   apriori_bound_field, compute_corridor, exact_scheme_for,
                   solve_on_path_tree, _require_step_condition)
from .drivers import Driver, LossPair
from .lattice import (Lattice, LatticeError, build_lattice, leaf_nodes,
                      prefix_up_counts)

FEASIBILITY_TOL = 1e-9
CURVE_TOL = 1e-9


class PrimalError(ValueError):
    pass


@dataclass(frozen=True)
class PrimalScenario:
    """Everything the DP needs: lattice, drivers, loss and grid sizes."""

    lattice: Lattice
    driver_f: Driver        # shapes the corridor and the forward threshold
    driver_g: Driver        # prices the terminal loss
    loss: LossPair
    grid_size: int = 201    # m-points per node (loss breakpoints are added)
    n_a: int = 21           # uniform slope grid size on [-alpha_max, alpha_max]
    alpha_max: Optional[float] = None  # default 1/sqrt(dt)
    scheme: str = "explicit"
    tol_feas: float = FEASIBILITY_TOL
    control_grid: Optional[tuple] = None  # explicit override of the slope grid

    def __post_init__(self):
        if self.grid_size < 3:
            raise PrimalError("grid_size must be at least 3")
        if self.n_a < 2:
            raise PrimalError("n_a must be at least 2")
        if self.alpha_max is not None and not self.alpha_max > 0:
            raise PrimalError("alpha_max must be positive")
        if self.scheme not in ("explicit", "implicit"):
            raise PrimalError(f"unknown scheme {self.scheme!r}")

    @property
    def slope_bound(self) -> float:
        return self.alpha_max if self.alpha_max is not None \
            else 1.0 / self.lattice.sqrt_dt

    def base_controls(self) -> np.ndarray:
        if self.control_grid is not None:
            arr = np.asarray(self.control_grid, dtype=float)
            if arr.ndim != 1 or arr.size < 1:
                raise PrimalError("control_grid must be a nonempty 1-d sequence")
            if np.max(np.abs(arr)) > self.slope_bound + 1e-12:
                raise PrimalError("control_grid exceeds the slope bound")
            return arr
        return np.linspace(-self.slope_bound, self.slope_bound, self.n_a)


@dataclass(frozen=True)
class ValueSurface:
    """DP output: per-node m-grids, values, argmin controls, corridor."""

    scenario: PrimalScenario
    corridor: Corridor
    grids: tuple = field(repr=False)     # grids[k][j]: ascending m-points
    values: tuple = field(repr=False)    # values[k][j]: V on that grid
    controls: tuple = field(repr=False)  # controls[k][j]: argmin slopes
    clamp_events: int = 0

    @property
    def lattice(self) -> Lattice:
        return self.scenario.lattice

    @property
    def grid_slack(self) -> float:
        """Largest m-grid spacing anywhere on the surface."""
        worst = 0.0
        for level in self.grids:
            for g in level:
                if g.size > 1:
                    worst = max(worst, float(np.max(np.diff(g))))
        return worst

    def root_corridor(self) -> tuple:
        lo, hi = self.corridor.bounds_at(0)
        return float(lo[0]), float(hi[0])

    def value_at(self, k: int, j: int, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        out = np.interp(m, self.grids[k][j], self.values[k][j])
        return out if out.ndim else float(out)


def _node_grid(lo: float, hi: float, size: int, knots) -> np.ndarray:
    base = np.linspace(lo, hi, size)
    if knots:
        extra = np.asarray([x for x in knots if lo < x < hi], dtype=float)
        if extra.size:
            base = np.unique(np.concatenate([base, extra]))
    return base


def _ordered_controls(base: np.ndarray, extra) -> np.ndarray:
    cand = np.unique(np.concatenate([base, np.asarray(extra, dtype=float)]))
    order = np.lexsort((cand, np.abs(cand)))  # smallest |a| first, then smallest a
    return cand[order]


def _step_values(sc: PrimalScenario, t: float, vbar: np.ndarray,
                 zeta: np.ndarray) -> np.ndarray:
    g = sc.driver_g
    dt = sc.lattice.dt
    if sc.scheme == "explicit":
        return vbar + np.asarray(g.fn(t, vbar, zeta), float) * dt
    v = vbar.copy()
    for _ in range(MAX_FIXED_POINT_ITERS):
        v_next = vbar + np.asarray(g.fn(t, v, zeta), float) * dt
        if v.size == 0 or float(np.max(np.abs(v_next - v))) <= FIXED_POINT_TOL:
            return v_next
        v = v_next
    raise SchemeError("implicit DP step did not converge")


def _backup(sc: PrimalScenario, k: int, m_grid: np.ndarray, controls: np.ndarray,
            succ_up: tuple, succ_dn: tuple) -> tuple:
    """One-step backup for a whole node grid.

    succ_* = (grid, values, lo, hi): successor interpolation data and
    corridor bounds.  Returns (values, best_controls, matrix, feasible,
    clamp_count); matrix/feasible are kept for greedy re-use.
    """
    lat = sc.lattice
    dt, sq = lat.dt, lat.sqrt_dt
    t = lat.time_at(k)
    m = np.asarray(m_grid, float)[:, None]
    a = controls[None, :]
    drift = np.asarray(sc.driver_f.fn(t, m, a), float)
    drift = np.broadcast_to(drift, (m.shape[0], controls.size))
    base = m - drift * dt
    m_up = base + a * sq
    m_dn = base - a * sq
    gu, vu, lo_u, hi_u = succ_up
    gd, vd, lo_d, hi_d = succ_dn
    tol = sc.tol_feas
    feasible = ((m_up >= lo_u - tol) & (m_up <= hi_u + tol)
                & (m_dn >= lo_d - tol) & (m_dn <= hi_d + tol))
    up_c = np.clip(m_up, lo_u, hi_u)
    dn_c = np.clip(m_dn, lo_d, hi_d)
    clamps = int(np.count_nonzero(feasible & ((m_up != up_c) | (m_dn != dn_c))))
    v_up = np.interp(up_c.ravel(), gu, vu).reshape(up_c.shape)
    v_dn = np.interp(dn_c.ravel(), gd, vd).reshape(dn_c.shape)
    vbar = 0.5 * (v_up + v_dn)
    zeta = (v_up - v_dn) / (2.0 * sq)
    vals = _step_values(sc, t, vbar, zeta)
    vals = np.where(feasible, vals, np.inf)
    if not np.all(np.any(feasible, axis=1)):
        bad = int(np.argmin(np.any(feasible, axis=1)))
        raise PrimalError(
            f"no feasible control at level {k}, m = {m_grid[bad]!r}; "
            "corridor-tracking slopes should prevent this"
        )
    idx = np.argmin(vals, axis=1)  # controls are (|a|, a)-ordered: ties resolve small
    rows = np.arange(m.shape[0])
    return vals[rows, idx], controls[idx], vals, feasible, clamps


def _successor_pack(surface_grids, surface_values, corridor, k1, j):
    lo, hi = corridor.bounds_at(k1)
    return (surface_grids[j], surface_values[j], float(lo[j]), float(hi[j]))


def primal_value_dp(sc: PrimalScenario) -> ValueSurface:
    """Backward sweep over all (node, m) states."""
    lat = sc.lattice
    _require_step_condition(lat, sc.driver_f, sc.scheme)
    _require_step_condition(lat, sc.driver_g, sc.scheme)
    n = lat.steps
    corridor = compute_corridor(lat, sc.driver_f, scheme=sc.scheme)
    knots = sc.loss.breakpoints
    base_controls = sc.base_controls()

    grids, values, controls = [], [], []
    for k in range(n + 1):
        lo, hi = corridor.bounds_at(k)
        grids.append([_node_grid(float(lo[j]), float(hi[j]), sc.grid_size, knots)
                      for j in range(k + 1)])
        values.append([None] * (k + 1))
        controls.append([None] * (k + 1))

    for j in range(n + 1):
        g = grids[n][j]
        values[n][j] = np.asarray(sc.loss.phi(g), dtype=float)
        controls[n][j] = np.zeros_like(g)

    clamp_total = 0
    for k in range(n - 1, -1, -1):
        z_lo, z_hi = corridor.floor_z.at(k), corridor.ceiling_z.at(k)
        for j in range(k + 1):
            cand = _ordered_controls(base_controls, [z_lo[j], z_hi[j]])
            up = _successor_pack(grids[k + 1], values[k + 1], corridor, k + 1, j + 1)
            dn = _successor_pack(grids[k + 1], values[k + 1], corridor, k + 1, j)
            vals, best, _, _, clamps = _backup(sc, k, grids[k][j], cand, up, dn)
            values[k][j] = vals
            controls[k][j] = best
            clamp_total += clamps

    return ValueSurface(
        scenario=sc,
        corridor=corridor,
        grids=tuple(tuple(level) for level in grids),
        values=tuple(tuple(level) for level in values),
        controls=tuple(tuple(level) for level in controls),
        clamp_events=clamp_total,
    )


def value_curve(surface: ValueSurface, m_list) -> np.ndarray:
    """Root-level value slice; thresholds must lie inside the root corridor."""
    lo, hi = surface.root_corridor()
    m = np.atleast_1d(np.asarray(m_list, dtype=float))
    if np.any((m < lo - CURVE_TOL) | (m > hi + CURVE_TOL)):
        raise PrimalError(
            f"threshold outside the root corridor [{lo:.6g}, {hi:.6g}]"
        )
    return np.interp(np.clip(m, lo, hi), surface.grids[0][0], surface.values[0][0])


class GreedyPolicy:
    """State-feedback policy: re-optimizes the one-step backup against the
    stored next-level surface at the exact current state."""

    def __init__(self, surface: ValueSurface):
        self.surface = surface
        self.sc = surface.scenario

    def initial_state(self, n_prefixes: int = 1):
        return None

    def control_array(self, k: int, j_idx: np.ndarray, m: np.ndarray, state):
        out = np.empty(m.shape, dtype=float)
        sf = self.surface
        z_lo = sf.corridor.floor_z.at(k)
        z_hi = sf.corridor.ceiling_z.at(k)
        for j in np.unique(j_idx):
            mask = j_idx == j
            cand = _ordered_controls(self.sc.base_controls(), [z_lo[j], z_hi[j]])
            up = _successor_pack(sf.grids[k + 1], sf.values[k + 1], sf.corridor,
                                 k + 1, j + 1)
            dn = _successor_pack(sf.grids[k + 1], sf.values[k + 1], sf.corridor,
                                 k + 1, j)
            _, best, _, _, _ = _backup(self.sc, k, m[mask], cand, up, dn)
            out[mask] = best
        return out, state

    def control(self, k: int, j: int, m: float) -> float:
        a, _ = self.control_array(k, np.array([j]), np.array([float(m)]), None)
        return float(a[0])


def _simulate_greedy(surface: ValueSurface, m0: float):
    """Greedy forward run over every path prefix; exact states, no grid."""
    sc = surface.scenario
    lat = sc.lattice
    policy = GreedyPolicy(surface)
    dt, sq = lat.dt, lat.sqrt_dt
    states = [np.array([float(m0)])]
    applied = []
    for k in range(lat.steps):
        m = states[k]
        a, _ = policy.control_array(k, prefix_up_counts(k), m, None)
        drift = np.asarray(sc.driver_f.fn(lat.time_at(k), m, a), float)
        base = m - drift * dt
        nxt = np.empty(2 * m.size)
        nxt[0::2] = base + a * sq
        nxt[1::2] = base - a * sq
        states.append(nxt)
        applied.append(np.asarray(a, float))
    return states, applied


def attainment_check(surface: ValueSurface, m0: float) -> dict:
    """Simulate the greedy policy and compare realized cost with the surface."""
    sc = surface.scenario
    lat = sc.lattice
    states, applied = _simulate_greedy(surface, m0)
    leaf_cost = np.asarray(sc.loss.phi(states[-1]), dtype=float)
    realized = solve_on_path_tree(lat, sc.driver_g, leaf_cost[None, :],
                                  scheme=sc.scheme)
    realized = float(np.asarray(realized)[0])
    surface_value = float(value_curve(surface, m0)[0])
    tol = 2.0 * surface.grid_slack + 1e-9
    return {
        "realized": realized,
        "surface_value": surface_value,
        "gap": abs(realized - surface_value),
        "tol": tol,
        "ok": abs(realized - surface_value) <= tol,
        "states": states,
        "controls": applied,
    }


def monotonicity_violation(surface: ValueSurface) -> float:
    """Worst decrease of V along increasing m, over every node."""
    worst = 0.0
    for level in surface.values:
        for vals in level:
            if vals.size > 1:
                worst = max(worst, float(np.max(vals[:-1] - vals[1:])))
    return worst


def convexity_check(surface: ValueSurface, tol: float = 2e-3) -> dict:
    """Midpoint convexity of the root slice (needs the shape flags)."""
    sc = surface.scenario
    if not (sc.driver_f.concave_in_yz and sc.driver_g.convex_in_yz
            and sc.loss.phi_convex):
        return {"status": "skipped",
                "reason": "needs concave f, convex g and convex phi"}
    g0 = surface.grids[0][0]
    v0 = surface.values[0][0]
    m1 = g0[:, None]
    m2 = g0[None, :]
    mid = 0.5 * (m1 + m2)
    v_mid = np.interp(mid.ravel(), g0, v0).reshape(mid.shape)
    violation = float(np.max(v_mid - 0.5 * (v0[:, None] + v0[None, :])))
    return {"status": "checked", "violation": violation, "ok": violation <= tol}


def continuity_modulus(surface: ValueSurface, base_m: float,
                       offsets=None) -> dict:
    """Fitted growth exponent of |V(m + h) - V(m)| over dyadic offsets."""
    if surface.scenario.loss.phi_lipschitz is None:
        raise PrimalError("continuity check needs a Lipschitz loss map")
    if offsets is None:
        offsets = 2.0 ** -np.arange(3, 10)
    offsets = np.asarray(offsets, dtype=float)
    lo, hi = surface.root_corridor()
    if not (lo <= base_m <= hi) or base_m + float(np.max(offsets)) > hi + CURVE_TOL:
        raise PrimalError("base point (plus largest offset) must stay in corridor")
    v0 = float(value_curve(surface, base_m)[0])
    diffs = np.abs(value_curve(surface, base_m + offsets) - v0)
    keep = diffs > 1e-9
    if int(np.count_nonzero(keep)) < 2:
        return {"status": "vacuous", "exponent": None, "diffs": diffs,
                "note": "value differences below noise floor"}
    slope, intercept = np.polyfit(np.log(offsets[keep]), np.log(diffs[keep]), 1)
    return {"status": "fitted", "exponent": float(slope),
            "scale": float(math.exp(intercept)), "diffs": diffs}


def dpp_check(surface: ValueSurface, k1: int, k2: int) -> dict:
    """Time-consistency of the backup between two levels.

    One-step (k2 = k1 + 1) re-runs the stored backup verbatim and must
    reproduce the surface exactly.  Multi-step re-samples the level-k2
    slice onto a half-spacing-shifted grid first, so the residual measures
    how much the dynamic-programming composition distorts an interpolated
    intermediate surface (it shrinks with the grid spacing).
    """
    sc = surface.scenario
    n = sc.lattice.steps
    if not (0 <= k1 < k2 <= n):
        raise PrimalError(f"need 0 <= k1 < k2 <= {n}")
    if k2 == k1 + 1:
        grids_k2 = list(surface.grids[k2])
        vals_k2 = [np.asarray(v) for v in surface.values[k2]]
        mode = "one_step"
    else:
        grids_k2, vals_k2 = [], []
        for g, v in zip(surface.grids[k2], surface.values[k2]):
            mids = 0.5 * (g[:-1] + g[1:])
            ng = np.unique(np.concatenate([g[:1], mids, g[-1:]]))
            grids_k2.append(ng)
            vals_k2.append(np.interp(ng, g, v))
        mode = "multi_step"

    cur_grids, cur_vals = grids_k2, vals_k2
    for k in range(k2 - 1, k1 - 1, -1):
        z_lo = surface.corridor.floor_z.at(k)
        z_hi = surface.corridor.ceiling_z.at(k)
        new_grids = list(surface.grids[k])
        new_vals = []
        for j in range(k + 1):
            cand = _ordered_controls(sc.base_controls(), [z_lo[j], z_hi[j]])
            lo, hi = surface.corridor.bounds_at(k + 1)
            up = (cur_grids[j + 1], cur_vals[j + 1], float(lo[j + 1]),
                  float(hi[j + 1]))
            dn = (cur_grids[j], cur_vals[j], float(lo[j]), float(hi[j]))
            vals, _, _, _, _ = _backup(sc, k, new_grids[j], cand, up, dn)
            new_vals.append(vals)
        cur_grids, cur_vals = new_grids, new_vals

    residual = 0.0
    for j in range(k1 + 1):
        residual = max(residual, float(np.max(np.abs(cur_vals[j]
                                                     - surface.values[k1][j]))))
    return {"residual": residual, "mode": mode}


def apriori_bound_check(surface: ValueSurface, tol: float = 1e-9) -> dict:
    """|V| must stay inside the a-priori envelope at every node."""
    sc = surface.scenario
    eta = apriori_bound_field(sc.lattice, sc.driver_g, sc.loss, scheme=sc.scheme)
    worst = -math.inf
    for k in range(sc.lattice.steps + 1):
        bound = eta.at(k)
        for j in range(k + 1):
            worst = max(worst, float(np.max(np.abs(surface.values[k][j]))
                                     - bound[j]))
    return {"excess": worst, "ok": worst <= tol}


def restriction_check(surface: ValueSurface, k: int, j: int,
                      tol: float = 1e-12) -> dict:
    """Sub-tree consistency: solving the problem on the lattice rooted at
    (k, j) reproduces the restriction of the global surface."""
    sc = surface.scenario
    lat = sc.lattice
    if not (0 <= k < lat.steps and 0 <= j <= k):
        raise PrimalError("root node outside the lattice interior")
    sub_lat = build_lattice(lat.dt * (lat.steps - k), lat.steps - k,
                            step_offset=lat.grid.step_offset + k)
    sub_sc = PrimalScenario(
        lattice=sub_lat, driver_f=sc.driver_f, driver_g=sc.driver_g,
        loss=sc.loss, grid_size=sc.grid_size, n_a=sc.n_a,
        alpha_max=sc.alpha_max if sc.alpha_max is not None else sc.slope_bound,
        scheme=sc.scheme, tol_feas=sc.tol_feas, control_grid=sc.control_grid,
    )
    sub = primal_value_dp(sub_sc)
    worst = 0.0
    for i in range(sub_lat.steps + 1):
        for jj in range(i + 1):
            g_sub = sub.grids[i][jj]
            v_sub = sub.values[i][jj]
            v_glob = np.interp(g_sub, surface.grids[k + i][j + jj],
                               surface.values[k + i][j + jj])
            worst = max(worst, float(np.max(np.abs(v_sub - v_glob))))
    return {"max_diff": worst, "ok": worst <= tol}


# ---------------------------------------------------------------------------
# independent oracles (tiny scale)
# ---------------------------------------------------------------------------

def two_point_envelope(lp: LossPair, m: float, step: float = 1e-3) -> float:
    """Convex envelope of phi at m via two-point-law grid search."""
    if not (0.0 <= m <= 1.0):
        raise PrimalError("envelope oracle expects m in [0, 1]")
    grid = np.arange(0.0, 1.0 + step / 2, step)
    left = grid[grid <= m]
    right = grid[grid >= m]
    phi_l = np.asarray(lp.phi(left), float)[:, None]
    phi_r = np.asarray(lp.phi(right), float)[None, :]
    l_col = left[:, None]
    r_row = right[None, :]
    denom = r_row - l_col
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(denom > 0, (r_row - m) / np.where(denom > 0, denom, 1.0), 1.0)
    vals = lam * phi_l + (1.0 - lam) * phi_r
    return float(np.min(vals))


def brute_force_policy_value(sc: PrimalScenario, m0: float,
                             budget: int = 1_000_000) -> dict:
    """Exhaustive minimum over every open-loop path-indexed policy.

    Each policy assigns one slope from the scenario's base grid to each of
    the 2^N - 1 interior history nodes; admissibility is enforced exactly
    along every path, and the cost of a policy is the nonlinear expectation
    of the terminal loss over the full path tree.
    """
    lat = sc.lattice
    n = lat.steps
    grid = sc.base_controls()
    n_a = grid.size
    decisions = 2**n - 1
    n_pol = n_a**decisions
    if n_pol > budget:
        raise PrimalError(
            f"{n_a}^{decisions} = {n_pol} policies exceed the {budget} budget"
        )
    corridor = compute_corridor(lat, sc.driver_f, scheme=sc.scheme)
    lo0, hi0 = corridor.bounds_at(0)
    if not (lo0[0] - sc.tol_feas <= m0 <= hi0[0] + sc.tol_feas):
        raise PrimalError("threshold outside the root corridor")

    assign = np.indices((n_a,) * decisions).reshape(decisions, -1).T  # (P, D)
    slopes = grid[assign]
    dt, sq = lat.dt, lat.sqrt_dt
    m = np.full((n_pol, 1), float(m0))
    violation = np.zeros(n_pol)
    for k in range(n):
        cols = slice(2**k - 1, 2**(k + 1) - 1)
        a = slopes[:, cols]
        drift = np.asarray(sc.driver_f.fn(lat.time_at(k), m, a), float)
        base = m - drift * dt
        nxt = np.empty((n_pol, 2 * m.shape[1]))
        nxt[:, 0::2] = base + a * sq
        nxt[:, 1::2] = base - a * sq
        m = nxt
        j_idx = prefix_up_counts(k + 1)
        lo = corridor.floor.at(k + 1)[j_idx]
        hi = corridor.ceiling.at(k + 1)[j_idx]
        excursion = np.maximum(lo[None, :] - m, m - hi[None, :])
        violation = np.maximum(violation, excursion.max(axis=1))

    leaf_cost = np.asarray(sc.loss.phi(m), dtype=float)
    cost = np.asarray(solve_on_path_tree(lat, sc.driver_g, leaf_cost,
                                         scheme=sc.scheme), float)
    admissible_mask = violation <= sc.tol_feas
    if not admissible_mask.any():
        raise PrimalError("no admissible policy in the enumeration grid")
    cost = np.where(admissible_mask, cost, np.inf)
    best = int(np.argmin(cost))
    return {
        "value": float(cost[best]),
        "n_policies": int(n_pol),
        "n_admissible": int(np.count_nonzero(admissible_mask)),
        "best_assignment": grid[assign[best]],
    }


def brute_force_weak_formulation(sc: PrimalScenario, m0: float, q: int = 5,
                                 rounds: int = 12,
                                 budget: int = 1_000_000) -> dict:
    """Leaf-value grid search on the weak formulation.

    Minimizes the nonlinear g-expectation of a path-indexed terminal vector
    subject to the nonlinear f-expectation of psi(terminal) clearing the
    threshold.  A coarse product grid over [0,1]^leaves is refined by
    halving per-leaf windows around the incumbent.
    """
    lat = sc.lattice
    n = lat.steps
    leaves = 2**n
    if q**leaves > budget:
        raise PrimalError(f"{q}^{leaves} candidates exceed the {budget} budget")
    scheme_f = exact_scheme_for(sc.driver_f)

    def evaluate(y_mat: np.ndarray):
        psi_vals = np.asarray(sc.loss.psi(y_mat), dtype=float)
        level = np.asarray(solve_on_path_tree(lat, sc.driver_f, psi_vals,
                                              scheme=scheme_f), float)
        cost = np.asarray(solve_on_path_tree(lat, sc.driver_g, y_mat,
                                             scheme=sc.scheme), float)
        return level, cost

    idx = np.indices((q,) * leaves).reshape(leaves, -1).T  # (C, leaves)
    grids = np.tile(np.linspace(0.0, 1.0, q), (leaves, 1))
    best_y = None
    best_cost = math.inf
    evaluated = 0
    half_width = 0.5
    for _ in range(rounds + 1):
        y_mat = grids[np.arange(leaves)[None, :], idx]
        level, cost = evaluate(y_mat)
        evaluated += y_mat.shape[0]
        feasible = level >= m0 - 1e-12
        if feasible.any():
            cand = np.where(feasible, cost, np.inf)
            b = int(np.argmin(cand))
            if cand[b] < best_cost:
                best_cost = float(cand[b])
                best_y = y_mat[b].copy()
        if best_y is None:
            # widen nothing; the shared [0,1] grid must contain a feasible
            # point (the all-ones vector) whenever the threshold is sane
            raise PrimalError("no feasible leaf vector on the coarse grid")
        half_width *= 0.5
        grids = np.clip(best_y[:, None]
                        + np.linspace(-half_width, half_width, q)[None, :],
                        0.0, 1.0)
    step_final = 2.0 * half_width / (q - 1)
    return {"value": best_cost, "leaf_values": best_y,
            "n_evaluated": int(evaluated), "final_step": float(step_final)}
