"""Backward solver on the lattice: nonlinear conditional expectations.

One backward step from level k+1 to level k reads

    E  = (up + down) / 2                    exact conditional expectation
    Z  = (up - down) / (2 sqrt(dt))         discrete martingale slope
    Y  = E + f(t_k, ystar, Z) * dt

with ystar = E for the explicit scheme and ystar = Y (fixed point, solved
to 1e-13) for the implicit one.  The Z extraction is the exact discrete
representation coefficient, which is what makes the forward/backward
roundtrip in the control module machine-exact.

The explicit step is monotone in (up, down) as long as

    lipschitz_z * sqrt(dt) + lipschitz_y * dt <= 1

which is the standing step condition for every comparison-based result.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .drivers import Driver, LossPair
from .lattice import AdaptedField, Lattice, LatticeError, half_sum, leaf_nodes

FIXED_POINT_TOL = 1e-13
MAX_FIXED_POINT_ITERS = 200


class SchemeError(ValueError):
    """Scheme preconditions violated (step condition, contraction, names)."""


@dataclass(frozen=True)
class BsdeSolution:
    """Value and slope fields of one backward solve.

    y spans levels stop_level..terminal_level, z one level less (there is
    no slope at the terminal level).
    """

    y: AdaptedField
    z: AdaptedField
    scheme: str
    fixed_point_iters: int

    def value_at_root(self) -> float:
        return float(self.y.at(self.y.level_lo)[0])


def monotone_step_ok(lattice: Lattice, d: Driver) -> bool:
    return d.lipschitz_z * lattice.sqrt_dt + d.lipschitz_y * lattice.dt <= 1.0 + 1e-12


def _require_step_condition(lattice: Lattice, d: Driver, scheme: str) -> None:
    if monotone_step_ok(lattice, d):
        return
    msg = (
        f"monotone step condition violated for driver {d.name!r}: "
        f"Cz*sqrt(dt) + Cy*dt = "
        f"{d.lipschitz_z * lattice.sqrt_dt + d.lipschitz_y * lattice.dt:.3g} > 1"
    )
    if scheme == "explicit":
        raise SchemeError(msg + "; refine the grid or use the implicit scheme")
    warnings.warn(msg + "; comparison-based checks may fail", RuntimeWarning)


def exact_scheme_for(d: Driver) -> str:
    """Scheme whose one-step map exactly inverts forward Euler for this driver.

    The forward threshold recursion evaluates the driver at the current
    state, so drivers with y-dependence need the implicit backward step to
    make roundtrips exact; y-independent drivers are exact either way.
    """
    return "implicit" if d.depends_on_y else "explicit"


def _one_step(d: Driver, t: float, up: np.ndarray, down: np.ndarray,
              sqrt_dt: float, dt: float, scheme: str) -> tuple:
    e = 0.5 * (up + down)
    z = (up - down) / (2.0 * sqrt_dt)
    if scheme == "explicit":
        return e + np.asarray(d.fn(t, e, z), float) * dt, z, 0
    # implicit: y = e + f(t, y, z) dt, a contraction for Cy*dt < 1
    y = e.copy()
    for it in range(1, MAX_FIXED_POINT_ITERS + 1):
        y_next = e + np.asarray(d.fn(t, y, z), float) * dt
        delta = float(np.max(np.abs(y_next - y))) if y.size else 0.0
        y = y_next
        if delta <= FIXED_POINT_TOL:
            return y, z, it
    raise SchemeError(
        f"implicit fixed point did not reach {FIXED_POINT_TOL} in "
        f"{MAX_FIXED_POINT_ITERS} iterations (driver {d.name!r})"
    )


def solve_bsde(lattice: Lattice, d: Driver, terminal, *, scheme: str = "explicit",
               terminal_level: int | None = None, stop_level: int = 0) -> BsdeSolution:
    """Backward induction from a terminal field down to stop_level."""
    if scheme not in ("explicit", "implicit"):
        raise SchemeError(f"unknown scheme {scheme!r}")
    if isinstance(terminal, AdaptedField):
        if not terminal.is_single_level:
            raise LatticeError("terminal must be a single-level field")
        term_level = terminal.level_lo
        term_values = terminal.at(term_level)
    else:
        term_values = np.asarray(terminal, dtype=float)
        term_level = lattice.steps if terminal_level is None else int(terminal_level)
        if term_values.shape != (term_level + 1,):
            raise LatticeError(
                f"terminal has shape {term_values.shape}, expected ({term_level + 1},)"
            )
    if not np.all(np.isfinite(term_values)):
        raise LatticeError("terminal field contains non-finite values")
    if not (0 <= stop_level <= term_level <= lattice.steps):
        raise LatticeError(
            f"need 0 <= stop_level <= terminal_level <= {lattice.steps}"
        )
    _require_step_condition(lattice, d, scheme)
    if scheme == "implicit" and d.lipschitz_y * lattice.dt >= 1.0:
        raise SchemeError("implicit fixed point needs lipschitz_y * dt < 1")

    dt, sq = lattice.dt, lattice.sqrt_dt
    y_slabs = [np.asarray(term_values, float)]
    z_slabs = []
    iters = 0
    for k in range(term_level - 1, stop_level - 1, -1):
        t_k = lattice.time_at(k)
        nxt = y_slabs[0]
        y, z, it = _one_step(d, t_k, nxt[1:], nxt[:-1], sq, dt, scheme)
        iters = max(iters, it)
        y_slabs.insert(0, y)
        z_slabs.insert(0, z)
    y_field = AdaptedField(lattice, stop_level, tuple(y_slabs))
    if z_slabs:
        z_field = AdaptedField(lattice, stop_level, tuple(z_slabs))
    else:  # degenerate solve with terminal at stop_level: no slopes
        z_field = AdaptedField.single(lattice, 0, np.zeros(1)) \
            if term_level == 0 else AdaptedField.single(lattice, term_level - 1,
                                                        np.zeros(term_level))
    return BsdeSolution(y=y_field, z=z_field, scheme=scheme,
                        fixed_point_iters=iters)


def f_expectation(lattice: Lattice, d: Driver, terminal, k: int = 0, *,
                  scheme: str = "explicit",
                  terminal_level: int | None = None) -> AdaptedField:
    """Nonlinear conditional expectation at level k of a later terminal field."""
    sol = solve_bsde(lattice, d, terminal, scheme=scheme,
                     terminal_level=terminal_level, stop_level=k)
    return AdaptedField.single(lattice, k, sol.y.at(k))


@dataclass(frozen=True)
class Corridor:
    """Admissibility band: nonlinear expectations of the terminal 0 and 1
    fields under the constraint driver, with their tracking slopes."""

    floor: AdaptedField
    floor_z: AdaptedField
    ceiling: AdaptedField
    ceiling_z: AdaptedField

    def bounds_at(self, k: int) -> tuple:
        return self.floor.at(k), self.ceiling.at(k)


def compute_corridor(lattice: Lattice, d: Driver, *,
                     scheme: str = "explicit") -> Corridor:
    n = lattice.steps
    lo = solve_bsde(lattice, d, np.zeros(n + 1), scheme=scheme)
    hi = solve_bsde(lattice, d, np.ones(n + 1), scheme=scheme)
    return Corridor(floor=lo.y, floor_z=lo.z, ceiling=hi.y, ceiling_z=hi.z)


def comparison_check(lattice: Lattice, d: Driver, terminal_low, terminal_high, *,
                     scheme: str = "explicit") -> dict:
    """Solve two ordered terminals and report the worst order violation.

    Returns max over all nodes of (Y_low - Y_high); nonpositive means the
    discrete comparison principle held.
    """
    lo = np.asarray(terminal_low, float)
    hi = np.asarray(terminal_high, float)
    if lo.shape != hi.shape:
        raise LatticeError("terminal fields must share a shape")
    if np.any(lo > hi):
        raise LatticeError("terminal_low must be <= terminal_high nodewise")
    sol_lo = solve_bsde(lattice, d, lo, scheme=scheme)
    sol_hi = solve_bsde(lattice, d, hi, scheme=scheme)
    worst = -math.inf
    for k in range(lattice.steps + 1):
        worst = max(worst, float(np.max(sol_lo.y.at(k) - sol_hi.y.at(k))))
    return {"max_violation": worst, "ok": worst <= 1e-14}


def apriori_bound_field(lattice: Lattice, g: Driver, lp: LossPair, *,
                        scheme: str = "explicit") -> AdaptedField:
    """Nodewise a-priori envelope |E_g[phi(1)]| + |E_g[phi(0)]|.

    Every achievable optimal value lies inside this envelope because the
    terminal loss is squeezed between phi(0) and phi(1) and the nonlinear
    expectation is monotone under the step condition.
    """
    n = lattice.steps
    top = solve_bsde(lattice, g, np.full(n + 1, float(lp.phi(1.0))), scheme=scheme)
    bot = solve_bsde(lattice, g, np.full(n + 1, float(lp.phi(0.0))), scheme=scheme)
    slabs = tuple(np.abs(top.y.at(k)) + np.abs(bot.y.at(k)) for k in range(n + 1))
    return AdaptedField(lattice, 0, slabs)


def estimation_gap(lattice: Lattice, g: Driver, terminal_values, k: int,
                   span: int, *, scheme: str = "explicit") -> dict:
    """Distance between the nonlinear and the plain conditional expectation.

    terminal_values live at level k + span; the gap is the max over level-k
    nodes of |E_g - E| and shrinks linearly in the window span * dt.
    """
    level = k + span
    if not (0 <= k < level <= lattice.steps):
        raise LatticeError("need 0 <= k < k + span <= steps")
    vals = np.asarray(terminal_values, float)
    nonlinear = f_expectation(lattice, g, vals, k, scheme=scheme,
                              terminal_level=level).at(k)
    linear = vals
    for _ in range(span):
        linear = half_sum(linear)
    gap = float(np.max(np.abs(nonlinear - linear)))
    return {"gap": gap, "window": span * lattice.dt}


# ---------------------------------------------------------------------------
# path-tree (non-recombining) backward solver for path-dependent terminals
# ---------------------------------------------------------------------------

def solve_on_path_tree(lattice: Lattice, d: Driver, leaf_values: np.ndarray, *,
                       scheme: str = "explicit", with_slopes: bool = False):
    """Backward induction over the full binary tree.

    leaf_values is (..., 2^N): one value per path, extra leading axes are
    carried through (vectorized over candidate batches).  Returns the root
    values (...,) or, with slopes, (levels, slope_levels) lists of arrays
    of width 2^k at depth k.
    """
    _require_step_condition(lattice, d, scheme)
    n = lattice.steps
    vals = np.asarray(leaf_values, dtype=float)
    if vals.shape[-1] != 2**n:
        raise LatticeError(f"expected {2**n} leaf values, got {vals.shape[-1]}")
    dt, sq = lattice.dt, lattice.sqrt_dt
    levels = [vals] if with_slopes else None
    slopes = [] if with_slopes else None
    v = vals
    for k in range(n - 1, -1, -1):
        up, down = v[..., 0::2], v[..., 1::2]
        v, z, _ = _one_step(d, lattice.time_at(k), up, down, sq, dt, scheme)
        if with_slopes:
            levels.insert(0, v)
            slopes.insert(0, z)
    if with_slopes:
        return levels, slopes
    return v[..., 0] if v.ndim > 1 else float(v[0])
