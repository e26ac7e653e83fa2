"""Controlled threshold processes on the lattice.

A control policy picks the slope a of the forward recursion

    M_{k+1} = M_k - f(t_k, M_k, a) * dt + a * dW_{k+1},   dW = +/- sqrt(dt),

which is the discrete driver-martingale dynamics of the threshold state.
Admissibility means the state stays inside the corridor spanned by the
nonlinear expectations of the terminal fields 0 and 1.

Policies expose a small vectorized protocol (initial_state / control_array)
so that the same code simulates a single path or every path prefix at
once; truncated policies are the only stateful ones (they latch once the
corridor edge is hit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import Corridor, compute_corridor, exact_scheme_for, solve_bsde
from .drivers import Driver
from .lattice import (AdaptedField, Lattice, LatticeError, MAX_PATH_LEVELS,
                      PathId, prefix_up_counts)

HIT_TOL = 1e-9
ADMISSIBLE_TOL = 1e-9


class PolicyError(ValueError):
    pass


class NodePolicy:
    """Control depending on the lattice node only (one value per (k, j))."""

    def __init__(self, lattice: Lattice, values):
        self.lattice = lattice
        self.values = []
        for k, slab in enumerate(values):
            arr = np.asarray(slab, dtype=float)
            if arr.shape != (k + 1,):
                raise PolicyError(
                    f"level {k} controls have shape {arr.shape}, expected ({k + 1},)"
                )
            self.values.append(arr)
        if len(self.values) != lattice.steps:
            raise PolicyError(
                f"need controls for levels 0..{lattice.steps - 1}, "
                f"got {len(self.values)}"
            )

    @classmethod
    def constant(cls, lattice: Lattice, a: float) -> "NodePolicy":
        return cls(lattice, [np.full(k + 1, float(a)) for k in range(lattice.steps)])

    @classmethod
    def zeros(cls, lattice: Lattice) -> "NodePolicy":
        return cls.constant(lattice, 0.0)

    @classmethod
    def from_slopes(cls, z_field: AdaptedField) -> "NodePolicy":
        lat = z_field.lattice
        if z_field.level_lo != 0 or z_field.level_hi != lat.steps - 1:
            raise PolicyError("slope field must span levels 0..N-1")
        return cls(lat, [z_field.at(k) for k in range(lat.steps)])

    def initial_state(self, n_prefixes: int = 1):
        return None

    def control_array(self, k: int, j_idx: np.ndarray, m: np.ndarray, state):
        return self.values[k][j_idx], state

    def control(self, k: int, j: int, m: float) -> float:
        return float(self.values[k][j])


class TruncatedPolicy:
    """Base policy until the corridor edge is first reached, then the
    corridor-tracking slope forever after (per path).

    Hitting is detected two ways: the state sits within tol_hit of the
    edge, or the base policy's proposed step would land strictly beyond
    the next-level edge.  The second (predictive) trigger is the discrete
    stand-in for continuous paths touching the boundary before crossing:
    without it a large control could jump straight across the corridor and
    no truncation could repair the excursion after the fact.
    """

    def __init__(self, lattice: Lattice, f: Driver, corridor: Corridor,
                 base, side: str, tol_hit: float = HIT_TOL):
        if side not in ("floor", "ceiling"):
            raise PolicyError(f"side must be 'floor' or 'ceiling', got {side!r}")
        self.lattice = lattice
        self.f = f
        self.base = base
        self.corridor = corridor
        self.side = side
        self.tol_hit = float(tol_hit)

    def initial_state(self, n_prefixes: int = 1):
        return (np.zeros(n_prefixes, dtype=bool), self.base.initial_state(n_prefixes))

    def control_array(self, k: int, j_idx: np.ndarray, m: np.ndarray, state):
        latched, base_state = state
        base_a, base_state = self.base.control_array(k, j_idx, m, base_state)
        base_a = np.broadcast_to(np.asarray(base_a, float), m.shape)
        dt, sq = self.lattice.dt, self.lattice.sqrt_dt
        drift = np.asarray(self.f.fn(self.lattice.time_at(k), m, base_a), float)
        mid = m - drift * dt
        up = mid + base_a * sq
        dn = mid - base_a * sq
        if self.side == "floor":
            edge = self.corridor.floor.at(k)[j_idx]
            track = self.corridor.floor_z.at(k)[j_idx]
            edge_next = self.corridor.floor.at(k + 1)
            hit = m <= edge + self.tol_hit
            crossing = (up < edge_next[j_idx + 1]) | (dn < edge_next[j_idx])
        else:
            edge = self.corridor.ceiling.at(k)[j_idx]
            track = self.corridor.ceiling_z.at(k)[j_idx]
            edge_next = self.corridor.ceiling.at(k + 1)
            hit = m >= edge - self.tol_hit
            crossing = (up > edge_next[j_idx + 1]) | (dn > edge_next[j_idx])
        latched = latched | hit | crossing
        return np.where(latched, track, base_a), (latched, base_state)


def truncate_at_floor(lattice: Lattice, f: Driver, corridor: Corridor, policy,
                      tol_hit: float = HIT_TOL):
    return TruncatedPolicy(lattice, f, corridor, policy, "floor", tol_hit)


def truncate_at_ceiling(lattice: Lattice, f: Driver, corridor: Corridor, policy,
                        tol_hit: float = HIT_TOL):
    return TruncatedPolicy(lattice, f, corridor, policy, "ceiling", tol_hit)


def tilt_terminal(k: int, m_terminal):
    """Shift terminal mass toward the ceiling: 1/k + m*(1 - 1/k), k >= 1."""
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise PolicyError(f"tilt index must be an integer >= 1, got {k!r}")
    m = np.asarray(m_terminal, dtype=float)
    if np.any((m < 0.0) | (m > 1.0)):
        raise PolicyError("terminal values must lie in [0, 1]")
    out = 1.0 / k + m * (1.0 - 1.0 / k)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ControlledPath:
    """One forward trajectory: states at levels 0..N and applied controls."""

    path: PathId
    states: np.ndarray
    controls: np.ndarray


def simulate_controlled(lattice: Lattice, f: Driver, mu0: float, policy,
                        path: PathId, corridor: Corridor | None = None) -> ControlledPath:
    """Exact forward recursion along a single path."""
    n = lattice.steps
    if len(path) != n:
        raise PolicyError(f"path has {len(path)} steps, lattice has {n}")
    if corridor is None:
        corridor = compute_corridor(lattice, f)
    lo, hi = corridor.bounds_at(0)
    if not (lo[0] - ADMISSIBLE_TOL <= mu0 <= hi[0] + ADMISSIBLE_TOL):
        raise PolicyError(
            f"initial state {mu0} outside root corridor [{lo[0]}, {hi[0]}]"
        )
    dt, sq = lattice.dt, lattice.sqrt_dt
    states = np.empty(n + 1)
    controls = np.empty(n)
    states[0] = mu0
    state = policy.initial_state(1)
    j = 0
    for k, sign in enumerate(path):
        m = np.array([states[k]])
        a, state = policy.control_array(k, np.array([j]), m, state)
        a_k = float(a[0])
        drift = float(np.asarray(f.fn(lattice.time_at(k), states[k], a_k), float))
        states[k + 1] = states[k] - drift * dt + a_k * sign * sq
        controls[k] = a_k
        if sign > 0:
            j += 1
    return ControlledPath(path=tuple(path), states=states, controls=controls)


def simulate_all_prefixes(lattice: Lattice, f: Driver, mu0: float, policy):
    """Forward recursion over every path prefix at once.

    Returns (states, controls): states[k] has shape (2^k,) in sign-matrix
    prefix order, controls[k] the matching applied controls.
    """
    n = lattice.steps
    if n > MAX_PATH_LEVELS:
        raise LatticeError(f"prefix simulation guarded at N <= {MAX_PATH_LEVELS}")
    dt, sq = lattice.dt, lattice.sqrt_dt
    states = [np.array([float(mu0)])]
    controls = []
    state = policy.initial_state(1)
    for k in range(n):
        m = states[k]
        j_idx = prefix_up_counts(k)
        a, state = policy.control_array(k, j_idx, m, state)
        a = np.asarray(a, float)
        drift = np.asarray(f.fn(lattice.time_at(k), m, a), float)
        base = m - drift * dt
        nxt = np.empty(2 * m.size)
        nxt[0::2] = base + a * sq   # up child
        nxt[1::2] = base - a * sq   # down child
        states.append(nxt)
        controls.append(a)
        state = _split_state(state)
    return states, controls


def _split_state(state):
    """Duplicate per-prefix policy state onto both children."""
    if state is None:
        return None
    if isinstance(state, tuple):
        return tuple(_split_state(s) for s in state)
    arr = np.asarray(state)
    return np.repeat(arr, 2)


def admissible(lattice: Lattice, f: Driver, corridor: Corridor, mu0: float,
               policy, tol: float = ADMISSIBLE_TOL) -> dict:
    """Check the corridor constraint along every path.

    Returns the worst signed excursion outside [floor, ceiling]; the policy
    is admissible when that excursion is within tol.
    """
    states, _ = simulate_all_prefixes(lattice, f, mu0, policy)
    worst = 0.0
    for k, m in enumerate(states):
        j_idx = prefix_up_counts(k)
        lo = corridor.floor.at(k)[j_idx]
        hi = corridor.ceiling.at(k)[j_idx]
        excursion = np.maximum(lo - m, m - hi)
        worst = max(worst, float(np.max(excursion)))
    return {"ok": worst <= tol, "worst_violation": worst}


def representation_roundtrip(lattice: Lattice, f: Driver, terminal, *,
                             scheme: str | None = None) -> dict:
    """Solve backward, feed the slopes forward, compare with the terminal.

    With the scheme matched to the driver (implicit when f depends on y)
    the forward recursion inverts the backward step exactly, so the
    terminal field is reproduced on every path to machine precision.
    """
    if scheme is None:
        scheme = exact_scheme_for(f)
    sol = solve_bsde(lattice, f, terminal, scheme=scheme)
    policy = NodePolicy.from_slopes(sol.z)
    mu0 = sol.value_at_root()
    states, _ = simulate_all_prefixes(lattice, f, mu0, policy)
    n = lattice.steps
    term = np.asarray(terminal, float) if not isinstance(terminal, AdaptedField) \
        else terminal.at(n)
    target = term[prefix_up_counts(n)]
    max_err = float(np.max(np.abs(states[n] - target)))
    # interior check: the simulated state must sit on the backward values
    interior = 0.0
    for k in range(n + 1):
        nodes = sol.y.at(k)[prefix_up_counts(k)]
        interior = max(interior, float(np.max(np.abs(states[k] - nodes))))
    return {"max_error": max_err, "max_interior_error": interior,
            "scheme": scheme, "mu0": mu0}
