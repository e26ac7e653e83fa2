"""Driver and loss-pair catalogue with their convex-duality transforms.

A driver is the nonlinearity (t, y, z) -> f of a backward equation; a loss
pair couples a nondecreasing [0,1]-valued constraint map psi with its
right-inverse phi.  Both carry enough structure (Lipschitz constants,
shape flags, closed-form conjugates) for the solvers to stay exact and
for the dual machinery to know its search domains.

Conventions for the transforms:

* concave conjugate of a driver d:   inf_{x,pi} (x*p + pi*q - d(t,x,pi)),
  equal to -inf outside its effective domain;
* convex conjugate of a driver d:    sup_{y,z} (y*u + z*v - d(t,y,z)),
  equal to +inf outside its effective domain;
* polar of a loss map phi:           sup_{m in [0,1]} (m*l - phi(m)).

Effective domains are always contained in the box with per-axis
half-widths equal to the driver's Lipschitz constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

LN2 = math.log(2.0)

# Numeric conjugation defaults: search box scale, grid step and the
# divergence sentinel used to classify a transform as infinite.
CONJUGATE_BOX_SCALE = 50.0
CONJUGATE_GRID_STEP = 1e-2
DIVERGENCE_THRESHOLD = 1e6


class DriverShapeError(ValueError):
    """Requested a transform that needs a shape flag the driver lacks."""


class ConjugateDomainError(ValueError):
    """A dual candidate stepped outside the effective conjugate domain."""


@dataclass(frozen=True)
class ConjugateBox:
    """Outer bound for a conjugate's effective domain: |first| <= half_width_y,
    |second| <= half_width_z.  Half-widths equal the driver's Lipschitz
    constants; the actual domain may be a strict subset (decided by the
    conjugate value being finite)."""

    half_width_y: float
    half_width_z: float

    def contains(self, p: float, q: float, tol: float = 1e-12) -> bool:
        return abs(p) <= self.half_width_y + tol and abs(q) <= self.half_width_z + tol

    def axis_grid(self, axis: int, step: float = 1e-3) -> np.ndarray:
        w = self.half_width_y if axis == 0 else self.half_width_z
        if w <= 0.0:
            return np.zeros(1)
        n = max(1, int(math.ceil(w / step)))
        return np.linspace(-w, w, 2 * n + 1)


@dataclass(frozen=True)
class Driver:
    """Lipschitz driver (t, y, z) -> value, vectorized over y and z.

    concave_in_yz / convex_in_yz may both be true (zero and linear
    drivers); transforms require the matching flag or a closed form.
    """

    name: str
    fn: Callable = field(repr=False)
    lipschitz_y: float
    lipschitz_z: float
    concave_in_yz: bool = False
    convex_in_yz: bool = False
    smooth: bool = False
    concave_conjugate_fn: Optional[Callable] = field(default=None, repr=False)
    convex_conjugate_fn: Optional[Callable] = field(default=None, repr=False)
    params: dict = field(default_factory=dict)

    def __call__(self, t, y, z):
        return self.fn(t, y, z)

    @property
    def lipschitz(self) -> float:
        return max(self.lipschitz_y, self.lipschitz_z)

    @property
    def depends_on_y(self) -> bool:
        return self.lipschitz_y > 0.0

    def conjugate_box(self) -> ConjugateBox:
        return ConjugateBox(self.lipschitz_y, self.lipschitz_z)


def eval_driver(d: Driver, t: float, y, z):
    """Evaluate a driver and insist on finite output."""
    out = np.asarray(d.fn(t, y, z), dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"driver {d.name!r} produced non-finite values")
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def concave_conjugate(d: Driver, p, q, t: float = 0.0):
    """inf_(x,pi) (x p + pi q - d); -inf outside the effective domain."""
    if d.concave_conjugate_fn is not None:
        return d.concave_conjugate_fn(p, q)
    if not d.concave_in_yz:
        raise DriverShapeError(
            f"driver {d.name!r} is not flagged concave and has no closed form"
        )
    return grid_concave_conjugate(d, p, q, t=t)


def convex_conjugate(d: Driver, u, v, t: float = 0.0):
    """sup_(y,z) (y u + z v - d); +inf outside the effective domain."""
    if d.convex_conjugate_fn is not None:
        return d.convex_conjugate_fn(u, v)
    if not d.convex_in_yz:
        raise DriverShapeError(
            f"driver {d.name!r} is not flagged convex and has no closed form"
        )
    return grid_convex_conjugate(d, u, v, t=t)


def _box_extreme(d: Driver, p: float, q: float, t: float, radius: float,
                 step: float, sign: float) -> float:
    # sign=+1: minimize x p + pi q - d; sign=-1: maximize (via min of negation).
    def objective(x, pi):
        val = x * p + pi * q - d.fn(t, x, pi)
        return sign * val

    coarse = max(step, radius / 400.0)
    xs = np.arange(-radius, radius + coarse / 2, coarse)
    best_val = math.inf
    best_x = best_pi = 0.0
    # chunk the x-axis so the (x, pi) sheet stays small
    for lo in range(0, xs.size, 256):
        xc = xs[lo:lo + 256][:, None]
        sheet = objective(xc, xs[None, :])
        idx = np.unravel_index(np.argmin(sheet), sheet.shape)
        if sheet[idx] < best_val:
            best_val = float(sheet[idx])
            best_x = float(xc[idx[0], 0])
            best_pi = float(xs[idx[1]])
    # local refinement at the requested resolution
    span = 2.0 * coarse
    fx = np.arange(best_x - span, best_x + span + step / 2, step)[:, None]
    fpi = np.arange(best_pi - span, best_pi + span + step / 2, step)[None, :]
    sheet = objective(fx, fpi)
    best_val = min(best_val, float(sheet.min()))
    return sign * best_val if sign > 0 else -best_val


def grid_concave_conjugate(d: Driver, p, q, t: float = 0.0,
                           radius: Optional[float] = None,
                           step: float = CONJUGATE_GRID_STEP):
    """Grid infimum oracle for the concave conjugate.

    Divergence (value -inf) is detected by the infimum deepening when the
    search box is doubled, or by crossing the divergence sentinel.
    """
    p_arr, q_arr = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
    if p_arr.ndim:
        flat = [grid_concave_conjugate(d, pi_, qi_, t, radius, step)
                for pi_, qi_ in zip(p_arr.ravel(), q_arr.ravel())]
        return np.array(flat).reshape(p_arr.shape)
    r = radius if radius is not None else CONJUGATE_BOX_SCALE * (1.0 + d.lipschitz)
    v1 = _box_extreme(d, float(p), float(q), t, r, step, +1.0)
    v2 = _box_extreme(d, float(p), float(q), t, 2.0 * r, step, +1.0)
    if v2 < v1 - max(1.0, 1e-6 * abs(v1)) or v1 < -DIVERGENCE_THRESHOLD:
        return -math.inf
    return v1


def grid_convex_conjugate(d: Driver, u, v, t: float = 0.0,
                          radius: Optional[float] = None,
                          step: float = CONJUGATE_GRID_STEP):
    """Grid supremum oracle for the convex conjugate (dual of the above)."""
    u_arr, v_arr = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
    if u_arr.ndim:
        flat = [grid_convex_conjugate(d, ui_, vi_, t, radius, step)
                for ui_, vi_ in zip(u_arr.ravel(), v_arr.ravel())]
        return np.array(flat).reshape(u_arr.shape)
    r = radius if radius is not None else CONJUGATE_BOX_SCALE * (1.0 + d.lipschitz)
    v1 = _box_extreme(d, float(u), float(v), t, r, step, -1.0)
    v2 = _box_extreme(d, float(u), float(v), t, 2.0 * r, step, -1.0)
    if v2 > v1 + max(1.0, 1e-6 * abs(v1)) or v1 > DIVERGENCE_THRESHOLD:
        return math.inf
    return v1


def fenchel_recover(d: Driver, x, pi, step: float = 1e-3, t: float = 0.0):
    """Biconjugation: rebuild d(t, x, pi) from its own conjugate.

    Concave drivers use min over the box grid of (x p + pi q - conj),
    convex drivers the max of (x u + pi v - conj); agreement with a direct
    evaluation is the catalogue's duality sanity check.
    """
    box = d.conjugate_box()
    g1 = box.axis_grid(0, step)[:, None]
    g2 = box.axis_grid(1, step)[None, :]
    if d.concave_conjugate_fn is not None or d.concave_in_yz:
        conj = np.asarray(concave_conjugate(d, g1, g2, t=t), dtype=float)
        finite = np.isfinite(conj)
        if not finite.any():
            raise ConjugateDomainError(f"empty conjugate domain for {d.name!r}")
        ps, qs = np.broadcast_arrays(g1, g2)
        ps, qs, cs = ps[finite], qs[finite], conj[finite]
        x = np.asarray(x, float)[..., None]
        pi = np.asarray(pi, float)[..., None]
        vals = x * ps + pi * qs - cs
        return np.min(vals, axis=-1)
    if d.convex_conjugate_fn is not None or d.convex_in_yz:
        conj = np.asarray(convex_conjugate(d, g1, g2, t=t), dtype=float)
        finite = np.isfinite(conj)
        if not finite.any():
            raise ConjugateDomainError(f"empty conjugate domain for {d.name!r}")
        us, vs = np.broadcast_arrays(g1, g2)
        us, vs, cs = us[finite], vs[finite], conj[finite]
        x = np.asarray(x, float)[..., None]
        pi = np.asarray(pi, float)[..., None]
        vals = x * us + pi * vs - cs
        return np.max(vals, axis=-1)
    raise DriverShapeError(f"driver {d.name!r} carries no usable shape flag")


# ---------------------------------------------------------------------------
# driver catalogue
# ---------------------------------------------------------------------------

def _point_domain(a: float, b: float, fill: float):
    """Conjugate of an affine driver: 0 at the coefficient pair, infinite away."""
    def conj(p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        hit = (p == a) & (q == b)
        out = np.where(hit, 0.0, fill)
        return out if out.ndim else float(out)
    return conj


def _segment_domain(kappa: float, fill: float):
    """Conjugate of +/- kappa*|z|: 0 on {0} x [-kappa, kappa], infinite away."""
    def conj(p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        inside = (p == 0.0) & (np.abs(q) <= kappa)
        out = np.where(inside, 0.0, fill)
        return out if out.ndim else float(out)
    return conj


def make_zero() -> Driver:
    return Driver(
        name="zero",
        fn=lambda t, y, z: 0.0 * (np.asarray(y, float) + np.asarray(z, float)),
        lipschitz_y=0.0,
        lipschitz_z=0.0,
        concave_in_yz=True,
        convex_in_yz=True,
        smooth=True,
        concave_conjugate_fn=_point_domain(0.0, 0.0, -math.inf),
        convex_conjugate_fn=_point_domain(0.0, 0.0, math.inf),
    )


def make_linear(a: float, b: float) -> Driver:
    a, b = float(a), float(b)
    return Driver(
        name="linear",
        fn=lambda t, y, z: a * np.asarray(y, float) + b * np.asarray(z, float),
        lipschitz_y=abs(a),
        lipschitz_z=abs(b),
        concave_in_yz=True,
        convex_in_yz=True,
        smooth=True,
        concave_conjugate_fn=_point_domain(a, b, -math.inf),
        convex_conjugate_fn=_point_domain(a, b, math.inf),
        params={"a": a, "b": b},
    )


def make_abs_z(kappa: float) -> Driver:
    """Convex kink driver +kappa*|z|."""
    kappa = float(kappa)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return Driver(
        name="abs_z",
        fn=lambda t, y, z: kappa * np.abs(np.asarray(z, float)),
        lipschitz_y=0.0,
        lipschitz_z=kappa,
        convex_in_yz=True,
        convex_conjugate_fn=_segment_domain(kappa, math.inf),
        params={"kappa": kappa},
    )


def make_neg_abs_z(kappa: float) -> Driver:
    """Concave kink driver -kappa*|z|."""
    kappa = float(kappa)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return Driver(
        name="neg_abs_z",
        fn=lambda t, y, z: -kappa * np.abs(np.asarray(z, float)),
        lipschitz_y=0.0,
        lipschitz_z=kappa,
        concave_in_yz=True,
        concave_conjugate_fn=_segment_domain(kappa, -math.inf),
        params={"kappa": kappa},
    )


def _logcosh(z):
    z = np.asarray(z, float)
    return np.abs(z) + np.log1p(np.exp(-2.0 * np.abs(z))) - LN2


def _atanh_entropy(u):
    """H(u) = u*atanh(u) + log(1 - u^2)/2, extended by ln 2 at |u| = 1."""
    u = np.asarray(u, float)
    inner = np.clip(u, -1.0 + 1e-15, 1.0 - 1e-15)
    h = inner * np.arctanh(inner) + 0.5 * np.log1p(-inner * inner)
    return np.where(np.abs(u) >= 1.0 - 1e-12, LN2, h)


def make_logcosh_z(kappa: float, sign: int = 1) -> Driver:
    """Smooth soft-|z| driver sign * kappa * log cosh(z) (Lipschitz kappa)."""
    kappa = float(kappa)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")

    def fn(t, y, z):
        return sign * kappa * _logcosh(z)

    def concave_conj(p, q):  # only valid for sign = -1
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        inside = (p == 0.0) & (np.abs(q) <= kappa)
        out = np.where(inside, -kappa * _atanh_entropy(q / kappa), -math.inf)
        return out if out.ndim else float(out)

    def convex_conj(u, v):  # only valid for sign = +1
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        inside = (u == 0.0) & (np.abs(v) <= kappa)
        out = np.where(inside, kappa * _atanh_entropy(v / kappa), math.inf)
        return out if out.ndim else float(out)

    return Driver(
        name="logcosh_z",
        fn=fn,
        lipschitz_y=0.0,
        lipschitz_z=kappa,
        concave_in_yz=(sign == -1),
        convex_in_yz=(sign == 1),
        smooth=True,
        concave_conjugate_fn=concave_conj if sign == -1 else None,
        convex_conjugate_fn=convex_conj if sign == 1 else None,
        params={"kappa": kappa, "sign": sign},
    )


def make_softplus_z(kappa: float) -> Driver:
    """Convex smooth driver kappa * (softplus(z) - ln 2); slope in (0, kappa)."""
    kappa = float(kappa)
    if kappa <= 0:
        raise ValueError("kappa must be positive")

    def fn(t, y, z):
        return kappa * (np.logaddexp(0.0, np.asarray(z, float)) - LN2)

    def convex_conj(u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        s = v / kappa
        inside = (u == 0.0) & (s >= 0.0) & (s <= 1.0)
        sc = np.clip(s, 1e-15, 1.0 - 1e-15)
        ent = sc * np.log(sc) + (1.0 - sc) * np.log1p(-sc)
        ent = np.where((s <= 0.0) | (s >= 1.0), 0.0, ent)
        out = np.where(inside, kappa * (ent + LN2), math.inf)
        return out if out.ndim else float(out)

    return Driver(
        name="softplus_z",
        fn=fn,
        lipschitz_y=0.0,
        lipschitz_z=kappa,
        convex_in_yz=True,
        smooth=True,
        convex_conjugate_fn=convex_conj,
        params={"kappa": kappa},
    )


DRIVER_BUILDERS = {
    "zero": (make_zero, ()),
    "linear": (make_linear, ("a", "b")),
    "abs_z": (make_abs_z, ("kappa",)),
    "neg_abs_z": (make_neg_abs_z, ("kappa",)),
    "logcosh_z": (make_logcosh_z, ("kappa", "sign")),
    "softplus_z": (make_softplus_z, ("kappa",)),
}


def make_driver(name: str, **params) -> Driver:
    """Catalogue factory; rejects unknown names and unknown parameters."""
    if name not in DRIVER_BUILDERS:
        raise ValueError(
            f"unknown driver {name!r}; known: {sorted(DRIVER_BUILDERS)}"
        )
    builder, allowed = DRIVER_BUILDERS[name]
    extra = set(params) - set(allowed)
    if extra:
        raise ValueError(f"driver {name!r} got unknown parameters {sorted(extra)}")
    return builder(**params)


# ---------------------------------------------------------------------------
# loss pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossPair:
    """Constraint map psi (nondecreasing, [0,1]-valued, -inf below zero)
    together with its right-inverse phi on [0,1].

    polar_fn is the exact polar transform of phi; polar_grad is its
    derivative when the polar is continuously differentiable, else None.
    """

    name: str
    phi_fn: Callable = field(repr=False)
    psi_fn: Callable = field(repr=False)
    polar_fn: Callable = field(repr=False)
    phi_continuous: bool
    phi_lipschitz: Optional[float]
    phi_convex: bool
    polar_grad: Optional[Callable] = field(default=None, repr=False)
    breakpoints: tuple = ()
    params: dict = field(default_factory=dict)

    def phi(self, m):
        return self.phi_fn(np.asarray(m, float))

    def psi(self, y):
        return self.psi_fn(np.asarray(y, float))

    def polar(self, l):
        return self.polar_fn(np.asarray(l, float))


def polar_transform(lp: LossPair, l):
    """Exact polar of the loss map: sup_m (m l - phi(m)) over [0,1]."""
    return lp.polar(l)


def polar_numeric(lp: LossPair, l, step: float = 1e-4):
    """Grid oracle for the polar transform."""
    m = np.arange(0.0, 1.0 + step / 2, step)
    vals = np.asarray(lp.phi(m), float)
    l = np.asarray(l, float)
    out = np.max(l[..., None] * m - vals, axis=-1)
    return out if out.ndim else float(out)


def _sup_inverse(knots_m: np.ndarray, knots_v: np.ndarray, y):
    """sup{m : phi(m) <= y} for a piecewise-linear nondecreasing phi."""
    y_arr = np.asarray(y, float)
    flat = np.atleast_1d(y_arr).ravel()
    idx = np.searchsorted(knots_v, flat, side="right") - 1
    # idx = largest knot index with value <= y; segment idx holds the crossing
    # because y < v[idx+1] forces that segment to rise
    i = np.clip(idx, 0, len(knots_m) - 2)
    rise = knots_v[i + 1] - knots_v[i]
    run = knots_m[i + 1] - knots_m[i]
    frac = np.clip((flat - knots_v[i]) / np.where(rise > 0.0, rise, 1.0), 0.0, 1.0)
    out = np.where(rise > 0.0, knots_m[i] + frac * run, knots_m[i])
    out = np.where((idx >= len(knots_m) - 1) | (flat >= knots_v[-1]),
                   knots_m[-1], out)
    # below phi(0) (in particular any y < 0) no threshold is attainable
    out = np.where(idx < 0, -np.inf, out)
    out = out.reshape(y_arr.shape) if y_arr.ndim else out
    return out if y_arr.ndim else float(out[0])


def make_piecewise_loss(name: str, knots, convex: bool) -> LossPair:
    """Loss pair from piecewise-linear phi knots ((m_i, v_i), nondecreasing)."""
    km = np.array([k[0] for k in knots], dtype=float)
    kv = np.array([k[1] for k in knots], dtype=float)
    if km[0] != 0.0 or km[-1] != 1.0:
        raise ValueError("phi knots must span [0, 1]")
    if np.any(np.diff(km) <= 0) or np.any(np.diff(kv) < 0):
        raise ValueError("phi knots must be strictly increasing in m, nondecreasing in value")
    if kv[0] < 0.0 or kv[-1] > 1.0:
        raise ValueError("phi must map into [0, 1]")
    slopes = np.diff(kv) / np.diff(km)
    lip = float(np.max(np.abs(slopes)))

    def phi(m):
        m = np.asarray(m, float)
        out = np.interp(m, km, kv)
        return out if out.ndim else float(out)

    def psi(y):
        return _sup_inverse(km, kv, y)

    def polar(l):
        l = np.asarray(l, float)
        # sup over [0,1] of a piecewise-linear function is attained at a knot
        out = np.max(l[..., None] * km - kv, axis=-1)
        return out if out.ndim else float(out)

    return LossPair(
        name=name,
        phi_fn=phi,
        psi_fn=psi,
        polar_fn=polar,
        phi_continuous=True,
        phi_lipschitz=lip,
        phi_convex=convex,
        polar_grad=None,  # piecewise-linear polar is kinked
        breakpoints=tuple(float(m) for m in km[1:-1]),
        params={"knots": tuple((float(a), float(b)) for a, b in knots)},
    )


def make_identity_loss() -> LossPair:
    return make_piecewise_loss("identity", [(0.0, 0.0), (1.0, 1.0)], convex=True)


def make_call_spread_loss(lo: float = 0.3, hi: float = 0.7) -> LossPair:
    lo, hi = float(lo), float(hi)
    if not (0.0 < lo < hi < 1.0):
        raise ValueError("need 0 < lo < hi < 1")
    return make_piecewise_loss(
        "call_spread",
        [(0.0, 0.0), (lo, 0.0), (hi, 1.0), (1.0, 1.0)],
        convex=False,  # flat tail after the upper kink breaks convexity
    )


def make_s_shaped_loss() -> LossPair:
    """Nonconvex S-profile used by the convex-envelope checks."""
    return make_piecewise_loss(
        "s_shaped",
        [(0.0, 0.0), (0.4, 0.1), (0.6, 0.9), (1.0, 1.0)],
        convex=False,
    )


def make_power_loss(p: float = 2.0) -> LossPair:
    p = float(p)
    if p < 1.0:
        raise ValueError("power loss needs p >= 1")

    def phi(m):
        m = np.asarray(m, float)
        out = np.power(np.clip(m, 0.0, 1.0), p)
        return out if out.ndim else float(out)

    def psi(y):
        y = np.asarray(y, float)
        root = np.power(np.clip(y, 0.0, None), 1.0 / p)
        out = np.where(y < 0.0, -np.inf, np.minimum(root, 1.0))
        return out if out.ndim else float(out)

    def polar(l):
        l = np.asarray(l, float)
        # stationary point m* = (l/p)^(1/(p-1)) clipped into [0, 1]
        with np.errstate(invalid="ignore"):
            mstar = np.power(np.clip(l, 0.0, None) / p, 1.0 / (p - 1.0)) \
                if p > 1.0 else np.where(l >= 1.0, 1.0, 0.0)
        mstar = np.clip(np.where(np.isfinite(mstar), mstar, 0.0), 0.0, 1.0)
        out = np.maximum(np.maximum(l * mstar - mstar**p, 0.0), l - 1.0)
        return out if out.ndim else float(out)

    def polar_grad(l):
        l = np.asarray(l, float)
        if p > 1.0:
            mstar = np.clip(np.power(np.clip(l, 0.0, None) / p, 1.0 / (p - 1.0)),
                            0.0, 1.0)
        else:
            mstar = np.where(l >= 1.0, 1.0, 0.0)
        out = np.where(l <= 0.0, 0.0, mstar)
        return out if out.ndim else float(out)

    return LossPair(
        name="power",
        phi_fn=phi,
        psi_fn=psi,
        polar_fn=polar,
        phi_continuous=True,
        phi_lipschitz=p,
        phi_convex=True,
        polar_grad=polar_grad if p > 1.0 else None,
        breakpoints=(),
        params={"p": p},
    )


LOSS_BUILDERS = {
    "identity": (make_identity_loss, ()),
    "power": (make_power_loss, ("p",)),
    "call_spread": (make_call_spread_loss, ("lo", "hi")),
    "s_shaped": (make_s_shaped_loss, ()),
}


def make_loss(name: str, **params) -> LossPair:
    if name not in LOSS_BUILDERS:
        raise ValueError(f"unknown loss {name!r}; known: {sorted(LOSS_BUILDERS)}")
    builder, allowed = LOSS_BUILDERS[name]
    extra = set(params) - set(allowed)
    if extra:
        raise ValueError(f"loss {name!r} got unknown parameters {sorted(extra)}")
    return builder(**params)


def galois_violations(lp: LossPair, m_grid=None, y_grid=None) -> float:
    """Largest violation of psi(phi(m)) >= m and phi(psi(y)) <= y."""
    if m_grid is None:
        m_grid = np.linspace(0.0, 1.0, 401)
    if y_grid is None:
        y_grid = np.linspace(0.0, 1.0, 401)
    worst = 0.0
    lhs = np.asarray(lp.psi(lp.phi(m_grid)), float)
    worst = max(worst, float(np.max(m_grid - lhs)))
    psi_y = np.asarray(lp.psi(y_grid), float)
    ok = psi_y > -np.inf
    if ok.any():
        worst = max(worst, float(np.max(lp.phi(psi_y[ok]) - y_grid[ok])))
    return worst
