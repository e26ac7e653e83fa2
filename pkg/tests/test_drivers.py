"""Driver catalogue, Fenchel conjugates, and loss pairs."""

import math

import numpy as np
import pytest

from weakbsde.drivers import (DRIVER_BUILDERS, LOSS_BUILDERS, LossPair,
                              concave_conjugate, convex_conjugate,
                              fenchel_recover, galois_violations, make_driver,
                              make_loss, polar_numeric)


def test_unknown_driver_and_parameters_rejected():
    with pytest.raises(ValueError, match="unknown driver"):
        make_driver("quadratic")
    with pytest.raises(ValueError, match="unknown parameters"):
        make_driver("abs_z", kappa=0.3, slope=1.0)
    with pytest.raises(ValueError):
        make_driver("abs_z", kappa=-0.1)


def test_every_catalogue_driver_builds_and_evaluates():
    samples = {
        "zero": {}, "linear": {"a": 0.1, "b": 0.2}, "abs_z": {"kappa": 0.3},
        "neg_abs_z": {"kappa": 0.3}, "logcosh_z": {"kappa": 0.5},
        "softplus_z": {"kappa": 0.4},
    }
    assert set(samples) == set(DRIVER_BUILDERS)
    z = np.linspace(-2.0, 2.0, 9)
    for name, params in samples.items():
        d = make_driver(name, **params)
        out = np.asarray(d.fn(0.0, np.zeros_like(z), z), float)
        assert out.shape == z.shape
        assert np.all(np.isfinite(out))


def test_abs_z_conjugate_segment():
    d = make_driver("abs_z", kappa=0.3)
    # domain is the segment u = 0, |v| <= kappa, value 0 on it
    assert convex_conjugate(d, 0.0, 0.0) == 0.0
    assert convex_conjugate(d, 0.0, 0.3) == 0.0
    assert convex_conjugate(d, 0.0, -0.3) == 0.0
    assert convex_conjugate(d, 0.0, 0.31) == math.inf
    assert convex_conjugate(d, 0.05, 0.0) == math.inf
    box = d.conjugate_box()
    assert box.half_width_y == 0.0
    assert box.half_width_z == 0.3


def test_neg_abs_z_concave_conjugate_segment():
    d = make_driver("neg_abs_z", kappa=0.3)
    assert concave_conjugate(d, 0.0, 0.2) == 0.0
    assert concave_conjugate(d, 0.0, 0.4) == -math.inf
    assert concave_conjugate(d, 0.1, 0.0) == -math.inf


def test_linear_driver_conjugate_is_a_point():
    d = make_driver("linear", a=0.1, b=0.2)
    assert concave_conjugate(d, 0.1, 0.2) == 0.0
    assert concave_conjugate(d, 0.1, 0.25) == -math.inf
    assert convex_conjugate(d, 0.1, 0.2) == 0.0
    box = d.conjugate_box()
    assert (box.half_width_y, box.half_width_z) == (0.1, 0.2)


def test_softplus_conjugate_value_at_origin():
    kappa = 0.4
    d = make_driver("softplus_z", kappa=kappa)
    # sup_z (0 - f(z)) is attained in the z -> -inf limit at kappa * ln 2
    assert convex_conjugate(d, 0.0, 0.0) == pytest.approx(kappa * math.log(2))
    # the entropy term cancels the ln 2 exactly at the half-slope point
    assert convex_conjugate(d, 0.0, 0.5 * kappa) == pytest.approx(0.0,
                                                                  abs=1e-12)
    assert convex_conjugate(d, 0.0, kappa) == pytest.approx(kappa *
                                                            math.log(2))
    assert convex_conjugate(d, 0.0, 1.1 * kappa) == math.inf


def test_fenchel_recover_roundtrips_smooth_drivers():
    z = np.linspace(-1.5, 1.5, 13)
    for name, params in (("logcosh_z", {"kappa": 0.5}),
                         ("softplus_z", {"kappa": 0.4})):
        d = make_driver(name, **params)
        direct = np.asarray(d.fn(0.0, np.zeros_like(z), z), float)
        via_conjugate = np.array([fenchel_recover(d, 0.0, float(zz))
                                  for zz in z])
        np.testing.assert_allclose(via_conjugate, direct, atol=5e-4)


def test_unknown_loss_and_parameters_rejected():
    with pytest.raises(ValueError, match="unknown loss"):
        make_loss("huber")
    with pytest.raises(ValueError, match="unknown parameters"):
        make_loss("identity", slope=2.0)
    with pytest.raises(ValueError):
        make_loss("power", p=0.5)
    with pytest.raises(ValueError):
        make_loss("call_spread", lo=0.7, hi=0.3)


def test_power_loss_frozen_values():
    lp = make_loss("power", p=2.0)
    assert lp.phi(0.5) == 0.25
    assert lp.psi(0.25) == 0.5
    assert lp.psi(-0.1) == -math.inf
    assert lp.psi(4.0) == 1.0
    # polar: l^2/4 on [0, 2], l - 1 beyond, 0 below 0
    assert lp.polar(1.0) == pytest.approx(0.25)
    assert lp.polar(2.0) == pytest.approx(1.0)
    assert lp.polar(3.0) == pytest.approx(2.0)
    assert lp.polar(-1.0) == pytest.approx(0.0)
    assert lp.polar_grad(1.0) == pytest.approx(0.5)
    assert lp.phi_convex


def test_s_shaped_loss_frozen_values():
    lp = make_loss("s_shaped")
    assert not lp.phi_convex
    assert lp.breakpoints == (0.4, 0.6)
    assert lp.phi(0.4) == pytest.approx(0.1)
    assert lp.phi(0.5) == pytest.approx(0.5)
    assert lp.psi(0.5) == pytest.approx(0.5)
    assert lp.psi(0.05) == pytest.approx(0.2)  # inside the shallow first leg


def test_call_spread_flat_segments_resolve_to_the_right_edge():
    lp = make_loss("call_spread", lo=0.3, hi=0.7)
    # phi is 0 on [0, 0.3]; the sup-inverse of 0 is the segment's right end
    assert lp.psi(0.0) == pytest.approx(0.3)
    assert lp.psi(1.0) == pytest.approx(1.0)
    assert lp.psi(0.5) == pytest.approx(0.5)
    assert lp.phi(0.5) == pytest.approx(0.5)
    assert lp.phi(0.2) == 0.0


def test_psi_accepts_matrix_input():
    # the leaf-search oracle feeds (candidates, leaves) panels through psi
    lp = make_loss("s_shaped")
    y = np.array([[-0.5, 0.0, 0.05], [0.5, 0.95, 2.0]])
    out = lp.psi(y)
    assert out.shape == y.shape
    assert out[0, 0] == -math.inf
    assert out[1, 2] == 1.0
    flat = np.array([lp.psi(float(v)) for v in y.ravel()])
    np.testing.assert_array_equal(out.ravel(), flat)


def test_galois_inequalities_hold_for_all_losses():
    built = {
        "identity": {}, "power": {"p": 2.0},
        "call_spread": {"lo": 0.3, "hi": 0.7}, "s_shaped": {},
    }
    assert set(built) == set(LOSS_BUILDERS)
    for name, params in built.items():
        lp = make_loss(name, **params)
        assert galois_violations(lp) <= 1e-12, name


def test_polar_matches_grid_oracle():
    rng = np.random.default_rng(11)
    for name, params in (("identity", {}), ("power", {"p": 2.0}),
                         ("s_shaped", {}),
                         ("call_spread", {"lo": 0.3, "hi": 0.7})):
        lp = make_loss(name, **params)
        ls = rng.uniform(0.0, 4.0, 25)
        exact = np.asarray(lp.polar(ls), float)
        grid = np.asarray(polar_numeric(lp, ls, step=1e-4), float)
        np.testing.assert_allclose(exact, grid, atol=5e-4)
        # the polar dominates every (m, phi(m)) pair by construction
        m = rng.uniform(0.0, 1.0, 40)
        worst = np.max(ls[:, None] * m[None, :]
                       - np.asarray(lp.phi(m), float)[None, :]
                       - exact[:, None])
        assert worst <= 1e-12
