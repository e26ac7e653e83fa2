"""Dual certificates: adjoint panels, candidate search, duality gaps."""

import math

import numpy as np
import pytest

from weakbsde.drivers import make_driver, make_loss
from weakbsde.dual import (DualControls, DualFeasibilityError, dual_bound,
                           dual_objective, dual_value, first_order_residuals)
from weakbsde.lattice import build_lattice
from weakbsde.primal import PrimalScenario, primal_value_dp, value_curve


def test_dual_controls_validation():
    z3 = np.zeros(3)
    with pytest.raises(DualFeasibilityError):
        DualControls(-1.0, z3, z3, z3, z3)
    with pytest.raises(DualFeasibilityError):
        DualControls(0.0, z3, z3, z3, z3)
    with pytest.raises(DualFeasibilityError):
        DualControls(1.0, z3, np.zeros(2), z3, z3)
    dc = DualControls(1.5, z3, z3, z3, z3)
    assert dc.steps == 3
    with pytest.raises(ValueError):
        dc.value_noise[0] = 1.0  # profiles are frozen


def test_dual_controls_do_not_capture_caller_arrays():
    mine = np.zeros(4)
    DualControls(1.0, mine, mine, mine, mine)
    mine[0] = 7.0  # caller's array must stay writeable


def test_zeros_factory_and_objective_equals_polar():
    lat = build_lattice(1.0, 6)
    lp = make_loss("power", p=2.0)
    zero = make_driver("zero")
    for l in (0.5, 1.0, 1.7, 3.0):
        dc = DualControls.zeros(lat, slope=l)
        got = dual_objective(lat, dc, zero, zero, lp)
        assert got == pytest.approx(float(lp.polar(l)), abs=1e-14)


def test_excessive_noise_breaks_positivity():
    lat = build_lattice(1.0, 3)
    dc = DualControls(1.0, np.zeros(3), np.full(3, 5.0), np.zeros(3),
                      np.zeros(3))
    with pytest.raises(DualFeasibilityError, match="margin"):
        dual_objective(lat, dc, make_driver("zero"), make_driver("zero"),
                       make_loss("power", p=2.0))


def test_dual_value_is_a_single_evaluation_for_point_domains():
    # zero drivers give point conjugate domains: nothing to search over
    lat = build_lattice(1.0, 8)
    res = dual_value(lat, 1.0, make_driver("zero"), make_driver("zero"),
                     make_loss("power", p=2.0))
    assert res["n_evaluations"] == 1
    assert res["value"] == pytest.approx(0.25, abs=1e-14)


def test_dual_value_search_never_goes_above_the_start():
    lat = build_lattice(1.0, 6)
    f = make_driver("neg_abs_z", kappa=0.3)
    g = make_driver("abs_z", kappa=0.2)
    lp = make_loss("power", p=2.0)
    for l in (0.6, 1.0, 1.4):
        res = dual_value(lat, l, f, g, lp)
        start = dual_objective(lat, DualControls.zeros(lat, l), f, g, lp)
        assert res["value"] <= start + 1e-14
        assert res["n_evaluations"] >= 1


def test_weak_duality_against_dp_values():
    """Every (l, certificate) pair evaluated during the search is a genuine
    lower-bound certificate: l*m - X0 <= primal value."""
    lat = build_lattice(1.0, 6)
    f = make_driver("neg_abs_z", kappa=0.3)
    g = make_driver("abs_z", kappa=0.2)
    lp = make_loss("power", p=2.0)
    sc = PrimalScenario(lattice=lat, driver_f=f, driver_g=g, loss=lp,
                        grid_size=161, n_a=13)
    surf = primal_value_dp(sc)
    for m in (0.3, 0.5, 0.7):
        primal = float(value_curve(surf, [m])[0])
        res = dual_bound(lat, f, g, lp, m)
        for l, certificate in res["trace"]:
            assert l * m - certificate <= primal + 1e-9
        assert res["bound"] <= primal + 1e-9
        assert res["bound"] == pytest.approx(m * m, abs=1e-6)


def test_dual_bound_matches_polar_maximum_for_zero_drivers():
    lat = build_lattice(1.0, 8)
    zero = make_driver("zero")
    lp = make_loss("power", p=2.0)
    res = dual_bound(lat, zero, zero, lp, 0.4)
    # sup_l (l*m - l^2/4) = m^2 at l = 2m
    assert res["bound"] == pytest.approx(0.16, abs=1e-9)
    assert res["l_star"] == pytest.approx(0.8, abs=1e-4)
    assert res["n_slope_evaluations"] == len(res["trace"])
    ls = [l for l, _ in res["trace"]]
    assert min(ls) > 0.0 and max(ls) <= 4.0


def test_first_order_residuals_vanish_at_the_analytic_optimum():
    sc = PrimalScenario(lattice=build_lattice(1.0, 8),
                        driver_f=make_driver("zero"),
                        driver_g=make_driver("zero"),
                        loss=make_loss("power", p=2.0),
                        grid_size=201, n_a=21)
    surf = primal_value_dp(sc)
    dc = DualControls.zeros(sc.lattice, slope=1.0)  # l* = 2m at m = 0.5
    res = first_order_residuals(surf, dc, 0.5)
    for key in ("constraint_fenchel", "terminal_gradient", "cost_fenchel",
                "terminal_polar"):
        assert res[key] is not None
        assert abs(res[key]) <= 1e-2, (key, res[key])


def test_first_order_residuals_report_kinked_polars():
    sc = PrimalScenario(lattice=build_lattice(1.0, 6),
                        driver_f=make_driver("zero"),
                        driver_g=make_driver("zero"),
                        loss=make_loss("identity"),
                        grid_size=101, n_a=11)
    surf = primal_value_dp(sc)
    res = first_order_residuals(surf, DualControls.zeros(sc.lattice, 1.0),
                                0.5)
    assert res["terminal_gradient"] is None
    assert "note" in res
