"""Backward solver: reductions, oracles, ordering, corridor, path tree."""

import math

import numpy as np
import pytest

from weakbsde.bsde import (SchemeError, comparison_check, compute_corridor,
                           estimation_gap, exact_scheme_for, f_expectation,
                           monotone_step_ok, solve_bsde, solve_on_path_tree)
from weakbsde.drivers import make_driver, make_loss
from weakbsde.lattice import (AdaptedField, LatticeError, build_lattice,
                              half_sum, sign_matrix)


def test_zero_driver_reduces_to_iterated_averaging():
    lat = build_lattice(2.0, 6)
    rng = np.random.default_rng(3)
    vals = rng.normal(size=7)
    sol = solve_bsde(lat, make_driver("zero"), vals)
    expected = vals
    for k in range(5, -1, -1):
        expected = half_sum(expected)
        np.testing.assert_array_equal(sol.y.at(k), expected)
    np.testing.assert_allclose(sol.z.at(5),
                               (vals[1:] - vals[:-1]) / (2 * lat.sqrt_dt))


def test_linear_driver_explicit_closed_form():
    # f = a*y compounds the plain expectation by (1 + a*dt) each step
    d = make_driver("linear", a=0.1, b=0.0)
    lat = build_lattice(1.0, 10)
    sol = solve_bsde(lat, d, np.ones(11), scheme="explicit")
    assert sol.value_at_root() == pytest.approx(1.1046221254112045,
                                                rel=1e-15)
    # implicit compounds by 1/(1 - a*dt) instead
    sol_imp = solve_bsde(lat, d, np.ones(11), scheme="implicit")
    assert sol_imp.value_at_root() == pytest.approx((1 / 0.99) ** 10,
                                                    rel=1e-12)
    # both converge to e^{aT} from opposite sides
    assert sol.value_at_root() < math.exp(0.1) < sol_imp.value_at_root()


def test_schemes_agree_for_z_only_drivers():
    lat = build_lattice(1.0, 6)
    d = make_driver("abs_z", kappa=0.3)
    rng = np.random.default_rng(5)
    vals = rng.uniform(0.0, 1.0, 7)
    exp = solve_bsde(lat, d, vals, scheme="explicit")
    imp = solve_bsde(lat, d, vals, scheme="implicit")
    for k in range(7):
        np.testing.assert_allclose(exp.y.at(k), imp.y.at(k), atol=1e-15)
    assert exact_scheme_for(d) == "explicit"
    assert exact_scheme_for(make_driver("linear", a=0.1, b=0.0)) == "implicit"


def test_monotone_step_condition_enforced():
    lat = build_lattice(1.0, 4)  # sqrt_dt = 0.5
    d = make_driver("abs_z", kappa=3.0)  # 3 * 0.5 > 1
    assert not monotone_step_ok(lat, d)
    with pytest.raises(SchemeError, match="monotone step condition"):
        solve_bsde(lat, d, np.zeros(5), scheme="explicit")
    # refining the grid restores the condition
    fine = build_lattice(1.0, 16)
    assert monotone_step_ok(fine, d)
    solve_bsde(fine, d, np.zeros(17), scheme="explicit")


def test_terminal_validation():
    lat = build_lattice(1.0, 4)
    d = make_driver("zero")
    with pytest.raises(LatticeError):
        solve_bsde(lat, d, np.zeros(4))  # wrong width
    with pytest.raises(LatticeError):
        solve_bsde(lat, d, [0.0, 1.0, np.nan, 0.0, 1.0])
    with pytest.raises(SchemeError):
        solve_bsde(lat, d, np.zeros(5), scheme="midpoint")


def test_comparison_ordered_pairs_seeded():
    lat = build_lattice(1.0, 8)
    drivers = [make_driver("zero"), make_driver("abs_z", kappa=0.3),
               make_driver("neg_abs_z", kappa=0.3),
               make_driver("linear", a=0.1, b=0.05),
               make_driver("logcosh_z", kappa=0.5),
               make_driver("softplus_z", kappa=0.4)]
    rng = np.random.default_rng(17)
    worst = -math.inf
    for i in range(60):
        a = rng.uniform(0.0, 1.0, 9)
        b = rng.uniform(0.0, 1.0, 9)
        res = comparison_check(lat, drivers[i % len(drivers)],
                               np.minimum(a, b), np.maximum(a, b))
        worst = max(worst, res["max_violation"])
        assert res["ok"]
    assert worst <= 1e-14


def test_corridor_is_trivial_for_zero_driver():
    lat = build_lattice(1.0, 5)
    cor = compute_corridor(lat, make_driver("zero"))
    for k in range(6):
        np.testing.assert_array_equal(cor.floor.at(k), np.zeros(k + 1))
        np.testing.assert_array_equal(cor.ceiling.at(k), np.ones(k + 1))
    lo, hi = cor.bounds_at(3)
    np.testing.assert_array_equal(lo, np.zeros(4))
    np.testing.assert_array_equal(hi, np.ones(4))


def test_corridor_constants_survive_z_only_drivers():
    # E^f of a constant is that constant whenever f(t, y, 0) = 0
    lat = build_lattice(1.0, 5)
    cor = compute_corridor(lat, make_driver("neg_abs_z", kappa=0.3))
    np.testing.assert_allclose(cor.floor.at(0), [0.0], atol=1e-15)
    np.testing.assert_allclose(cor.ceiling.at(0), [1.0], atol=1e-15)
    np.testing.assert_allclose(cor.floor_z.at(2), np.zeros(3), atol=1e-15)


def test_f_expectation_is_single_level():
    lat = build_lattice(1.0, 6)
    field = f_expectation(lat, make_driver("abs_z", kappa=0.2),
                          np.linspace(0, 1, 7), k=2)
    assert field.is_single_level and field.level_lo == 2


def test_estimation_gap_one_step_is_exact_for_affine_terminal():
    # for xi = W the slope is 1, so E^g - E = kappa * dt on the nose
    lat = build_lattice(1.0, 4)
    g = make_driver("abs_z", kappa=0.3)
    xi = lat.brownian_values(3)
    res = estimation_gap(lat, g, xi, 2, 1)
    assert res["gap"] == pytest.approx(0.3 * lat.dt, rel=1e-12)
    assert res["window"] == pytest.approx(lat.dt)
    with pytest.raises(LatticeError):
        estimation_gap(lat, g, lat.brownian_values(4), 4, 1)


def test_estimation_gap_scales_with_window():
    lat = build_lattice(1.0, 16)
    g = make_driver("abs_z", kappa=0.3)
    gaps = []
    for span in (1, 2, 4):
        xi = np.tanh(lat.brownian_values(4 + span))
        gaps.append(estimation_gap(lat, g, xi, 4, span)["gap"])
    assert gaps[0] < gaps[1] < gaps[2]


def test_path_tree_matches_recombining_solver():
    lat = build_lattice(1.0, 6)
    rng = np.random.default_rng(23)
    paths_w = lat.sqrt_dt * np.cumsum(sign_matrix(6), axis=1)[:, -1]
    for d in (make_driver("zero"), make_driver("neg_abs_z", kappa=0.3)):
        for _ in range(10):
            coeffs = rng.normal(size=3)
            leaf = coeffs[0] + coeffs[1] * paths_w + coeffs[2] * paths_w**2
            term = coeffs[0] + coeffs[1] * lat.brownian_values(6) \
                + coeffs[2] * lat.brownian_values(6) ** 2
            root_tree = solve_on_path_tree(lat, d, leaf)
            root_lattice = solve_bsde(lat, d, term).value_at_root()
            assert abs(root_tree - root_lattice) <= 1e-13


def test_path_tree_batches_and_slopes():
    lat = build_lattice(1.0, 3)
    d = make_driver("zero")
    batch = np.arange(16.0).reshape(2, 8)
    roots = solve_on_path_tree(lat, d, batch)
    assert roots.shape == (2,)
    np.testing.assert_allclose(roots, batch.mean(axis=1))
    levels, slopes = solve_on_path_tree(lat, d, np.arange(8.0),
                                        with_slopes=True)
    assert [lv.shape[-1] for lv in levels] == [1, 2, 4, 8]
    assert [s.shape[-1] for s in slopes] == [1, 2, 4]
    with pytest.raises(LatticeError):
        solve_on_path_tree(lat, d, np.zeros(7))


def test_apriori_envelope_for_zero_driver_power_loss():
    from weakbsde.bsde import apriori_bound_field
    lat = build_lattice(1.0, 4)
    field = apriori_bound_field(lat, make_driver("zero"),
                                make_loss("power", p=2.0))
    for k in range(5):
        np.testing.assert_array_equal(field.at(k), np.ones(k + 1))
