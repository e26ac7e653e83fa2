"""Grid, adapted-field, and path-enumeration plumbing."""

import numpy as np
import pytest

from weakbsde.lattice import (MAX_LEVELS, AdaptedField, LatticeError, TimeGrid,
                              build_lattice, cond_expect, enumerate_paths,
                              half_sum, leaf_nodes, path_expectation, path_node,
                              prefix_up_counts, sign_matrix)


def test_time_grid_times_and_offset():
    grid = TimeGrid(1.0, 4)
    assert grid.dt == 0.25
    np.testing.assert_allclose(grid.times, [0.0, 0.25, 0.5, 0.75, 1.0])

    shifted = TimeGrid(0.5, 4, step_offset=2)
    assert shifted.dt == 0.125
    np.testing.assert_allclose(shifted.times,
                               [0.25, 0.375, 0.5, 0.625, 0.75])


def test_build_lattice_level_guard():
    build_lattice(1.0, 1)
    build_lattice(1.0, MAX_LEVELS)
    with pytest.raises(LatticeError):
        build_lattice(1.0, 0)
    with pytest.raises(LatticeError):
        build_lattice(1.0, MAX_LEVELS + 1)
    with pytest.raises(LatticeError):
        build_lattice(-1.0, 4)


def test_brownian_values_are_centered_multiples_of_sqrt_dt():
    lat = build_lattice(1.0, 3)
    sq = lat.sqrt_dt
    np.testing.assert_allclose(lat.brownian_values(2),
                               [-2.0 * sq, 0.0, 2.0 * sq])
    np.testing.assert_allclose(lat.brownian_values(0), [0.0])
    # level k holds k+1 nodes, value (2j - k) * sqrt_dt
    for k in range(4):
        vals = lat.brownian_values(k)
        assert vals.shape == (k + 1,)
        np.testing.assert_allclose(vals, (2 * np.arange(k + 1) - k) * sq)


def test_half_sum_matches_cond_expect_field():
    lat = build_lattice(1.0, 5)
    rng = np.random.default_rng(7)
    vals = rng.normal(size=6)
    field = AdaptedField.single(lat, 5, vals)
    down = cond_expect(lat, field)
    assert down.level_lo == 4
    np.testing.assert_allclose(down.at(4), half_sum(vals))
    np.testing.assert_allclose(half_sum(vals), 0.5 * (vals[1:] + vals[:-1]))


def test_adapted_field_shape_and_level_errors():
    lat = build_lattice(1.0, 3)
    with pytest.raises(LatticeError):
        AdaptedField.single(lat, 2, np.zeros(5))  # wrong width for level 2
    field = AdaptedField.single(lat, 2, np.zeros(3))
    with pytest.raises(LatticeError):
        field.at(1)  # below the stored range
    with pytest.raises(LatticeError):
        field.at(3)
    const = AdaptedField.constant(lat, 2, 0.5)
    np.testing.assert_allclose(const.at(2), [0.5, 0.5, 0.5])
    term = AdaptedField.terminal(lat, np.arange(4.0))
    assert term.level_lo == 3 and term.is_single_level


def test_from_node_function_evaluates_brownian_state():
    lat = build_lattice(1.0, 4)
    field = AdaptedField.from_node_function(lat, 4, np.tanh)
    np.testing.assert_allclose(field.at(4), np.tanh(lat.brownian_values(4)))


def test_sign_matrix_frozen_for_three_levels():
    mat = sign_matrix(3)
    assert mat.shape == (8, 3)
    np.testing.assert_array_equal(mat[0], [1, 1, 1])     # path id 0: all up
    np.testing.assert_array_equal(mat[7], [-1, -1, -1])  # all down
    np.testing.assert_array_equal(mat[5], [-1, 1, -1])
    # exactly half the entries in each column are up-moves
    np.testing.assert_array_equal(mat.sum(axis=0), [0, 0, 0])


def test_leaf_nodes_count_up_moves():
    leaves = leaf_nodes(3)
    np.testing.assert_array_equal(leaves, [3, 2, 2, 1, 2, 1, 1, 0])
    mat = sign_matrix(3)
    np.testing.assert_array_equal(leaves, (mat > 0).sum(axis=1))


def test_prefix_up_counts_matches_sign_matrix():
    counts = prefix_up_counts(2)
    np.testing.assert_array_equal(counts, [2, 1, 1, 0])
    np.testing.assert_array_equal(counts, (sign_matrix(2) > 0).sum(axis=1))


def test_path_node_walks_the_recombining_indices():
    lat = build_lattice(1.0, 3)
    paths = list(enumerate_paths(lat))
    assert len(paths) == 8
    for path in paths:
        j = 0
        for k in range(4):
            assert path_node(path, k) == j
            if k < 3:
                j += 1 if path[k] > 0 else 0


def test_path_expectation_equals_binomial_mean():
    lat = build_lattice(1.0, 6)
    rng = np.random.default_rng(42)
    for _ in range(20):
        vals = rng.normal(size=7)
        field = AdaptedField.single(lat, 6, vals)
        expected = vals
        for _ in range(6):
            expected = half_sum(expected)
        assert abs(path_expectation(lat, field) - expected[0]) < 1e-12
