#!/usr/bin/env python3
"""
Tests for the base cell field, its periodization, stages and checkerboards.
"""

import numpy as np
import pytest

from depauw_lab.depauw_field import (
    cell_of,
    checkerboard_distance,
    eval_bdp,
    eval_u,
    eval_w,
    field_bound,
    grid_centers,
    rho_bar,
    sample_field_grid,
    stage_index,
    stage_of,
    truncate,
)
from depauw_lab.errors import DomainError
from depauw_lab.models import TRUNCATED, CellAddress, CheckerboardDensity, DepauwField, TorusPoint


@pytest.mark.parametrize(
    "xi, expected",
    [
        ((0.25, 0.10), (0.0, 1.0)),
        ((0.10, 0.25), (-1.0, 0.0)),
        ((0.30, 0.30), (0.0, 0.0)),
        ((0.60, 0.10), (0.0, 0.0)),
        ((0.0, 0.0), (0.0, 0.0)),
    ],
)
def test_eval_w(xi, expected):
    assert eval_w(xi) == pytest.approx(expected)


def test_eval_w_is_vectorized():
    values = eval_w(np.array([[[0.25, 0.10], [0.10, 0.25]]]))
    assert values.shape == (1, 2, 2)
    assert values[0] == pytest.approx(np.array([[0.0, 1.0], [-1.0, 0.0]]))


@pytest.mark.parametrize(
    "x, expected",
    [
        ((1.25, 1.10), (0.0, 1.0)),
        ((1.25, 0.10), (0.0, 0.0)),
        ((0.25, 0.10), (0.0, 1.0)),
    ],
)
def test_eval_u(x, expected):
    assert eval_u(x) == pytest.approx(expected)


def test_eval_u_is_two_periodic():
    rng = np.random.default_rng(0)
    x = rng.uniform(0.0, 2.0, (1000, 2))
    for shift in ([2.0, 0.0], [0.0, 2.0], [1.0, 1.0]):
        assert np.allclose(eval_u(x + shift), eval_u(x))


@pytest.mark.parametrize(
    "t, expected",
    [
        (1.0, 0),
        (0.6, 0),
        (0.5, 1),
        (0.3, 1),
        (0.25, 2),
        (0.2, 2),
        (0.125, 3),
    ],
)
def test_stage_of(field, t, expected):
    assert stage_of(field, t) == expected


def test_stage_of_truncated_layer(field):
    assert stage_of(field, 1e-9) == TRUNCATED
    assert stage_of(field, field.truncation_time) == TRUNCATED


@pytest.mark.parametrize("t", [0.0, -0.1, 1.5])
def test_stage_of_out_of_range(field, t):
    with pytest.raises(DomainError):
        stage_of(field, t)


def test_stage_index_at_every_breakpoint():
    field = DepauwField(horizon=3.0, max_depth=20)
    ks = stage_index(field, np.array(field.breakpoints()[:-1]))
    assert ks.tolist() == list(range(21))


def test_eval_bdp_examples(field):
    assert eval_bdp(field, 0.6, (0.25, 0.10)) == pytest.approx([0.0, 1.0])
    assert eval_bdp(field, 0.3, (0.125, 0.05)) == pytest.approx([0.0, 1.0])
    assert eval_bdp(field, 1e-9, (0.25, 0.10)) == pytest.approx([0.0, 0.0])
    assert eval_bdp(field, 0.0, (0.25, 0.10)) == pytest.approx([0.0, 0.0])


def test_eval_bdp_speed_factor():
    field = DepauwField(horizon=2.0)
    # speed 1/T, stage 0 on (1, 2]
    assert eval_bdp(field, 1.5, (0.25, 0.10)) == pytest.approx([0.0, 0.5])


def test_eval_bdp_broadcasts_times(field):
    x = np.array([[0.25, 0.10], [0.125, 0.05]])
    values = eval_bdp(field, np.array([0.6, 0.3]), x)
    assert values == pytest.approx(np.array([[0.0, 1.0], [0.0, 1.0]]))


def test_eval_bdp_rejects_times_outside_horizon(field):
    with pytest.raises(DomainError):
        eval_bdp(field, 1.2, (0.1, 0.1))


def test_zero_drift_field_vanishes():
    field = DepauwField(zero_drift=True)
    assert eval_bdp(field, 0.6, (0.25, 0.10)) == pytest.approx([0.0, 0.0])
    assert field_bound(field) == 0.0


def test_truncate_switches_the_field_off(field):
    cut = truncate(field, 0.5)
    assert eval_bdp(cut, 0.3, (0.125, 0.05)) == pytest.approx([0.0, 0.0])
    assert eval_bdp(cut, 0.6, (0.25, 0.10)) == pytest.approx([0.0, 1.0])
    assert cut.truncation_time == 0.5
    with pytest.raises(DomainError):
        truncate(field, 2.0)


def test_field_bound(field):
    assert field_bound(field) == pytest.approx(2.0)
    assert field_bound(DepauwField(horizon=4.0, speed_scale=3.0)) == pytest.approx(1.5)


def test_divergence_free_away_from_diagonals():
    rng = np.random.default_rng(1)
    xi = rng.uniform(-0.45, 0.45, (2000, 2))
    a1, a2 = np.abs(xi[:, 0]), np.abs(xi[:, 1])
    xi = xi[np.abs(a1 - a2) > 1e-3]
    h = 1e-6
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    div = (eval_w(xi + e1)[:, 0] - eval_w(xi - e1)[:, 0] + eval_w(xi + e2)[:, 1] - eval_w(xi - e2)[:, 1]) / (2 * h)
    assert np.max(np.abs(div)) < 1e-6


# ============================================================================
# CELLS AND CHECKERBOARDS
# ============================================================================


@pytest.mark.parametrize(
    "stage, x, center, filled",
    [
        (0, (0.25, 0.10), (0, 0), True),
        (0, (0.75, 0.10), (1, 0), False),
        (1, (0.30, 0.05), (1, 0), False),
    ],
)
def test_cell_of(stage, x, center, filled):
    cell = cell_of(stage, np.array(x))
    assert cell.center == center
    assert cell.filled is filled


def test_cell_of_accepts_torus_points():
    cell = cell_of(0, TorusPoint(x1=1.25, x2=1.10, side=2.0))
    assert cell.center == (1, 1)
    assert cell.filled


def test_cell_address_parity_is_validated():
    with pytest.raises(ValueError):
        CellAddress(stage=0, center=(1, 0), filled=True)


def test_rho_bar_examples():
    assert rho_bar(CheckerboardDensity(scale=0, phase=0), (0.5, 0.5)) == 0
    assert rho_bar(CheckerboardDensity(scale=0, phase=0), (1.5, 0.5)) == 1
    assert rho_bar(CheckerboardDensity(scale=1, phase=1), (0.1, 0.1)) == 1


def test_rho_bar_complement():
    rng = np.random.default_rng(2)
    x = rng.uniform(0.0, 2.0, (500, 2))
    density = CheckerboardDensity(scale=3, phase=0)
    total = rho_bar(density, x) + rho_bar(density.complement(), x)
    assert np.all(total == 1)


def test_checkerboard_distance():
    assert checkerboard_distance(0, np.array([0.25, 0.9])) == pytest.approx(0.1)
    assert checkerboard_distance(1, np.array([0.25, 0.25])) == pytest.approx(0.25)


# ============================================================================
# GRID EXPORT
# ============================================================================


def test_grid_centers():
    centers = grid_centers(2, 2.0)
    assert centers.tolist() == [[0.5, 0.5], [0.5, 1.5], [1.5, 0.5], [1.5, 1.5]]


def test_sample_field_grid_matches_eval_bdp(field):
    points, values = sample_field_grid(field, 0.6, 2)
    assert points.shape == (4, 2)
    assert values == pytest.approx(eval_bdp(field, 0.6, points))


def test_sample_field_grid_below_truncation(field):
    _, values = sample_field_grid(field, 1e-9, 8)
    assert np.all(values == 0.0)
