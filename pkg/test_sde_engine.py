#!/usr/bin/env python3
"""
Tests for the counter-based streams, single SDE steps and the Monte Carlo driver.
"""

import numpy as np
import pytest

from depauw_lab.errors import DomainError, ResourceLimitError, StageCrossingError
from depauw_lab.exact_flow import flow_lift, flow_stage
from depauw_lab.models import (
    CustomInitial,
    DepauwField,
    Integrator,
    PointInitial,
    SdeConfig,
    TorusPoint,
)
from depauw_lab.random_streams import PURPOSE_NOISE, CounterStream, sample_uniform, uniforms
from depauw_lab.sde_engine import brownian_increment, build_time_grid, estimate_memory_mb, simulate, step
from depauw_lab.torus import minimal_displacement, wrap

X0 = (0.41421356237309515, 0.7320508075688772)


# ============================================================================
# RANDOM STREAMS
# ============================================================================


def test_uniforms_lie_in_the_open_interval():
    values = uniforms(7, PURPOSE_NOISE, np.arange(100_000), counter=0)
    assert np.all((values > 0.0) & (values < 1.0))
    assert values.mean() == pytest.approx(0.5, abs=0.01)


def test_streams_do_not_depend_on_batching():
    wide = CounterStream(5, PURPOSE_NOISE, np.arange(10))
    narrow = CounterStream(5, PURPOSE_NOISE, np.arange(6, 10))
    for _ in range(3):
        assert np.array_equal(wide.normal(2)[6:], narrow.normal(2))


def test_purposes_and_seeds_separate_streams():
    ids = np.arange(1000)
    assert not np.array_equal(uniforms(1, 1, ids, 0), uniforms(1, 2, ids, 0))
    assert not np.array_equal(uniforms(1, 1, ids, 0), uniforms(2, 1, ids, 0))


def test_skip_advances_the_counter():
    a = CounterStream(3, PURPOSE_NOISE, [0, 1])
    b = CounterStream(3, PURPOSE_NOISE, [0, 1])
    a.uniform(4)
    b.skip(4)
    assert np.array_equal(a.uniform(1), b.uniform(1))


# ============================================================================
# SINGLE STEPS
# ============================================================================


def test_brownian_increment_without_noise():
    stream = CounterStream(1, PURPOSE_NOISE, np.arange(4))
    assert np.all(brownian_increment(stream, 0.01, 0.0) == 0.0)


def test_brownian_increment_variance():
    stream = CounterStream(2, PURPOSE_NOISE, np.arange(1_000_000))
    increments = brownian_increment(stream, 0.01, 1.0)
    tolerance = 3 * np.sqrt(2 / 1e6) * 0.01
    for column in range(2):
        assert increments[:, column].var() == pytest.approx(0.01, abs=tolerance)


def test_brownian_increments_are_uncorrelated():
    stream = CounterStream(9, PURPOSE_NOISE, np.arange(1_000_000))
    first = brownian_increment(stream, 0.01, 0.5)
    second = brownian_increment(stream, 0.01, 0.5)
    columns = np.column_stack([first, second])
    corr = np.corrcoef(columns, rowvar=False)
    off_diagonal = corr[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off_diagonal) < 0.01), corr


def test_brownian_increment_rejects_nonpositive_dt():
    with pytest.raises(DomainError):
        brownian_increment(CounterStream(1, PURPOSE_NOISE, [0]), 0.0, 1.0)


def test_noiseless_splitting_step_is_the_exact_flow(field):
    x = np.array([0.3, 0.1])
    moved = step(field, 0.6, 0.05, x, np.zeros(2), Integrator.DRIFT_SPLITTING)
    assert moved == pytest.approx(flow_stage(field, 0, 0.6, 0.65, x), abs=1e-14)


def test_zero_drift_step_adds_the_noise():
    field = DepauwField(zero_drift=True)
    moved = step(field, 0.6, 0.01, np.array([1.95, 0.5]), np.array([0.1, -0.2]))
    assert moved == pytest.approx([0.05, 0.3])


def test_euler_step_example(field):
    moved = step(field, 0.6, 1e-3, np.array([0.25, 0.10]), np.zeros(2), Integrator.EULER_MARUYAMA)
    assert moved == pytest.approx([0.25, 0.101])


def test_step_keeps_torus_points(field):
    moved = step(field, 0.6, 1e-3, TorusPoint(x1=0.25, x2=0.10, side=2.0), np.zeros(2), Integrator.EULER_MARUYAMA)
    assert isinstance(moved, TorusPoint)


def test_step_across_a_breakpoint_is_refused(field):
    with pytest.raises(StageCrossingError):
        step(field, 0.49, 0.02, np.array([0.3, 0.1]), np.zeros(2))
    with pytest.raises(DomainError):
        step(field, 0.99, 0.02, np.array([0.3, 0.1]), np.zeros(2))


# ============================================================================
# TIME GRID
# ============================================================================


def test_time_grid_contains_breakpoints_and_save_times(shallow_field):
    config = SdeConfig(dt_base=1 / 64, save_times=[0.0, 0.3, 0.75, 1.0])
    grid = build_time_grid(shallow_field, config)
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert np.all(np.diff(grid) > 0)
    for t in shallow_field.breakpoints() + config.save_times:
        assert np.any(np.isclose(grid, t, rtol=0, atol=1e-15)), t


def test_time_grid_refines_short_stages(shallow_field):
    config = SdeConfig(dt_base=1 / 64, steps_per_stage_min=8)
    grid = build_time_grid(shallow_field, config)
    low, high = shallow_field.stage_interval(5)
    inside = grid[(grid > low) & (grid <= high)]
    assert inside.size >= 8


def test_time_grid_rejects_late_save_times():
    with pytest.raises(DomainError):
        build_time_grid(DepauwField(horizon=0.5, max_depth=3), SdeConfig(save_times=[1.0]))


# ============================================================================
# SIMULATION
# ============================================================================


def _config(**overrides) -> SdeConfig:
    values = {
        "nu": 0.05,
        "n_paths": 40,
        "dt_base": 1 / 256,
        "seed": 11,
        "save_times": [0.0, 0.5, 1.0],
    }
    values.update(overrides)
    return SdeConfig(**values)


def test_noiseless_paths_follow_the_exact_flow(shallow_field):
    config = _config(nu=0.0, n_paths=3, initial=PointInitial(x0=X0), save_times=[0.0, 0.25, 0.5, 1.0])
    ensemble = simulate(shallow_field, config)
    for j, t in enumerate(config.save_times):
        expected = wrap(flow_lift(shallow_field, 0.0, t, np.array(X0)), 2.0)
        deviation = minimal_displacement(ensemble.positions[:, j], expected, 2.0)
        assert np.max(np.abs(deviation)) < 1e-10


def test_simulation_is_reproducible(shallow_field):
    first = simulate(shallow_field, _config())
    second = simulate(shallow_field, _config())
    assert np.array_equal(first.positions, second.positions)


def test_simulation_does_not_depend_on_workers(shallow_field):
    serial = simulate(shallow_field, _config(workers=1, chunk_size=40))
    parallel = simulate(shallow_field, _config(workers=3, chunk_size=7))
    assert np.array_equal(serial.lifts, parallel.lifts)


def test_seed_changes_the_sample(shallow_field):
    a = simulate(shallow_field, _config(seed=1))
    b = simulate(shallow_field, _config(seed=2))
    assert not np.array_equal(a.positions, b.positions)


def test_uniform_initial_law(shallow_field):
    ensemble = simulate(shallow_field, _config(n_paths=500, save_times=[0.0]))
    start = ensemble.marginal(0.0)
    assert np.all((start >= 0.0) & (start < 2.0))
    assert start.mean(axis=0) == pytest.approx([1.0, 1.0], abs=0.1)


def test_custom_initial_law(shallow_field):
    points = sample_uniform(4, 5, side=2.0).tolist()
    ensemble = simulate(shallow_field, _config(n_paths=5, initial=CustomInitial(points=points)))
    assert ensemble.marginal(0.0) == pytest.approx(np.array(points))


def test_custom_initial_law_needs_one_point_per_path():
    with pytest.raises(ValueError):
        SdeConfig(n_paths=3, initial=CustomInitial(points=[(0.1, 0.1)]))


def test_full_paths_are_recorded(shallow_field):
    config = _config(n_paths=4, record_full_paths=True)
    ensemble = simulate(shallow_field, config)
    grid = build_time_grid(shallow_field, config)
    path = ensemble.path(2)
    assert len(path) == grid.size
    assert path.lift[-1] == pytest.approx(ensemble.lifts[2, -1])
    # consecutive lifted samples stay close: the lift is continuous
    assert np.max(np.abs(np.diff(path.lift, axis=0))) < 0.5


def test_memory_limit_is_checked_first(shallow_field):
    config = _config(n_paths=1000, max_memory_mb=1e-6)
    assert estimate_memory_mb(config, 100) > config.max_memory_mb
    with pytest.raises(ResourceLimitError):
        simulate(shallow_field, config)


def test_ensemble_marginal_lookup(shallow_field):
    ensemble = simulate(shallow_field, _config(n_paths=2))
    assert ensemble.time_index(0.5) == 1
    first, last = ensemble.pairs(0.0, 1.0)
    assert first.shape == last.shape == (2, 2)
    with pytest.raises(KeyError):
        ensemble.marginal(0.3)


# ============================================================================
# EULER-MARUYAMA CONVERGENCE
# ============================================================================

# one loop corner inside stage 0, reached between grid times for every dyadic dt
CORNER_START = (0.25, 0.125 - 1e-6)


def _euler_endpoint(field: DepauwField, x0, dt_base: float) -> np.ndarray:
    config = SdeConfig(
        nu=0.0,
        n_paths=1,
        dt_base=dt_base,
        integrator=Integrator.EULER_MARUYAMA,
        initial=PointInitial(x0=x0),
    )
    return simulate(field, config).marginal(1.0)[0]


def test_euler_error_halves_with_the_step():
    field = DepauwField(max_depth=0)
    exact = wrap(flow_lift(field, 0.0, 1.0, np.array(CORNER_START)), 2.0)
    steps = [2.0**-m for m in range(6, 11)]
    errors = []
    for dt in steps:
        end = _euler_endpoint(field, CORNER_START, dt)
        # the corner overshoot is carried into the loop radius
        assert end[1] - 0.25 == pytest.approx(dt - 1e-6, abs=1e-12)
        errors.append(float(np.linalg.norm(minimal_displacement(end, exact, 2.0))))
    orders = [np.log2(coarse / fine) for coarse, fine in zip(errors, errors[1:])]
    assert all(order >= 0.8 for order in orders), orders


def test_euler_stalls_on_a_diagonal():
    field = DepauwField(max_depth=0)
    # (0.25, 0) reaches the corner (0.25, 0.25) exactly on the dyadic grid
    for dt in (1 / 64, 1 / 256):
        assert _euler_endpoint(field, (0.25, 0.0), dt) == pytest.approx([0.25, 0.25])
    exact = wrap(flow_lift(field, 0.0, 1.0, np.array([0.25, 0.0])), 2.0)
    assert exact == pytest.approx([0.0, 0.25], abs=1e-12)
