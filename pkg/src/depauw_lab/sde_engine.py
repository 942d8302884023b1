"""
Monte Carlo simulation of dX = b_DP(t, X) dt + nu dW on the field torus.

Paths are split into fixed-size chunks that run on a thread pool. Each path
draws from its own counter-based stream, keyed by the path index, so the
result does not depend on the number of workers.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .depauw_field import eval_bdp, stage_index
from .errors import DomainError, ResourceLimitError, StageCrossingError
from .exact_flow import flow_lift
from .models import (
    TRUNCATED,
    CustomInitial,
    DepauwField,
    Integrator,
    PathEnsemble,
    PointInitial,
    SdeConfig,
    TorusPoint,
)
from .random_streams import PURPOSE_INITIAL, PURPOSE_NOISE, CounterStream, uniform_points
from .torus import as_array, wrap

logger = logging.getLogger(__name__)

# relative slack when checking that a step stays inside one stage
_STAGE_TOL = 1e-12


# ============================================================================
# SINGLE STEPS
# ============================================================================


def brownian_increment(stream: CounterStream, dt: float, nu: float) -> np.ndarray:
    """Increments nu * (W_{t+dt} - W_t), one row per stream."""
    if dt <= 0:
        raise DomainError("dt must be positive")
    normals = stream.normal(2)
    return nu * math.sqrt(dt) * normals


def _check_step(field: DepauwField, t: float, dt: float) -> None:
    end = t + dt
    if t < 0 or end > field.horizon * (1 + _STAGE_TOL):
        raise DomainError(f"step [{t}, {end}] leaves [0, {field.horizon}]")
    k = int(stage_index(field, min(end, field.horizon)))
    if k == TRUNCATED:
        return
    low, _ = field.stage_interval(k)
    if t < low - _STAGE_TOL * field.horizon:
        raise StageCrossingError(f"step [{t}, {end}] crosses the breakpoint {low}")


def _advance(field: DepauwField, t: float, dt: float, lift: np.ndarray, dW, integrator: Integrator) -> np.ndarray:
    if integrator is Integrator.EULER_MARUYAMA:
        # Drift is read at the step midpoint so a step never mixes two stages.
        # Away from loop corners the scheme is exact; a corner overshoot costs O(dt).
        # The pointwise drift is zero on cell diagonals and in empty cells, so a
        # step that lands exactly on a diagonal, or overshoots a corner of an outer
        # loop into an empty cell, stalls there and the error stops shrinking.
        drift = eval_bdp(field, min(t + 0.5 * dt, field.horizon), lift)
        return lift + dt * drift + dW
    return flow_lift(field, t, min(t + dt, field.horizon), lift) + dW


def step(
    field: DepauwField,
    t: float,
    dt: float,
    x,
    dW,
    integrator: Integrator = Integrator.DRIFT_SPLITTING,
):
    """
    One step of the scheme from t to t + dt.

    euler_maruyama: x + dt b(t, x) + dW, with the drift of the step's stage.
    drift_splitting: the exact flow of the step followed by the noise.
    """
    _check_step(field, t, dt)
    moved = wrap(_advance(field, t, dt, as_array(x), np.asarray(dW, dtype=float), integrator), field.period)
    if isinstance(x, TorusPoint):
        return TorusPoint.from_array(moved, side=field.period)
    return moved


# ============================================================================
# TIME GRID
# ============================================================================


def build_time_grid(field: DepauwField, config: SdeConfig) -> np.ndarray:
    """
    Step times from 0 to T.

    Nodes are placed at 0, the truncation time, every dyadic breakpoint and
    every save time; inside stage k each gap is cut into equal steps no longer
    than min(dt_base, stage_length / steps_per_stage_min).
    """
    horizon = field.horizon
    if config.save_times[-1] > horizon:
        raise DomainError(f"save time {config.save_times[-1]} beyond the horizon {horizon}")
    nodes = sorted({0.0, horizon, field.truncation_time, *field.breakpoints(), *config.save_times})
    nodes = [t for t in nodes if 0.0 <= t <= horizon]
    pieces = [np.array([0.0])]
    for a, b in zip(nodes, nodes[1:]):
        k = int(stage_index(field, b))
        if k == TRUNCATED:
            dt = config.dt_base
        else:
            low, high = field.stage_interval(k)
            dt = min(config.dt_base, (high - low) / config.steps_per_stage_min)
        n_steps = max(1, math.ceil((b - a) / dt - 1e-9))
        pieces.append(np.linspace(a, b, n_steps + 1)[1:])
    return np.concatenate(pieces)


def estimate_memory_mb(config: SdeConfig, n_steps: int) -> float:
    n_save = len(config.save_times)
    per_path = 2 * n_save * 2 * 8
    if config.record_full_paths:
        per_path += (n_steps + 1) * 2 * 8
    # working arrays of one chunk per worker
    working = min(config.chunk_size, config.n_paths) * config.workers * 2 * 8 * 8
    return (config.n_paths * per_path + working) / 2**20


# ============================================================================
# SIMULATION
# ============================================================================


def initial_points(field: DepauwField, config: SdeConfig, path_ids: np.ndarray) -> np.ndarray:
    side = field.period
    law = config.initial
    if isinstance(law, PointInitial):
        return np.tile(wrap(np.asarray(law.x0, dtype=float), side), (path_ids.size, 1))
    if isinstance(law, CustomInitial):
        return wrap(np.asarray(law.points, dtype=float)[path_ids], side)
    return uniform_points(config.seed, PURPOSE_INITIAL, path_ids, side=side)


def _run_chunk(
    field: DepauwField,
    config: SdeConfig,
    grid: np.ndarray,
    save_index: np.ndarray,
    path_ids: np.ndarray,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Integrate one chunk of paths; returns lifts at save times and, optionally, at every step."""
    lift = initial_points(field, config, path_ids)
    stream = CounterStream(config.seed, PURPOSE_NOISE, path_ids)
    saved = np.empty((path_ids.size, save_index.size, 2))
    full = np.empty((path_ids.size, grid.size, 2)) if config.record_full_paths else None

    next_save = 0
    for i in range(grid.size):
        if i > 0:
            dt = grid[i] - grid[i - 1]
            if config.nu > 0:
                dW = brownian_increment(stream, dt, config.nu)
            else:
                dW = 0.0
            lift = _advance(field, grid[i - 1], dt, lift, dW, config.integrator)
        if full is not None:
            full[:, i] = lift
        while next_save < save_index.size and save_index[next_save] == i:
            saved[:, next_save] = lift
            next_save += 1
    logger.debug("chunk of %d paths starting at %d done", path_ids.size, int(path_ids[0]))
    return saved, full


def simulate(field: DepauwField, config: SdeConfig) -> PathEnsemble:
    """
    Sample config.n_paths paths of the SDE and record them at the save times.

    Memory is estimated before any work; a run above config.max_memory_mb
    raises ResourceLimitError.
    """
    grid = build_time_grid(field, config)
    save_times = np.asarray(config.save_times, dtype=float)
    save_index = np.searchsorted(grid, save_times)
    if np.any(save_index >= grid.size) or not np.allclose(grid[save_index], save_times, rtol=0, atol=1e-12):
        raise DomainError("save times must lie on the step grid")

    needed = estimate_memory_mb(config, grid.size - 1)
    if needed > config.max_memory_mb:
        raise ResourceLimitError(f"run needs about {needed:.0f} MB, limit is {config.max_memory_mb:.0f} MB")

    logger.info(
        "simulating %d paths, nu=%s, %d steps, integrator=%s, workers=%d",
        config.n_paths,
        config.nu,
        grid.size - 1,
        config.integrator.value,
        config.workers,
    )
    started = time.perf_counter()

    chunks = [
        np.arange(start, min(start + config.chunk_size, config.n_paths), dtype=np.int64)
        for start in range(0, config.n_paths, config.chunk_size)
    ]
    lifts = np.empty((config.n_paths, save_times.size, 2))
    full_lifts = np.empty((config.n_paths, grid.size, 2)) if config.record_full_paths else None

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = pool.map(lambda ids: _run_chunk(field, config, grid, save_index, ids), chunks)
        for ids, (saved, full) in zip(chunks, results):
            lifts[ids] = saved
            if full_lifts is not None:
                full_lifts[ids] = full

    wall_time = time.perf_counter() - started
    logger.info("simulation finished in %.2f s", wall_time)
    return PathEnsemble(
        config=config,
        field=field,
        save_times=save_times,
        positions=wrap(lifts, field.period),
        lifts=lifts,
        full_times=grid if config.record_full_paths else None,
        full_lifts=full_lifts,
        wall_time_s=wall_time,
    )
