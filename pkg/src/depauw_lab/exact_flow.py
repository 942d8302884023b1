"""
Closed-form regular Lagrangian flow of the Depauw field.

Inside a filled cell a point travels counterclockwise along the square loop
of its sup-norm radius r at perimeter speed 4r, so one loop takes exactly
two units of w-time and half a stage turns every filled cell by a quarter.
Empty cells do not move. The flow of the full field composes the stage
flows between the dyadic breakpoints.

Internally positions are carried as lifts in the covering plane so that
integral curves come out continuous; the public functions wrap them.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .depauw_field import checkerboard_distance, locate_cells, rho_bar, stage_index
from .errors import DomainError
from .models import (
    TRUNCATED,
    CheckerboardDensity,
    DepauwField,
    FlowQuery,
    LoopState,
    MassSplit,
    Path,
    PermutationReport,
    RefinementReport,
    TorusPoint,
)
from .random_streams import PURPOSE_CHECK, sample_uniform
from .torus import as_array, minimal_displacement, wrap

logger = logging.getLogger(__name__)

#: loop period in w-time (perimeter 8r at speed 4r)
LOOP_PERIOD = 2.0


# ============================================================================
# LOOP MECHANICS
# ============================================================================


def loop_state(xi) -> LoopState:
    """Perimeter coordinates of a single relative position."""
    xi = np.asarray(xi, dtype=float)
    radius, arc = _to_loop(xi)
    return LoopState(radius=float(radius), arc=float(arc))


def loop_position(state: LoopState) -> np.ndarray:
    return _from_loop(np.asarray(state.radius), np.asarray(state.arc))


def _to_loop(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x1, x2 = xi[..., 0], xi[..., 1]
    r = np.maximum(np.abs(x1), np.abs(x2))
    # edges in counterclockwise order, starting at the corner (r, -r)
    right = (x1 == r) & (x2 != r)
    top = (x2 == r) & (x1 != -r)
    left = (x1 == -r) & (x2 != -r)
    arc = np.select(
        [right, top, left],
        [x2 + r, 3.0 * r - x1, 5.0 * r - x2],
        default=7.0 * r + x1,
    )
    return r, arc


def _from_loop(r: np.ndarray, arc: np.ndarray) -> np.ndarray:
    side = 2.0 * r
    safe = np.where(side > 0, side, 1.0)
    edge = np.clip(np.floor(arc / safe), 0, 3)
    offset = arc - edge * side
    x1 = np.select([edge == 0, edge == 1, edge == 2], [r, r - offset, -r], default=-r + offset)
    x2 = np.select([edge == 0, edge == 1, edge == 2], [-r + offset, r, r - offset], default=-r)
    return np.stack([x1, x2], axis=-1)


def loop_advance(xi, tau_w) -> np.ndarray:
    """
    Move relative positions along their loops by tau_w units of w-time.

    xi has shape (..., 2); tau_w broadcasts against xi's leading shape and
    may be negative. The centre and points with sup norm >= 1/2 are fixed.
    """
    xi = np.asarray(xi, dtype=float)
    tau = np.asarray(tau_w, dtype=float)
    shape = np.broadcast_shapes(xi.shape[:-1], tau.shape)
    xi = np.broadcast_to(xi, shape + (2,))
    tau = np.broadcast_to(tau, shape)

    r, arc = _to_loop(xi)
    moving = (r > 0) & (r < 0.5)
    perimeter = 8.0 * r
    shifted = arc + 4.0 * r * np.mod(tau, LOOP_PERIOD)
    shifted = np.mod(shifted, np.where(moving, perimeter, 1.0))
    shifted = np.where(shifted >= perimeter, 0.0, shifted)
    moved = _from_loop(r, shifted)
    return np.where(moving[..., None], moved, xi)


# ============================================================================
# STAGE FLOWS
# ============================================================================


def _w_time(field: DepauwField, k: int, t0, t1):
    """w-time elapsed on stage k between t0 and t1, both clipped below at the truncation time."""
    tau = field.truncation_time
    return field.speed_factor * math.ldexp(1.0, k) * (np.maximum(t1, tau) - np.maximum(t0, tau))


def _stage_lift(field: DepauwField, k: int, t0, t1, lift) -> np.ndarray:
    """Lifted stage-k flow; t1 may be an array broadcast against the points."""
    if field.zero_drift:
        return np.broadcast_to(lift, np.broadcast_shapes(np.shape(lift), np.shape(t1) + (2,))).copy()
    scale = math.ldexp(1.0, k)
    _, xi, filled = locate_cells(np.asarray(lift) * scale)
    tau_w = np.where(filled, _w_time(field, k, t0, t1), 0.0)
    moved = loop_advance(xi, tau_w)
    return lift + (moved - xi) / scale


def _check_stage_times(field: DepauwField, k: int, t0: float, t1: float) -> None:
    if not 0 <= k <= field.max_depth:
        raise DomainError(f"stage {k} outside 0..{field.max_depth}")
    low, high = field.stage_interval(k)
    for t in (t0, t1):
        if not low <= t <= high:
            raise DomainError(f"t={t} outside the closure [{low}, {high}] of stage {k}")


def flow_stage(field: DepauwField, k: int, t0: float, t1: float, x):
    """Exact flow of stage k from t0 to t1, both in the closure of the stage interval."""
    _check_stage_times(field, k, t0, t1)
    points = as_array(x)
    moved = wrap(_stage_lift(field, k, t0, t1, points), field.period)
    return _like_input(x, moved, field.period)


def _segments(field: DepauwField, t_low: float, t_high: float) -> list[tuple[int, float, float]]:
    """(stage, start, end) pieces of [t_low, t_high] carrying motion, in increasing time."""
    tau = field.truncation_time
    cuts = [b for b in field.breakpoints() + [tau] if t_low < b < t_high]
    nodes = sorted({t_low, t_high, *cuts})
    pieces = []
    for a, b in zip(nodes, nodes[1:]):
        if b <= tau:
            continue
        k = int(stage_index(field, b))
        if k != TRUNCATED:
            pieces.append((k, a, b))
    return pieces


def flow_lift(field: DepauwField, t_from: float, t_to: float, lift) -> np.ndarray:
    lift = np.asarray(lift, dtype=float)
    if t_to == t_from:
        return lift.copy()
    low, high = min(t_from, t_to), max(t_from, t_to)
    pieces = _segments(field, low, high)
    if t_to < t_from:
        pieces = [(k, b, a) for k, a, b in reversed(pieces)]
    for k, a, b in pieces:
        lift = _stage_lift(field, k, a, b, lift)
    return lift


def _check_query(field: DepauwField, q: FlowQuery) -> None:
    for t in (q.t_from, q.t_to):
        if t > field.horizon:
            raise DomainError(f"t={t} outside [0, {field.horizon}]")


def flow(field: DepauwField, q: FlowQuery, x):
    """
    Transport x from q.t_from to q.t_to.

    Splits the time interval at the dyadic breakpoints and composes the stage
    flows in time order (reverse order for backward queries).
    """
    _check_query(field, q)
    moved = wrap(flow_lift(field, q.t_from, q.t_to, as_array(x)), field.period)
    return _like_input(x, moved, field.period)


def transport(field: DepauwField, t_from: float, t_to: float, x):
    return flow(field, FlowQuery(t_from=t_from, t_to=t_to), x)


def _like_input(x, moved: np.ndarray, side: float):
    if isinstance(x, TorusPoint):
        return TorusPoint.from_array(moved, side=side)
    return moved


# ============================================================================
# INTEGRAL CURVES
# ============================================================================


def stage_refined_grid(field: DepauwField, samples_per_stage: int = 64) -> np.ndarray:
    """
    Time grid on [0, T] with samples_per_stage uniform steps in every stage.

    The grid contains 0, the truncation time and every dyadic breakpoint.
    """
    if samples_per_stage < 1:
        raise DomainError("samples_per_stage must be at least 1")
    tau = field.truncation_time
    pieces = [np.array([0.0, tau])]
    for k in range(field.max_depth, -1, -1):
        low, high = field.stage_interval(k)
        if high <= tau:
            continue
        pieces.append(np.linspace(max(low, tau), high, samples_per_stage + 1))
    return np.unique(np.concatenate(pieces))


def integral_curve(field: DepauwField, x, grid) -> Path:
    """
    The integral curve from x at time 0, sampled on grid (which must cover [0, T]).

    Stages are processed coarse to fine in time order; inside a stage every
    grid time is reached in one closed-form step from the stage's entry point.
    """
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or times[0] != 0.0 or abs(times[-1] - field.horizon) > 1e-12 * field.horizon:
        raise DomainError("grid must start at 0 and end at the horizon")
    start = wrap(as_array(x), field.period)
    lift = np.tile(start, (times.size, 1))
    current = start.copy()
    tau = field.truncation_time
    for k in range(field.max_depth, -1, -1):
        low, high = field.stage_interval(k)
        if high <= tau:
            continue
        entry = max(low, tau)
        mask = (times > entry) & (times <= high)
        if np.any(mask):
            lift[mask] = _stage_lift(field, k, entry, times[mask], current)
        current = _stage_lift(field, k, entry, high, current)
    return Path(times=times, lift=lift, side=field.period)


def trajectory(field: DepauwField, x, times) -> np.ndarray:
    """Lifted exact trajectory through x at times[0], at the given monotone times."""
    times = np.asarray(times, dtype=float)
    lift = np.empty((times.size, 2))
    lift[0] = wrap(as_array(x), field.period)
    for i in range(1, times.size):
        lift[i] = flow_lift(field, times[i - 1], times[i], lift[i - 1])
    return lift


# ============================================================================
# TRANSPORTED CHECKERBOARDS
# ============================================================================


def dyadic_density(field: DepauwField, j: int) -> CheckerboardDensity:
    """Black density at the dyadic time T/2^j: parity of j XOR the 2^-j checkerboard."""
    return CheckerboardDensity(scale=j, phase=j % 2)


def rho_B(field: DepauwField, t, x):
    """
    Black density at (t, x).

    Points are carried forward to the end T/2^k of t's stage, where the
    dyadic formula applies; at dyadic times this is the formula itself.
    Inside the truncation layer the density is frozen at the finest dyadic
    checkerboard. The cutoff of a truncated field view is ignored: densities
    always describe the field down to its depth.
    """
    field = field.model_copy(update={"cutoff": None})
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0) or np.any(t_arr > field.horizon):
        raise DomainError(f"time outside (0, {field.horizon}]")
    points = as_array(x)
    k = np.broadcast_to(stage_index(field, t_arr), points.shape[:-1])
    t_b = np.broadcast_to(t_arr, points.shape[:-1])
    out = np.zeros(points.shape[:-1], dtype=np.int64)
    for stage in np.unique(k):
        mask = k == stage
        if stage == TRUNCATED:
            out[mask] = rho_bar(dyadic_density(field, field.max_depth + 1), points[mask])
            continue
        _, end = field.stage_interval(int(stage))
        ahead = _stage_lift(field, int(stage), t_b[mask], end, points[mask])
        out[mask] = rho_bar(dyadic_density(field, int(stage)), ahead)
    return int(out) if out.ndim == 0 else out


def rho_W(field: DepauwField, t, x):
    return 1 - rho_B(field, t, x)


def half_stage_map(field: DepauwField, k: int, x) -> np.ndarray:
    """Stage-k flow over its full interval T/2^(k+1) -> T/2^k."""
    low, high = field.stage_interval(k)
    return flow_stage(field, k, low, high, x)


def refinement_check(
    field: DepauwField,
    k: int,
    phase: int,
    points: np.ndarray | None = None,
    n_points: int = 100_000,
    seed: int = 0,
    margin: float = 1e-9,
) -> RefinementReport:
    """
    Compare the candidate checkerboard phase XOR rho_bar(2^(k+1) x) at T/2^(k+1),
    pushed through the stage-k flow, with the dyadic checkerboard at T/2^k.

    Points within `margin` of a checkerboard line before or after the push
    are skipped.
    """
    if points is None:
        points = sample_uniform(seed, n_points, side=field.period, purpose=PURPOSE_CHECK)
    pushed = half_stage_map(field, k, points)
    keep = (checkerboard_distance(k + 1, points) >= margin) & (checkerboard_distance(k, pushed) >= margin)
    candidate = CheckerboardDensity(scale=k + 1, phase=phase)
    before = rho_bar(candidate, points[keep])
    after = rho_bar(dyadic_density(field, k), pushed[keep])
    mismatches = int(np.count_nonzero(before != after))
    return RefinementReport(
        stage=k,
        phase=phase,
        n_checked=int(keep.sum()),
        n_skipped=int((~keep).sum()),
        mismatches=mismatches,
    )


def calibrate_phase(field: DepauwField, k: int = 0, n_points: int = 100_000, seed: int = 0) -> int:
    """
    The phase bit that makes the stage-(k+1) checkerboard refine into stage k.

    The result is relative to the phase of stage k itself; it is 1 for every
    stage under the counterclockwise quarter turn.
    """
    points = sample_uniform(seed, n_points, side=field.period, purpose=PURPOSE_CHECK)
    for phase in (0, 1):
        report = refinement_check(field, k, phase, points=points)
        if report.mismatches == 0:
            return (phase - dyadic_density(field, k).phase) % 2
    raise DomainError(f"no checkerboard phase refines stage {k}")


def mass_split(field: DepauwField, t: float, points) -> MassSplit:
    """Black and white fractions of a sample at time t."""
    points = np.atleast_2d(as_array(points))
    if points.shape[0] == 0:
        raise DomainError("mass_split needs at least one point")
    black = rho_B(field, t, points)
    n_black = int(np.count_nonzero(black))
    n = int(points.shape[0])
    return MassSplit(t=t, black=n_black / n, white=(n - n_black) / n, n_samples=n)


# ============================================================================
# PROPERTY (R): QUARTER TURNS OF THE HALF-STAGE MAP
# ============================================================================

_QUADRANT_SIGNS = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])


def permutation_check(
    field: DepauwField,
    k: int,
    points_per_subsquare: int = 1000,
    max_cells: int = 64,
    seed: int = 0,
) -> PermutationReport:
    """
    Check that the half-stage map of stage k turns every filled cell rigidly
    by a quarter and fixes every empty cell pointwise.

    Deviations are measured in scaled coordinates against both orientations;
    the better one is reported. Cells are taken in a fixed order from the
    fundamental domain, at most max_cells of them.
    """
    if not 0 <= k <= field.max_depth:
        raise DomainError(f"stage {k} outside 0..{field.max_depth}")
    scale = math.ldexp(1.0, k)
    cells_per_axis = int(round(field.period * scale))
    centers = np.array([(i, j) for i in range(cells_per_axis) for j in range(cells_per_axis)], dtype=float)
    centers = centers[:max_cells]
    filled = np.mod(centers.sum(axis=1), 2.0) == 0.0

    n = points_per_subsquare
    offsets = sample_uniform(seed, n * 4, side=0.5).reshape(4, n, 2) * _QUADRANT_SIGNS[:, None, :]
    xi = np.broadcast_to(offsets, (centers.shape[0], 4, n, 2))
    y = centers[:, None, None, :] + xi
    moved = half_stage_map(field, k, wrap(y / scale, field.period)) * scale
    xi_after = minimal_displacement(centers[:, None, None, :], moved, cells_per_axis)

    ccw = np.stack([-xi[..., 1], xi[..., 0]], axis=-1)
    cw = np.stack([xi[..., 1], -xi[..., 0]], axis=-1)
    expected = {"counterclockwise": ccw, "clockwise": cw}
    deviations = {}
    for name, target in expected.items():
        target = np.where(filled[:, None, None, None], target, xi)
        deviations[name] = float(np.max(np.abs(xi_after - target))) if xi.size else 0.0
    orientation = min(deviations, key=deviations.get)

    report = PermutationReport(
        stage=k,
        n_cells=int(centers.shape[0]),
        n_points=int(xi.size // 2),
        max_deviation=deviations[orientation],
        filled_cycle_length=_cycle_length(field, k, centers[filled][:1], scale, cells_per_axis),
        empty_cycle_length=_cycle_length(field, k, centers[~filled][:1], scale, cells_per_axis),
        orientation=orientation,
    )
    logger.debug("permutation check stage %d: %s", k, report)
    return report


def _cycle_length(field: DepauwField, k: int, center: np.ndarray, scale: float, period: int) -> int:
    """Length of the orbit of the subsquare centre (1/4, 1/4) under the half-stage map."""
    if center.size == 0:
        return 0
    start = center[0] + 0.25
    y = start.copy()
    for step in range(1, 9):
        y = half_stage_map(field, k, wrap(y / scale, field.period)) * scale
        if np.max(np.abs(minimal_displacement(start, y, period))) < 1e-9:
            return step
    return 0
