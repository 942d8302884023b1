"""
The Depauw field and its checkerboard data.

The base cell field w rotates the square loops of the cell (-1/2, 1/2)^2.
The periodized field u copies w into every unit cell centred on the lattice
of points with even coordinate sum; the other cells carry no motion. On
stage k, the time interval (T/2^(k+1), T/2^k], the field is u(2^k x).

Every evaluator accepts a single point or an array of shape (..., 2).
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import DomainError
from .models import TRUNCATED, CellAddress, CheckerboardDensity, DepauwField, TorusPoint
from .torus import as_array, wrap

logger = logging.getLogger(__name__)


# ============================================================================
# BASE CELL AND PERIODIZATION
# ============================================================================


def eval_w(xi) -> np.ndarray:
    """
    Base cell field.

    (0, 4 xi1) where 1/2 > |xi1| > |xi2|, (-4 xi2, 0) where
    1/2 > |xi2| > |xi1|, and 0 on the diagonals and outside the cell.
    """
    xi = np.asarray(xi, dtype=float)
    a1, a2 = np.abs(xi[..., 0]), np.abs(xi[..., 1])
    vertical = (a1 < 0.5) & (a1 > a2)
    horizontal = (a2 < 0.5) & (a2 > a1)
    out = np.zeros_like(xi)
    out[..., 1] = np.where(vertical, 4.0 * xi[..., 0], 0.0)
    out[..., 0] = np.where(horizontal, -4.0 * xi[..., 1], 0.0)
    return out


def locate_cells(y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Split scaled coordinates into cell centre, relative position and fill flag.

    Cells are the half-open squares [c - 1/2, c + 1/2)^2 around integer
    centres; a cell is filled when its centre has even coordinate sum.
    """
    y = np.asarray(y, dtype=float)
    centers = np.floor(y + 0.5)
    xi = y - centers
    filled = np.mod(centers.sum(axis=-1), 2.0) == 0.0
    return centers, xi, filled


def eval_u(x, speed_factor: float = 1.0) -> np.ndarray:
    _, xi, filled = locate_cells(as_array(x))
    return speed_factor * np.where(filled[..., None], eval_w(xi), 0.0)


# ============================================================================
# DYADIC STAGES
# ============================================================================


def stage_index(field: DepauwField, t) -> np.ndarray:
    """
    Vectorized stage lookup without domain checks.

    Returns the k with T/2^(k+1) < t <= T/2^k, or TRUNCATED for times at or
    below the truncation time (including t <= 0).
    """
    t = np.asarray(t, dtype=float)
    horizon = field.horizon
    positive = t > 0
    ratio = np.where(positive, horizon / np.where(positive, t, 1.0), 1.0)
    k = np.floor(np.log2(ratio)).astype(np.int64)
    k = np.maximum(k, 0)
    # log2 rounding near breakpoints; compare against exact dyadic times
    k = np.where(t <= np.ldexp(horizon, -(k + 1)), k + 1, k)
    k = np.where((k > 0) & (t > np.ldexp(horizon, -k)), k - 1, k)
    truncated = ~positive | (t <= field.truncation_time) | (k > field.max_depth)
    return np.where(truncated, TRUNCATED, k)


def stage_of(field: DepauwField, t: float) -> int:
    """The stage containing t, or TRUNCATED inside the truncation layer."""
    if not 0.0 < t <= field.horizon:
        raise DomainError(f"t={t} outside (0, {field.horizon}]")
    return int(stage_index(field, t))


def eval_bdp(field: DepauwField, t, x) -> np.ndarray:
    """
    b_DP(t, x) = u(2^k x) on stage k, zero in the truncation layer and at t = 0.

    t may be a scalar or an array broadcastable against the leading shape of x.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > field.horizon):
        raise DomainError(f"time outside [0, {field.horizon}]")
    x = as_array(x)
    if field.zero_drift:
        return np.zeros_like(x)
    k = np.broadcast_to(stage_index(field, t_arr), x.shape[:-1])
    active = k != TRUNCATED
    scale = np.ldexp(1.0, np.where(active, k, 0))
    values = eval_u(x * scale[..., None], field.speed_factor)
    return np.where(active[..., None], values, 0.0)


def truncate(field: DepauwField, tau: float) -> DepauwField:
    """b^tau: the same field, switched off for every t <= tau."""
    if not 0.0 <= tau <= field.horizon:
        raise DomainError(f"tau={tau} outside [0, {field.horizon}]")
    current = field.cutoff or 0.0
    return field.model_copy(update={"cutoff": max(current, tau)})


def field_bound(field: DepauwField) -> float:
    """Analytic sup norm of b_DP."""
    return 0.0 if field.zero_drift else 2.0 * field.speed_factor


# ============================================================================
# CELLS AND CHECKERBOARDS
# ============================================================================


def cell_of(stage: int, x: TorusPoint | np.ndarray) -> CellAddress:
    if stage < 0:
        raise DomainError("stage must be non-negative")
    y = as_array(x) * math.ldexp(1.0, stage)
    centers, _, filled = locate_cells(y)
    return CellAddress(stage=stage, center=(int(centers[0]), int(centers[1])), filled=bool(filled))


def rho_bar(density: CheckerboardDensity, x) -> np.ndarray | int:
    """phase XOR ((floor(2^k x1) + floor(2^k x2)) mod 2)."""
    y = as_array(x) * math.ldexp(1.0, density.scale)
    parity = np.mod(np.floor(y).sum(axis=-1), 2.0).astype(np.int64)
    value = parity ^ density.phase
    return int(value) if np.ndim(value) == 0 else value


def checkerboard_distance(scale: int, x) -> np.ndarray:
    """Distance from x to the nearest line of the 2^-scale checkerboard."""
    y = as_array(x) * math.ldexp(1.0, scale)
    frac = y - np.floor(y)
    return np.min(np.minimum(frac, 1.0 - frac), axis=-1) / math.ldexp(1.0, scale)


# ============================================================================
# GRID EXPORT
# ============================================================================


def grid_centers(n: int, side: float) -> np.ndarray:
    """Cell centres (i + 0.5) * side / n of an n x n grid, row-major in x1 then x2."""
    coords = (np.arange(n) + 0.5) * side / n
    g1, g2 = np.meshgrid(coords, coords, indexing="ij")
    return np.stack([g1.ravel(), g2.ravel()], axis=-1)


def sample_field_grid(field: DepauwField, t: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Points of an n x n grid of the field torus and b_DP(t, .) at them."""
    if not 0.0 < t <= field.horizon:
        raise DomainError(f"t={t} outside (0, {field.horizon}]")
    points = wrap(grid_centers(n, field.period), field.period)
    logger.debug("sampling field on %dx%d grid at t=%s", n, n, t)
    return points, eval_bdp(field, t, points)
