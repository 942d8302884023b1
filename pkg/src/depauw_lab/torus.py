"""
Geometry of the flat torus and the path transforms used on path space.

Positions are handled as numpy arrays of shape (..., d) in the covering
space; `wrap` maps them to the canonical representative in [0, side)^d.
Single points may also be passed as TorusPoint models.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .models import Path, TorusPoint

PointLike = TorusPoint | np.ndarray | tuple[float, ...] | list[float]

# slack for time comparisons at the ends of a path
_TIME_TOL = 1e-12


def as_array(point: PointLike) -> np.ndarray:
    if isinstance(point, TorusPoint):
        return point.to_array()
    return np.asarray(point, dtype=float)


def wrap(x, side: float = 1.0) -> np.ndarray:
    """Canonical floor-based reduction to [0, side)^d."""
    x = np.asarray(x, dtype=float)
    wrapped = x - side * np.floor(x / side)
    return np.where(wrapped >= side, 0.0, wrapped)


def minimal_displacement(a, b, side: float = 1.0) -> np.ndarray:
    """
    Representative of b - a in (-side/2, side/2]^d.

    A displacement of exactly half a period resolves to +side/2.
    """
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return d - side * np.ceil(d / side - 0.5)


def torus_dist(a: PointLike, b: PointLike, side: float = 1.0) -> float | np.ndarray:
    """Euclidean length of the minimal representative of a - b."""
    d = minimal_displacement(as_array(b), as_array(a), side)
    dist = np.sqrt(np.sum(d * d, axis=-1))
    return float(dist) if np.ndim(dist) == 0 else dist


def lift_path(points, side: float = 1.0) -> np.ndarray:
    """Continuous lift of a sequence of wrapped points by minimal displacements."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    steps = minimal_displacement(points[:-1], points[1:], side)
    lift = np.empty_like(points)
    lift[0] = points[0]
    lift[1:] = points[0] + np.cumsum(steps, axis=0)
    return lift


# ============================================================================
# PATH CONSTRUCTION
# ============================================================================


def path_from_points(times, points, side: float = 1.0) -> Path:
    return Path(times=times, lift=lift_path(points, side), side=side)


def path_from_lift(times, lift, side: float = 1.0) -> Path:
    return Path(times=times, lift=lift, side=side)


def constant_path(point: PointLike, horizon: float, side: float = 1.0) -> Path:
    x = wrap(as_array(point), side)
    times = [0.0, horizon] if horizon > 0 else [0.0]
    return Path(times=times, lift=np.tile(x, (len(times), 1)), side=side)


def lift_at(path: Path, t) -> np.ndarray:
    """Linear interpolation of the lift; t may be a scalar or an array."""
    t = np.asarray(t, dtype=float)
    if np.any(t < -_TIME_TOL) or np.any(t > path.horizon + _TIME_TOL):
        raise DomainError(f"time outside [0, {path.horizon}]")
    t = np.clip(t, 0.0, path.horizon)
    if len(path) == 1:
        return np.broadcast_to(path.lift[0], t.shape + (path.dim,)).copy()
    columns = [np.interp(t, path.times, path.lift[:, j]) for j in range(path.dim)]
    return np.stack(columns, axis=-1)


# ============================================================================
# OPERATIONS
# ============================================================================


def evaluate(path: Path, t: float) -> TorusPoint | np.ndarray:
    """e_t: the path position at time t, wrapped to the torus."""
    position = wrap(lift_at(path, t), path.side)
    if position.shape == (2,):
        return TorusPoint.from_array(position, side=path.side)
    return position


def stop_before(path: Path, tau: float) -> Path:
    """S^tau: t -> path(max(tau, t)), constant on [0, tau]."""
    _check_tau(path, tau)
    times = np.union1d(path.times, [tau])
    lift = lift_at(path, np.maximum(tau, times))
    return Path(times=times, lift=lift, side=path.side)


def reverse_head(path: Path, tau: float) -> Path:
    """B^tau: t -> path(T - min(tau, t)), starts at path(T), constant on [tau, T]."""
    _check_tau(path, tau)
    horizon = path.horizon
    mirrored = horizon - path.times[path.times >= horizon - tau]
    times = np.union1d(np.clip(mirrored, 0.0, tau), [0.0, tau, horizon])
    lift = lift_at(path, horizon - np.minimum(tau, times))
    return Path(times=times, lift=lift, side=path.side)


def time_reverse(path: Path) -> Path:
    """beta: t -> path(T - t)."""
    horizon = path.horizon
    times = horizon - path.times[::-1]
    times[0] = 0.0
    times[-1] = horizon
    return Path(times=times, lift=path.lift[::-1], side=path.side)


def _check_tau(path: Path, tau: float) -> None:
    if not 0.0 <= tau <= path.horizon:
        raise DomainError(f"tau={tau} outside [0, {path.horizon}]")
