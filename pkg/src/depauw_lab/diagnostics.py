"""
Regularity diagnostics: Prodi-Serrin exponents, mixed L^q_p norms, fractional
Sobolev and Hölder seminorms of paths, and integral-curve residuals.

Seminorms are taken on the continuous lift of a path, never on its wrapped
points.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy.spatial.distance import pdist

from .depauw_field import eval_bdp
from .errors import DomainError
from .models import (
    DepauwField,
    LqLpEstimate,
    Path,
    PathEnsemble,
    ProdiSerrinParams,
    SeminormParams,
)
from .torus import lift_at

logger = logging.getLogger(__name__)

FieldSampler = Callable[[float, np.ndarray], np.ndarray]

# points evaluated per batch by the residual quadrature
_QUAD_BATCH = 1 << 18


# ============================================================================
# INTEGRABILITY
# ============================================================================


def prodi_serrin_check(params: ProdiSerrinParams) -> tuple[bool, float]:
    """(d/p + 2/q < 1, 1 - d/p - 2/q), with 1/inf = 0."""
    return params.admissible, params.margin


def _power_mean(values: np.ndarray, exponent: float, axis: int) -> np.ndarray:
    if math.isinf(exponent):
        return np.max(values, axis=axis)
    return np.mean(values**exponent, axis=axis) ** (1.0 / exponent)


def _lqlp_on_grid(sampler: FieldSampler, p: float, q: float, n_t: int, n_x: int, horizon: float, side: float) -> float:
    coords = (np.arange(n_x) + 0.5) * side / n_x
    g1, g2 = np.meshgrid(coords, coords, indexing="ij")
    points = np.stack([g1.ravel(), g2.ravel()], axis=-1)
    times = (np.arange(n_t) + 0.5) * horizon / n_t
    inner = np.array([_power_mean(np.linalg.norm(sampler(t, points), axis=-1), p, axis=0) for t in times])
    if math.isinf(q):
        return float(np.max(inner))
    return float((horizon * np.mean(inner**q)) ** (1.0 / q))


def lqlp_norm(
    sampler: FieldSampler,
    p: float,
    q: float,
    grid: tuple[int, int] = (64, 256),
    horizon: float = 1.0,
    side: float = 1.0,
    levels: int = 3,
) -> LqLpEstimate:
    """
    Nested midpoint approximation of (int_0^T (int |b|^p dx)^(q/p) dt)^(1/q).

    Space integrals use the normalized measure of the torus of the given side;
    infinite exponents become maxima over the grid. The estimate is repeated
    on `levels` grids, halving both resolutions each time, and whether the
    values change monotonically under refinement is reported.
    """
    if p < 1 or q < 1:
        raise DomainError("p and q must be at least 1")
    n_t, n_x = grid
    refinements = []
    for level in range(levels - 1, -1, -1):
        refinements.append(
            _lqlp_on_grid(sampler, p, q, max(1, n_t >> level), max(1, n_x >> level), horizon, side)
        )
    steps = np.diff(refinements)
    monotone = bool(np.all(steps >= -1e-15) or np.all(steps <= 1e-15))
    return LqLpEstimate(value=refinements[-1], refinements=refinements, monotone=monotone, p=p, q=q)


def field_sampler(field: DepauwField) -> FieldSampler:
    return lambda t, points: eval_bdp(field, t, points)


# ============================================================================
# PATH SEMINORMS
# ============================================================================


def _quadrature_weights(times: np.ndarray) -> np.ndarray:
    """Trapezoid weights of a (possibly non-uniform) grid."""
    gaps = np.diff(times)
    weights = np.zeros_like(times)
    weights[:-1] += 0.5 * gaps
    weights[1:] += 0.5 * gaps
    return weights


def _pairwise_weights(weights: np.ndarray) -> np.ndarray:
    i, j = np.triu_indices(weights.size, k=1)
    return weights[i] * weights[j]


def gagliardo_seminorm(path: Path, alpha: float, p_exp: float) -> float:
    """
    Discrete (int int |u(s) - u(t)|^p / |s - t|^(1 + alpha p) ds dt)^(1/p).

    Double sum over distinct sample pairs with trapezoid weights; the
    diagonal is excluded.
    """
    if len(path) < 2:
        raise DomainError("a seminorm needs at least two samples")
    dist = pdist(path.lift)
    gaps = pdist(path.times[:, None])
    pair_weights = _pairwise_weights(_quadrature_weights(path.times))
    total = 2.0 * np.sum(pair_weights * dist**p_exp / gaps ** (1.0 + alpha * p_exp))
    return float(total ** (1.0 / p_exp))


def linear_gagliardo_value(alpha: float, p_exp: float, horizon: float = 1.0) -> float:
    """Closed form of the seminorm for the unit-speed straight path on [0, horizon]."""
    beta = p_exp * (1.0 - alpha) - 1.0
    if beta <= -1:
        return math.inf
    integral = 2.0 * horizon ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0))
    return integral ** (1.0 / p_exp)


def holder_seminorm(path: Path, theta: float) -> float:
    """max over sample pairs of |u(t) - u(s)| / |t - s|^theta."""
    if len(path) < 2:
        raise DomainError("a seminorm needs at least two samples")
    return float(np.max(pdist(path.lift) / pdist(path.times[:, None]) ** theta))


def embedding_check(params: SeminormParams) -> bool:
    """Whether W^(alpha,p) controls the C^theta seminorm (alpha >= theta + 1/p)."""
    return params.embedding_applies


def ensemble_seminorms(
    ensemble: PathEnsemble,
    params: SeminormParams,
    max_paths: int = 100,
) -> dict[str, float]:
    """Medians of the Hölder and Gagliardo seminorms over the first max_paths paths."""
    n = min(max_paths, ensemble.n_paths)
    holder = [holder_seminorm(ensemble.path(i), params.theta) for i in range(n)]
    gagliardo = [gagliardo_seminorm(ensemble.path(i), params.alpha, params.p_exp) for i in range(n)]
    if not params.embedding_applies:
        logger.warning(
            "alpha=%s < theta + 1/p = %s: the Hölder bound does not follow",
            params.alpha,
            params.theta + 1.0 / params.p_exp,
        )
    return {
        "holder_median": float(np.median(holder)),
        "gagliardo_median": float(np.median(gagliardo)),
        "n_paths": float(n),
        "embedding_applies": float(params.embedding_applies),
    }


# ============================================================================
# INTEGRAL CURVE RESIDUAL
# ============================================================================


def _refined_nodes(path: Path, field: DepauwField) -> np.ndarray:
    extra = [t for t in field.breakpoints() + [field.truncation_time] if 0.0 < t < path.horizon]
    return np.union1d(path.times, extra)


def integral_curve_residual(path: Path, field: DepauwField, quad_substeps: int = 16) -> float:
    """
    sup over sample times of |gamma(t) - gamma(0) - int_0^t b(s, gamma(s)) ds|.

    The drift is integrated along the linearly interpolated lift with
    quad_substeps midpoints per interval; intervals are first split at the
    dyadic breakpoints and the truncation time, where b jumps in time.
    """
    if quad_substeps < 1:
        raise DomainError("quad_substeps must be at least 1")
    if path.horizon > field.horizon * (1 + 1e-12):
        raise DomainError("path runs past the field horizon")
    nodes = _refined_nodes(path, field)
    lift = lift_at(path, nodes)
    n_int = nodes.size - 1
    increments = np.zeros((n_int, 2))

    fractions = (np.arange(quad_substeps) + 0.5) / quad_substeps
    per_batch = max(1, _QUAD_BATCH // quad_substeps)
    for start in range(0, n_int, per_batch):
        stop = min(start + per_batch, n_int)
        t0, t1 = nodes[start:stop], nodes[start + 1 : stop + 1]
        x0, x1 = lift[start:stop], lift[start + 1 : stop + 1]
        t_mid = t0[:, None] + fractions[None, :] * (t1 - t0)[:, None]
        x_mid = x0[:, None, :] + fractions[None, :, None] * (x1 - x0)[:, None, :]
        drift = eval_bdp(field, t_mid, x_mid)
        increments[start:stop] = drift.mean(axis=1) * (t1 - t0)[:, None]

    integral = np.vstack([np.zeros((1, 2)), np.cumsum(increments, axis=0)])
    deviation = np.linalg.norm(lift - lift[0] - integral, axis=-1)
    at_samples = np.searchsorted(nodes, path.times)
    return float(np.max(deviation[at_samples]))


def ensemble_residual(ensemble: PathEnsemble, quad_substeps: int = 4, max_paths: int | None = None) -> float:
    """Mean integral-curve residual over the recorded paths of an ensemble."""
    n = ensemble.n_paths if max_paths is None else min(max_paths, ensemble.n_paths)
    residuals = [integral_curve_residual(ensemble.path(i), ensemble.field, quad_substeps) for i in range(n)]
    logger.debug("residuals of %d paths: max %.3g", n, max(residuals))
    return float(np.mean(residuals))
