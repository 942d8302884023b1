"""
Empirical measures on the torus and the statistics run on them.

Includes the chi-square uniformity test, exact circular and sliced
1-Wasserstein distances, binned disintegrations of joint samples, branching
fractions with confidence intervals, and mean pairwise spread.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterator
from itertools import islice

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.special import ndtri
from scipy.stats import chisquare
from statsmodels.stats.proportion import proportion_confint

from .depauw_field import rho_bar
from .errors import InsufficientSamplesError
from .models import (
    CheckerboardDensity,
    ChiSquareResult,
    ConditionalFamily,
    EmpiricalMeasure,
    FractionEstimate,
    SpreadEstimate,
)
from .random_streams import PURPOSE_SUBSAMPLE, CounterStream
from .torus import minimal_displacement, wrap

logger = logging.getLogger(__name__)

MAX_SPREAD_PAIRS = 10_000


# ============================================================================
# MEASURES AND BINNING
# ============================================================================


def pushforward(m: EmpiricalMeasure, f: Callable[[np.ndarray], np.ndarray]) -> EmpiricalMeasure:
    """f_# m: move the atoms, keep the weights."""
    support = wrap(np.asarray(f(m.support), dtype=float).reshape(m.support.shape), m.side)
    return EmpiricalMeasure(support=support, weights=m.weights, side=m.side)


def bin_index(points: np.ndarray, k: int, side: float = 1.0) -> np.ndarray:
    """Multi-index of the half-open bin [i side/k, (i+1) side/k) along every axis."""
    idx = np.floor(wrap(points, side) * (k / side)).astype(np.int64)
    return np.clip(idx, 0, k - 1)


def bin_counts(points: np.ndarray, k: int, side: float = 1.0) -> np.ndarray:
    points = np.atleast_2d(points)
    dim = points.shape[1]
    flat = np.ravel_multi_index(tuple(bin_index(points, k, side).T), (k,) * dim)
    return np.bincount(flat, minlength=k**dim).reshape((k,) * dim)


def chi_square_uniformity(samples, k: int, side: float = 1.0) -> ChiSquareResult:
    """
    Pearson test of the k^d histogram against the uniform law.

    Needs at least 5 samples per bin on average.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, dim = samples.shape
    n_bins = k**dim
    if n < 5 * n_bins:
        raise InsufficientSamplesError(f"{n} samples are too few for {n_bins} bins (need {5 * n_bins})")
    counts = bin_counts(samples, k, side).ravel()
    statistic, p_value = chisquare(counts)
    return ChiSquareResult(
        statistic=float(statistic),
        p_value=float(p_value),
        dof=n_bins - 1,
        n_samples=n,
        bins=k,
    )


# ============================================================================
# TRANSPORT DISTANCES
# ============================================================================


def _prepare(values, weights) -> tuple[np.ndarray, np.ndarray]:
    values = np.ravel(np.asarray(values, dtype=float))
    if weights is None:
        weights = np.full(values.size, 1.0 / values.size)
    return values, np.ravel(np.asarray(weights, dtype=float))


def circular_w1(a_values, b_values, a_weights=None, b_weights=None, period: float = 1.0) -> float:
    """
    Exact 1-Wasserstein distance on the circle of the given period.

    The optimal shift of the CDF difference is its level median; ties go to
    the smallest median value.
    """
    a_values, a_weights = _prepare(a_values, a_weights)
    b_values, b_weights = _prepare(b_values, b_weights)
    u = np.mod(a_values / period, 1.0)
    v = np.mod(b_values / period, 1.0)

    values = np.concatenate([u, v])
    order = np.argsort(values, kind="stable")
    values = values[order]
    cdf_diff = np.cumsum(np.concatenate([a_weights, -b_weights])[order])

    delta = np.diff(np.append(values, 1.0))
    # [0, first atom) continues the last interval around the circle at level 0
    delta[-1] += values[0]
    level_order = np.argsort(cdf_diff, kind="stable")
    mass = np.cumsum(delta[level_order]) - 0.5
    mass[mass < 0] = np.inf
    level_median = cdf_diff[level_order][np.argmin(mass)]
    return float(period * np.sum(delta * np.abs(cdf_diff - level_median)))


def exact_transport_cost(a_values, b_values, a_weights=None, b_weights=None, period: float = 1.0) -> float:
    """
    Brute-force optimal transport on the circle.

    Equal-size uniform measures are matched by an exact assignment; other
    weights go through a linear program over all transport plans.
    """
    uniform = a_weights is None and b_weights is None
    a_values, a_weights = _prepare(a_values, a_weights)
    b_values, b_weights = _prepare(b_values, b_weights)
    n, m = a_values.size, b_values.size
    cost_matrix = np.abs(minimal_displacement(a_values[:, None], b_values[None, :], period))
    if uniform and n == m:
        rows, cols = linear_sum_assignment(cost_matrix)
        return float(cost_matrix[rows, cols].sum() / n)
    cost = cost_matrix.ravel()
    rows = np.kron(np.eye(n), np.ones((1, m)))
    cols = np.kron(np.ones((1, n)), np.eye(m))
    result = linprog(
        cost,
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([a_weights, b_weights]),
        bounds=(0, None),
        method="highs",
    )
    return float(result.fun)


def directions() -> Iterator[tuple[int, int]]:
    """Axes, then primitive slopes (1,1), (1,-1), (2,1), (1,2), (2,-1), (1,-2), ..."""
    yield from [(1, 0), (0, 1), (1, 1), (1, -1)]
    m = 2
    while True:
        for j in range(1, m):
            if math.gcd(m, j) == 1:
                yield from [(m, j), (j, m), (m, -j), (j, -m)]
        m += 1


def project(points: np.ndarray, direction: tuple[int, int], side: float) -> np.ndarray:
    """Coordinate p x1 + q x2 of the points on the circle R / (side Z), scaled to [0, 1)."""
    p, q = direction
    return np.mod((p * points[:, 0] + q * points[:, 1]) / side, 1.0)


def sliced_w1(a: EmpiricalMeasure, b: EmpiricalMeasure, n_directions: int = 8) -> float:
    """
    Mean circular W1 over the first n_directions closed-geodesic projections.

    Each projection lives on a circle of length side.
    """
    if n_directions < 1:
        raise ValueError("n_directions must be at least 1")
    if a.side != b.side:
        raise ValueError("measures live on tori of different sides")
    total = 0.0
    for direction in islice(directions(), n_directions):
        u = project(a.support, direction, a.side)
        v = project(b.support, direction, b.side)
        total += circular_w1(u, v, a.weights, b.weights, period=1.0)
    return a.side * total / n_directions


def wrapped_gaussian_reference(center, sigma: float, side: float, n_per_axis: int = 256) -> EmpiricalMeasure:
    """
    Quantile lattice of the isotropic Gaussian N(center, sigma^2 I) wrapped on the torus.

    Each axis uses the n_per_axis mid-quantiles; the support is their product.
    """
    levels = ndtri((np.arange(n_per_axis) + 0.5) / n_per_axis) * sigma
    g1, g2 = np.meshgrid(levels, levels, indexing="ij")
    support = wrap(np.stack([g1.ravel(), g2.ravel()], axis=-1) + np.asarray(center, dtype=float), side)
    return EmpiricalMeasure.uniform(support, side=side)


# ============================================================================
# DISINTEGRATION AND BRANCHING
# ============================================================================


def disintegrate(first, second, condition_on: str = "first", k: int = 16, side: float = 1.0) -> ConditionalFamily:
    """
    Bin the conditioning coordinate of the pairs (first[i], second[i]) on a
    k^d grid and keep the empirical law of the other coordinate per bin.
    """
    first = np.atleast_2d(np.asarray(first, dtype=float))
    second = np.atleast_2d(np.asarray(second, dtype=float))
    if first.shape != second.shape or first.shape[0] == 0:
        raise InsufficientSamplesError("disintegrate needs a non-empty set of pairs")
    if condition_on not in ("first", "second"):
        raise ValueError("condition_on must be 'first' or 'second'")
    given, other = (first, second) if condition_on == "first" else (second, first)
    dim = given.shape[1]

    multi = bin_index(given, k, side)
    flat = np.ravel_multi_index(tuple(multi.T), (k,) * dim)
    counts = np.bincount(flat, minlength=k**dim).reshape((k,) * dim)

    order = np.argsort(flat, kind="stable")
    boundaries = np.flatnonzero(np.diff(flat[order])) + 1
    members: dict[tuple[int, ...], EmpiricalMeasure] = {}
    conditioned: dict[tuple[int, ...], np.ndarray] = {}
    for group in np.split(order, boundaries):
        key = tuple(int(i) for i in np.unravel_index(flat[group[0]], (k,) * dim))
        members[key] = EmpiricalMeasure.uniform(other[group], side=side)
        conditioned[key] = given[group]
    empty = k**dim - len(members)
    if empty:
        logger.warning("%d of %d bins are empty", empty, k**dim)
    return ConditionalFamily(
        bins=k,
        side=side,
        condition_on=condition_on,
        counts=counts,
        members=members,
        conditioned_points=conditioned,
    )


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    low, high = proportion_confint(successes, n, alpha=1.0 - confidence, method="wilson")
    return float(low), float(high)


def branching_fraction(samples, region: CheckerboardDensity, confidence: float = 0.95) -> FractionEstimate:
    """Fraction of samples in the black cells of the region, with a Wilson interval."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = samples.shape[0]
    if n == 0:
        raise InsufficientSamplesError("branching_fraction needs samples")
    black = int(np.count_nonzero(rho_bar(region, samples)))
    low, high = wilson_interval(black, n, confidence)
    return FractionEstimate(fraction=black / n, n_samples=n, ci_low=low, ci_high=high, confidence=confidence)


def conditional_black_fractions(family: ConditionalFamily, region: CheckerboardDensity) -> dict[tuple, float]:
    """Per-bin black fraction of the conditional laws."""
    return {key: float(np.mean(rho_bar(region, m.support))) for key, m in family.members.items()}


# ============================================================================
# SPREAD
# ============================================================================


def _pair_indices(n: int, max_pairs: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n * (n - 1) // 2 <= max_pairs:
        return np.triu_indices(n, k=1)
    draws = CounterStream(seed, PURPOSE_SUBSAMPLE, np.arange(max_pairs)).uniform(2)
    i = np.minimum((draws[:, 0] * n).astype(np.int64), n - 1)
    j = (i + 1 + np.minimum((draws[:, 1] * (n - 1)).astype(np.int64), n - 2)) % n
    return i, j


def spread(m: EmpiricalMeasure, max_pairs: int = MAX_SPREAD_PAIRS, seed: int = 0) -> SpreadEstimate:
    """
    Weighted mean torus distance over distinct unordered pairs of atoms.

    Above max_pairs pairs a deterministic subsample is used. A single atom
    has spread 0 and is flagged as degenerate.
    """
    if m.size < 2:
        logger.warning("spread of a single atom is degenerate")
        return SpreadEstimate(value=0.0, n_pairs=0, degenerate=True)
    i, j = _pair_indices(m.size, max_pairs, seed)
    d = minimal_displacement(m.support[i], m.support[j], m.side)
    dist = np.sqrt(np.sum(d * d, axis=-1))
    w = m.weights[i] * m.weights[j]
    total = float(w.sum())
    if total <= 0:
        return SpreadEstimate(value=0.0, n_pairs=int(i.size), degenerate=True)
    return SpreadEstimate(value=float(np.sum(w * dist) / total), n_pairs=int(i.size))


def conditional_spreads(family: ConditionalFamily, min_count: int = 2) -> dict[tuple, SpreadEstimate]:
    """Spread of every conditional law with at least min_count atoms."""
    return {key: spread(m) for key, m in family.members.items() if m.size >= min_count}


def median_conditional_spread(family: ConditionalFamily, min_count: int = 2) -> float:
    values = [s.value for s in conditional_spreads(family, min_count).values()]
    if not values:
        raise InsufficientSamplesError(f"no bin holds {min_count} or more samples")
    return float(np.median(values))


def convergence_slope(levels, values) -> float:
    """Least-squares slope of log(values) against log(levels)."""
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    if levels.size < 2 or np.any(levels <= 0) or np.any(values <= 0):
        raise InsufficientSamplesError("a slope needs two or more positive points")
    slope, _ = np.polyfit(np.log(levels), np.log(values), 1)
    return float(slope)
