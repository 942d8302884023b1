#!/usr/bin/env python3
"""
Tests for the integrability, seminorm and residual diagnostics.
"""

import math

import numpy as np
import pytest

from depauw_lab.diagnostics import (
    embedding_check,
    ensemble_residual,
    ensemble_seminorms,
    field_sampler,
    gagliardo_seminorm,
    holder_seminorm,
    integral_curve_residual,
    linear_gagliardo_value,
    lqlp_norm,
    prodi_serrin_check,
)
from depauw_lab.errors import DomainError
from depauw_lab.exact_flow import integral_curve, stage_refined_grid
from depauw_lab.models import DepauwField, Path, PointInitial, ProdiSerrinParams, SdeConfig, SeminormParams
from depauw_lab.sde_engine import simulate
from depauw_lab.torus import constant_path, path_from_lift, time_reverse


def _linear_path(n: int) -> Path:
    times = np.linspace(0.0, 1.0, n)
    return path_from_lift(times, np.stack([times, np.zeros(n)], axis=-1))


# ============================================================================
# INTEGRABILITY
# ============================================================================


@pytest.mark.parametrize(
    "p, q, admissible, margin",
    [
        (math.inf, math.inf, True, 1.0),
        (2.0, 2.0, False, -1.0),
        (8.0, 8.0, True, 0.5),
    ],
)
def test_prodi_serrin_check(p, q, admissible, margin):
    ok, value = prodi_serrin_check(ProdiSerrinParams(p=p, q=q, d=2))
    assert ok is admissible
    assert value == pytest.approx(margin)


def test_lqlp_of_a_constant_field():
    def sampler(t, points):
        return np.tile([3.0, 4.0], (points.shape[0], 1))

    estimate = lqlp_norm(sampler, 2.0, 3.0, grid=(8, 8), horizon=2.0, side=2.0)
    assert estimate.value == pytest.approx(5.0 * 2.0 ** (1 / 3))
    assert estimate.monotone
    assert len(estimate.refinements) == 3


def test_lqlp_of_the_zero_field():
    sampler = field_sampler(DepauwField(zero_drift=True))
    estimate = lqlp_norm(sampler, 4.0, 4.0, grid=(8, 16), side=2.0)
    assert estimate.value == 0.0


def test_sup_norm_of_the_depauw_field(field):
    estimate = lqlp_norm(field_sampler(field), math.inf, math.inf, grid=(4, 1024), side=2.0, levels=1)
    assert estimate.value == pytest.approx(2.0, rel=0.01)
    assert estimate.value <= 2.0


def test_lqlp_rejects_small_exponents():
    with pytest.raises(DomainError):
        lqlp_norm(lambda t, x: x, 0.5, 2.0)


# ============================================================================
# SEMINORMS
# ============================================================================


def test_seminorms_of_a_constant_path():
    path = constant_path((0.2, 0.3), horizon=1.0)
    assert holder_seminorm(path, 0.4) == 0.0
    assert gagliardo_seminorm(path, 0.3, 2.0) == 0.0


def test_holder_seminorm_of_a_linear_path():
    assert holder_seminorm(_linear_path(11), 0.5) == pytest.approx(1.0)


def test_gagliardo_seminorm_converges_on_a_linear_path():
    exact = linear_gagliardo_value(1 / 3, 1.5)
    assert exact == pytest.approx(1.0)
    # the grid step halves from one entry to the next
    errors = [abs(gagliardo_seminorm(_linear_path(n), 1 / 3, 1.5) - exact) for n in (26, 51, 101, 201)]
    assert errors[-1] < 0.01
    orders = [math.log2(earlier / later) for earlier, later in zip(errors, errors[1:])]
    assert min(orders) >= 0.9, orders


def test_seminorms_are_invariant_under_time_reversal():
    rng = np.random.default_rng(4)
    times = np.linspace(0.0, 1.0, 60)
    path = path_from_lift(times, np.cumsum(rng.normal(0.0, 0.1, (60, 2)), axis=0))
    reversed_path = time_reverse(path)
    assert holder_seminorm(reversed_path, 0.4) == pytest.approx(holder_seminorm(path, 0.4), rel=1e-9)
    assert gagliardo_seminorm(reversed_path, 0.3, 2.0) == pytest.approx(gagliardo_seminorm(path, 0.3, 2.0), rel=1e-9)


def test_seminorms_need_two_samples():
    single = constant_path((0.1, 0.1), horizon=0.0)
    with pytest.raises(DomainError):
        holder_seminorm(single, 0.5)
    with pytest.raises(DomainError):
        gagliardo_seminorm(single, 0.5, 2.0)


def test_embedding_check():
    assert embedding_check(SeminormParams(alpha=0.6, p_exp=4.0, theta=0.3))
    assert not embedding_check(SeminormParams(alpha=0.4, p_exp=4.0, theta=0.3))


def test_brownian_holder_medians_increase_with_theta():
    field = DepauwField(zero_drift=True, max_depth=4)
    config = SdeConfig(nu=1.0, n_paths=100, dt_base=1 / 256, seed=3, record_full_paths=True)
    ensemble = simulate(field, config)
    medians = [
        ensemble_seminorms(ensemble, SeminormParams(alpha=0.45, p_exp=4.0, theta=theta))["holder_median"]
        for theta in (0.1, 0.25, 0.4, 0.49)
    ]
    assert all(math.isfinite(m) for m in medians)
    assert all(later >= earlier for earlier, later in zip(medians, medians[1:]))


# ============================================================================
# INTEGRAL CURVE RESIDUAL
# ============================================================================


def test_residual_of_an_exact_integral_curve(shallow_field):
    x = np.array([0.41421356237309515, 0.7320508075688772])
    path = integral_curve(shallow_field, x, stage_refined_grid(shallow_field, 2048))
    assert integral_curve_residual(path, shallow_field, quad_substeps=1024) < 1e-6


def test_residual_shrinks_with_quadrature_substeps(shallow_field):
    x = np.array([0.41421356237309515, 0.7320508075688772])
    path = integral_curve(shallow_field, x, stage_refined_grid(shallow_field, 2048))
    residuals = [integral_curve_residual(path, shallow_field, quad_substeps=m) for m in (1, 1024)]
    assert residuals[1] < 1e-6
    assert residuals[1] <= residuals[0]


def test_residual_of_a_coarse_integral_curve(shallow_field):
    x = np.array([0.3, 0.1])
    path = integral_curve(shallow_field, x, stage_refined_grid(shallow_field, 64))
    assert integral_curve_residual(path, shallow_field, quad_substeps=256) < 1e-3


def test_residual_without_drift_is_the_displacement():
    field = DepauwField(zero_drift=True, max_depth=4)
    assert integral_curve_residual(constant_path((0.3, 0.3), 1.0, side=2.0), field) == 0.0
    rng = np.random.default_rng(5)
    times = np.linspace(0.0, 1.0, 100)
    lift = np.cumsum(rng.normal(0.0, 0.05, (100, 2)), axis=0)
    path = path_from_lift(times, lift, side=2.0)
    displacement = np.max(np.linalg.norm(lift - lift[0], axis=-1))
    assert integral_curve_residual(path, field, quad_substeps=2) == pytest.approx(displacement)


def test_residual_rejects_long_paths():
    field = DepauwField(horizon=0.5)
    with pytest.raises(DomainError):
        integral_curve_residual(constant_path((0.1, 0.1), 1.0, side=2.0), field)
    with pytest.raises(DomainError):
        integral_curve_residual(constant_path((0.1, 0.1), 0.5, side=2.0), field, quad_substeps=0)


def test_noiseless_ensemble_has_small_residual(shallow_field):
    config = SdeConfig(
        nu=0.0,
        n_paths=2,
        dt_base=1 / 1024,
        initial=PointInitial(x0=(0.3, 0.7)),
        record_full_paths=True,
    )
    ensemble = simulate(shallow_field, config)
    assert ensemble_residual(ensemble, quad_substeps=64) < 1e-3
