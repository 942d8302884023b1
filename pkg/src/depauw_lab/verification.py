"""
Deterministic check suite behind the `verify` command.

Every check returns a CheckResult; none of them raises on a failed
comparison, so one run reports every failing property at once.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np

from .depauw_field import eval_bdp, eval_w, field_bound
from .diagnostics import field_sampler, lqlp_norm, prodi_serrin_check
from .errors import DomainError
from .exact_flow import (
    calibrate_phase,
    flow_lift,
    loop_advance,
    permutation_check,
    refinement_check,
    rho_B,
    rho_W,
)
from .measure_stats import chi_square_uniformity, circular_w1, exact_transport_cost
from .models import CheckResult, DepauwField, ProdiSerrinParams
from .random_streams import sample_uniform
from .torus import minimal_displacement, wrap

logger = logging.getLogger(__name__)

PERMUTATION_TOL = 1e-12
LOOP_TOL = 1e-10
SIGNIFICANCE = 1e-3


def _relative_points(n: int, seed: int) -> np.ndarray:
    """Random relative positions in the open cell, away from the centre."""
    xi = sample_uniform(seed, n, side=1.0) - 0.5
    return np.where(np.abs(xi) < 1e-6, 1e-3, xi)


def check_permutation(field: DepauwField, stages=(0, 1, 2), points_per_subsquare: int = 1000) -> CheckResult:
    worst = 0.0
    details = []
    passed = True
    for k in stages:
        if k > field.max_depth:
            continue
        report = permutation_check(field, k, points_per_subsquare=points_per_subsquare)
        worst = max(worst, report.max_deviation)
        ok = (
            report.max_deviation < PERMUTATION_TOL
            and report.orientation == "counterclockwise"
            and report.filled_cycle_length == 4
            and report.empty_cycle_length == 1
        )
        passed = passed and ok
        details.append(f"k={k}:{report.orientation},cycle={report.filled_cycle_length}")
    return CheckResult(
        name="property-R-permutation",
        passed=passed,
        value=worst,
        threshold=PERMUTATION_TOL,
        detail=" ".join(details),
    )


def check_refinement(field: DepauwField, n_points: int = 100_000) -> CheckResult:
    try:
        phase = calibrate_phase(field, 0, n_points=min(n_points, 10_000))
    except DomainError as exc:
        return CheckResult(name="refinement-identity", passed=False, detail=str(exc))
    # stage 0 carries phase 0, so the relative phase is also the absolute one
    report = refinement_check(field, 0, phase, n_points=n_points, seed=1)
    return CheckResult(
        name="refinement-identity",
        passed=report.mismatches == 0 and phase == 1,
        value=float(report.mismatches),
        threshold=0.0,
        detail=f"phase={phase} checked={report.n_checked} skipped={report.n_skipped}",
    )


def check_loop_period(n: int = 10_000) -> CheckResult:
    xi = _relative_points(n, seed=2)
    deviation = float(np.max(np.abs(loop_advance(xi, 2.0) - xi)))
    return CheckResult(name="loop-period", passed=deviation < LOOP_TOL, value=deviation, threshold=LOOP_TOL)


def check_loop_radius(n: int = 10_000) -> CheckResult:
    xi = _relative_points(n, seed=3)
    tau = sample_uniform(4, n, side=4.0)[:, 0] - 2.0
    moved = loop_advance(xi, tau)
    deviation = float(np.max(np.abs(np.max(np.abs(moved), axis=-1) - np.max(np.abs(xi), axis=-1))))
    return CheckResult(name="loop-radius", passed=deviation < LOOP_TOL, value=deviation, threshold=LOOP_TOL)


def check_flow_inverse(field: DepauwField, n: int = 10_000) -> CheckResult:
    x = sample_uniform(5, n, side=field.period)
    there = flow_lift(field, 0.0, field.horizon, x)
    back = flow_lift(field, field.horizon, 0.0, there)
    deviation = float(np.max(np.abs(minimal_displacement(x, back, field.period))))
    return CheckResult(name="flow-inverse", passed=deviation < LOOP_TOL, value=deviation, threshold=LOOP_TOL)


def check_flow_semigroup(field: DepauwField, n: int = 10_000) -> CheckResult:
    x = sample_uniform(6, n, side=field.period)
    # times off the dyadic grid
    s, t, u = 0.1 * math.sqrt(2), 0.3 * math.sqrt(3), 0.9 * field.horizon
    s, t = s * field.horizon, t * field.horizon
    direct = flow_lift(field, s, u, x)
    composed = flow_lift(field, t, u, flow_lift(field, s, t, x))
    deviation = float(np.max(np.abs(minimal_displacement(direct, composed, field.period))))
    return CheckResult(name="flow-semigroup", passed=deviation < LOOP_TOL, value=deviation, threshold=LOOP_TOL)


def check_measure_preservation(field: DepauwField, n: int = 100_000, bins: int = 16) -> CheckResult:
    x = sample_uniform(7, n, side=field.period)
    pushed = wrap(flow_lift(field, 0.0, field.horizon, x), field.period)
    result = chi_square_uniformity(pushed, bins, side=field.period)
    return CheckResult(
        name="measure-preservation",
        passed=result.p_value > SIGNIFICANCE,
        value=result.p_value,
        threshold=SIGNIFICANCE,
        detail=f"chi2={result.statistic:.3f} dof={result.dof}",
    )


def check_divergence(n: int = 10_000, h: float = 1e-6) -> CheckResult:
    xi = sample_uniform(8, n, side=1.0) - 0.5
    a1, a2 = np.abs(xi[:, 0]), np.abs(xi[:, 1])
    away = (np.abs(a1 - a2) > 1e-3) & (np.maximum(a1, a2) < 0.5 - 1e-3)
    xi = xi[away]
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    div = (eval_w(xi + e1)[:, 0] - eval_w(xi - e1)[:, 0] + eval_w(xi + e2)[:, 1] - eval_w(xi - e2)[:, 1]) / (2 * h)
    worst = float(np.max(np.abs(div)))
    return CheckResult(name="divergence-free", passed=worst < 1e-6, value=worst, threshold=1e-6)


def check_field_bound(field: DepauwField, n: int = 100_000) -> CheckResult:
    x = sample_uniform(9, n, side=field.period)
    t = sample_uniform(10, n, side=field.horizon)[:, 0]
    worst = float(np.max(np.abs(eval_bdp(field, t, x))))
    bound = field_bound(field)
    return CheckResult(name="field-bound", passed=worst <= bound, value=worst, threshold=bound)


def check_density_complement(field: DepauwField, n: int = 100_000) -> CheckResult:
    x = sample_uniform(11, n, side=field.period)
    t = np.maximum(sample_uniform(12, n, side=field.horizon)[:, 0], 1e-12)
    total = rho_B(field, t, x) + rho_W(field, t, x)
    bad = int(np.count_nonzero(total != 1))
    return CheckResult(name="density-complement", passed=bad == 0, value=float(bad), threshold=0.0)


def check_prodi_serrin() -> CheckResult:
    admissible, margin = prodi_serrin_check(ProdiSerrinParams(p=math.inf, q=math.inf, d=2))
    return CheckResult(name="prodi-serrin-bounded", passed=admissible and margin == 1.0, value=margin, threshold=0.0)


def check_sup_norm(field: DepauwField, n_x: int = 1024) -> CheckResult:
    sampler = field_sampler(field)
    estimate = lqlp_norm(sampler, math.inf, math.inf, grid=(4, n_x), horizon=field.horizon, side=field.period, levels=1)
    bound = field_bound(field)
    error = abs(estimate.value - bound) / bound if bound else estimate.value
    return CheckResult(name="sup-norm", passed=error < 0.01, value=estimate.value, threshold=bound)


def check_circular_oracle(n_trials: int = 20, size: int = 5) -> CheckResult:
    worst = 0.0
    for trial in range(n_trials):
        draws = sample_uniform(100 + trial, 2 * size, side=1.0)[:, 0]
        a, b = draws[:size], draws[size:]
        worst = max(worst, abs(circular_w1(a, b) - exact_transport_cost(a, b)))
    return CheckResult(name="circular-w1-oracle", passed=worst < 1e-10, value=worst, threshold=1e-10)


def run_checks(field: DepauwField | None = None, quick: bool = False) -> list[CheckResult]:
    """
    Run the whole suite against `field` (the default Depauw field if None).

    quick shrinks the sample sizes for smoke runs.
    """
    field = field or DepauwField()
    scale = 10 if quick else 1
    checks: list[Callable[[], CheckResult]] = [
        lambda: check_permutation(field, points_per_subsquare=1000 // scale),
        lambda: check_refinement(field, n_points=100_000 // scale),
        lambda: check_loop_period(10_000 // scale),
        lambda: check_loop_radius(10_000 // scale),
        lambda: check_flow_inverse(field, 10_000 // scale),
        lambda: check_flow_semigroup(field, 10_000 // scale),
        lambda: check_measure_preservation(field, 100_000 // scale, bins=16 if not quick else 8),
        lambda: check_divergence(10_000 // scale),
        lambda: check_field_bound(field, 100_000 // scale),
        lambda: check_density_complement(field, 100_000 // scale),
        check_prodi_serrin,
        lambda: check_sup_norm(field),
        check_circular_oracle,
    ]
    results = []
    for check in checks:
        result = check()
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, "%s %s value=%s", "PASS" if result.passed else "FAIL", result.name, result.value)
        results.append(result)
    return results
