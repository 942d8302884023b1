"""
Data models for the Depauw zero-noise laboratory.

All models are pydantic models. Value objects are frozen; the array-carrying
containers (paths, ensembles, empirical measures) hold read-only numpy arrays.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import Self

# ============================================================================
# SHARED HELPERS
# ============================================================================


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_float_array(value, ndim: int, name: str) -> np.ndarray:
    array = np.array(value, dtype=float, copy=True)
    if array.ndim != ndim:
        raise ValueError(f"{name} must be a {ndim}-dimensional array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite values")
    return _readonly(array)


class ArrayModel(BaseModel):
    """Base for frozen models that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# ============================================================================
# TORUS GEOMETRY
# ============================================================================


class TorusPoint(BaseModel):
    """A point of the two-dimensional torus, stored in its canonical representative."""

    model_config = ConfigDict(frozen=True)

    x1: float
    x2: float
    side: float = Field(default=1.0, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _wrap(cls, data):
        if isinstance(data, dict):
            side = float(data.get("side", 1.0))
            if side > 0:
                data = dict(data)
                for key in ("x1", "x2"):
                    if key in data:
                        data[key] = _wrap_scalar(float(data[key]), side)
        return data

    @classmethod
    def from_array(cls, coords, side: float = 1.0) -> TorusPoint:
        x1, x2 = np.asarray(coords, dtype=float).reshape(2)
        return cls(x1=float(x1), x2=float(x2), side=side)

    def to_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


def _wrap_scalar(value: float, side: float) -> float:
    wrapped = value - side * math.floor(value / side)
    # floor-based reduction can round up to exactly `side` for tiny negative inputs
    return 0.0 if wrapped >= side else wrapped


class Path(ArrayModel):
    """
    A time-sampled continuous path on the torus.

    The continuous lift in the covering space is the primary storage; the
    wrapped points are derived from it. Consecutive lifted samples differ by
    the minimal-displacement representative when built from wrapped points.
    """

    times: np.ndarray
    lift: np.ndarray
    side: float = Field(default=1.0, gt=0)

    @field_validator("times", mode="before")
    @classmethod
    def _check_times(cls, value) -> np.ndarray:
        times = _as_float_array(value, 1, "times")
        if times.size == 0:
            raise ValueError("a path needs at least one sample")
        if times[0] != 0.0:
            raise ValueError("path times must start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("path times must be strictly increasing")
        return times

    @field_validator("lift", mode="before")
    @classmethod
    def _check_lift(cls, value) -> np.ndarray:
        return _as_float_array(value, 2, "lift")

    @model_validator(mode="after")
    def _check_lengths(self) -> Self:
        if self.lift.shape[0] != self.times.shape[0]:
            raise ValueError("times and points must have the same length")
        return self

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return int(self.lift.shape[1])

    @property
    def points(self) -> np.ndarray:
        wrapped = self.lift - self.side * np.floor(self.lift / self.side)
        return np.where(wrapped >= self.side, 0.0, wrapped)

    def __len__(self) -> int:
        return int(self.times.shape[0])


# ============================================================================
# DEPAUW FIELD
# ============================================================================

#: stage_of result for times inside the truncated layer [0, T/2^(K_max+1)]
TRUNCATED = -1

#: side of the square torus carrying the stage-0 checkerboard (lattice of (1,1) and (2,0))
FIELD_PERIOD = 2.0


class DepauwField(BaseModel):
    """
    Descriptor of the dyadically rescaled checkerboard field b_DP.

    Stage k occupies the time interval (T/2^(k+1), T/2^k]; below the
    truncation time the field vanishes. The field lives on the torus of side
    `period`, the smallest square period of the coarsest stage.
    """

    model_config = ConfigDict(frozen=True)

    horizon: float = Field(default=1.0, gt=0)
    max_depth: int = Field(default=12, ge=0, le=60)
    speed_scale: float = Field(default=1.0, gt=0)
    zero_drift: bool = False
    cutoff: float | None = Field(default=None, ge=0)

    @property
    def period(self) -> float:
        return FIELD_PERIOD

    @property
    def speed_factor(self) -> float:
        return self.speed_scale / self.horizon

    @property
    def truncation_time(self) -> float:
        dyadic = math.ldexp(self.horizon, -(self.max_depth + 1))
        if self.cutoff is None:
            return dyadic
        return max(dyadic, min(self.cutoff, self.horizon))

    def stage_interval(self, k: int) -> tuple[float, float]:
        """Closure (T/2^(k+1), T/2^k] of stage k."""
        return math.ldexp(self.horizon, -(k + 1)), math.ldexp(self.horizon, -k)

    def breakpoints(self) -> list[float]:
        """Dyadic breakpoints T/2^k for k = 0..K_max+1, decreasing."""
        return [math.ldexp(self.horizon, -k) for k in range(self.max_depth + 2)]


class CellAddress(BaseModel):
    """A unit cell of the scaled lattice at a given stage."""

    model_config = ConfigDict(frozen=True)

    stage: int = Field(ge=0)
    center: tuple[int, int]
    filled: bool

    @model_validator(mode="after")
    def _parity(self) -> Self:
        if self.filled != (sum(self.center) % 2 == 0):
            raise ValueError("a cell is filled exactly when its centre has even coordinate sum")
        return self


class CheckerboardDensity(BaseModel):
    """The {0,1}-valued checkerboard at spatial scale 2^-scale with a phase bit."""

    model_config = ConfigDict(frozen=True)

    scale: int = Field(default=0, ge=0)
    phase: Literal[0, 1] = 0

    def complement(self) -> CheckerboardDensity:
        return CheckerboardDensity(scale=self.scale, phase=1 - self.phase)


# ============================================================================
# EXACT FLOW
# ============================================================================


class LoopState(BaseModel):
    """Position on a square loop: sup-norm radius and counterclockwise arc length."""

    model_config = ConfigDict(frozen=True)

    radius: float = Field(gt=0, lt=0.5)
    arc: float = Field(ge=0)

    @model_validator(mode="after")
    def _arc_range(self) -> Self:
        if self.arc >= 8 * self.radius:
            raise ValueError("arc must lie in [0, 8 * radius)")
        return self


class FlowQuery(BaseModel):
    """Transport request from t_from to t_to; backward when t_to < t_from."""

    model_config = ConfigDict(frozen=True)

    t_from: float = Field(ge=0)
    t_to: float = Field(ge=0)

    @property
    def forward(self) -> bool:
        return self.t_to >= self.t_from


class PermutationReport(BaseModel):
    """Outcome of the half-stage rigidity check of one stage."""

    stage: int
    n_cells: int
    n_points: int
    max_deviation: float
    filled_cycle_length: int
    empty_cycle_length: int
    orientation: Literal["counterclockwise", "clockwise"]


class MassSplit(BaseModel):
    """Black and white fractions of a sample at one time."""

    t: float
    black: float
    white: float
    n_samples: int


class RefinementReport(BaseModel):
    """Outcome of the checkerboard refinement calibration for one stage."""

    stage: int
    phase: int
    n_checked: int
    n_skipped: int
    mismatches: int


# ============================================================================
# SDE ENGINE
# ============================================================================


class Integrator(str, Enum):
    EULER_MARUYAMA = "euler_maruyama"
    DRIFT_SPLITTING = "drift_splitting"


class UniformInitial(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform"] = "uniform"


class PointInitial(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["point"] = "point"
    x0: tuple[float, float]


class CustomInitial(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["custom"] = "custom"
    points: list[tuple[float, float]] = Field(min_length=1)


InitialLaw = Annotated[UniformInitial | PointInitial | CustomInitial, Field(discriminator="kind")]


class SdeConfig(BaseModel):
    """Monte Carlo run description of dX = b(t, X) dt + nu dW on the torus."""

    model_config = ConfigDict(frozen=True)

    nu: float = Field(default=0.05, ge=0)
    n_paths: int = Field(default=10_000, ge=1)
    dt_base: float = Field(default=1.0 / 1024, gt=0)
    steps_per_stage_min: int = Field(default=8, ge=1)
    seed: int = Field(default=20240607, ge=0, lt=2**64)
    initial: InitialLaw = Field(default_factory=UniformInitial)
    save_times: list[float] = Field(default_factory=lambda: [1.0])
    integrator: Integrator = Integrator.DRIFT_SPLITTING
    record_full_paths: bool = False
    workers: int = Field(default=1, ge=1)
    chunk_size: int = Field(default=25_000, ge=1)
    max_memory_mb: float = Field(default=2048.0, gt=0)

    @field_validator("save_times")
    @classmethod
    def _sorted_times(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("save_times must not be empty")
        if any(t < 0 for t in value):
            raise ValueError("save_times must be non-negative")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("save_times must be strictly increasing")
        return value

    @model_validator(mode="after")
    def _custom_count(self) -> Self:
        if isinstance(self.initial, CustomInitial) and len(self.initial.points) != self.n_paths:
            raise ValueError("a custom initial law needs exactly n_paths points")
        return self


class PathEnsemble(ArrayModel):
    """
    Sampled paths of one simulation run.

    positions/lifts have shape (n_paths, n_save, dim); full_lifts, when
    recorded, has shape (n_paths, len(full_times), dim).
    """

    config: SdeConfig
    field: DepauwField
    save_times: np.ndarray
    positions: np.ndarray
    lifts: np.ndarray
    full_times: np.ndarray | None = None
    full_lifts: np.ndarray | None = None
    wall_time_s: float = 0.0

    @property
    def n_paths(self) -> int:
        return int(self.positions.shape[0])

    @property
    def side(self) -> float:
        return self.field.period

    def time_index(self, t: float) -> int:
        matches = np.flatnonzero(np.isclose(self.save_times, t, rtol=0.0, atol=1e-12))
        if matches.size == 0:
            raise KeyError(f"time {t} is not a save time")
        return int(matches[0])

    def marginal(self, t: float) -> np.ndarray:
        return self.positions[:, self.time_index(t), :]

    def pairs(self, t_first: float, t_second: float) -> tuple[np.ndarray, np.ndarray]:
        return self.marginal(t_first), self.marginal(t_second)

    def path(self, index: int) -> Path:
        if self.full_lifts is not None and self.full_times is not None:
            return Path(times=self.full_times, lift=self.full_lifts[index], side=self.side)
        return Path(times=self.save_times, lift=self.lifts[index], side=self.side)


# ============================================================================
# MEASURES AND STATISTICS
# ============================================================================


class EmpiricalMeasure(ArrayModel):
    """A weighted point cloud on the torus of the given side."""

    support: np.ndarray
    weights: np.ndarray
    side: float = Field(default=1.0, gt=0)

    @field_validator("support", mode="before")
    @classmethod
    def _check_support(cls, value) -> np.ndarray:
        return _as_float_array(value, 2, "support")

    @field_validator("weights", mode="before")
    @classmethod
    def _check_weights(cls, value) -> np.ndarray:
        weights = _as_float_array(value, 1, "weights")
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        return weights

    @model_validator(mode="after")
    def _check_shapes(self) -> Self:
        if self.support.shape[0] != self.weights.shape[0]:
            raise ValueError("support and weights must have the same length")
        if self.support.shape[0] == 0:
            raise ValueError("an empirical measure needs at least one atom")
        return self

    @classmethod
    def uniform(cls, points, side: float = 1.0) -> EmpiricalMeasure:
        support = np.atleast_2d(np.asarray(points, dtype=float))
        n = support.shape[0]
        weights = np.full(n, 1.0 / n)
        # absorb the rounding of 1/n so the sum check holds for any n
        weights[-1] = 1.0 - weights[:-1].sum()
        return cls(support=support, weights=weights, side=side)

    @property
    def size(self) -> int:
        return int(self.support.shape[0])

    @property
    def dim(self) -> int:
        return int(self.support.shape[1])


class ConditionalFamily(ArrayModel):
    """
    Binned disintegration of a joint sample.

    counts has shape (bins,) * dim; members maps the multi-index of every
    non-empty bin to the empirical law of the other coordinate.
    """

    bins: int = Field(ge=1)
    side: float = Field(gt=0)
    condition_on: Literal["first", "second"]
    counts: np.ndarray
    members: dict[tuple[int, ...], EmpiricalMeasure]
    conditioned_points: dict[tuple[int, ...], np.ndarray]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def is_empty(self, index: tuple[int, ...]) -> bool:
        return self.counts[index] == 0


class ChiSquareResult(BaseModel):
    statistic: float
    p_value: float
    dof: int
    n_samples: int
    bins: int


class SpreadEstimate(BaseModel):
    value: float
    n_pairs: int
    degenerate: bool = False


class FractionEstimate(BaseModel):
    fraction: float
    n_samples: int
    ci_low: float
    ci_high: float
    confidence: float = 0.95


# ============================================================================
# DIAGNOSTICS
# ============================================================================


class ProdiSerrinParams(BaseModel):
    """Integrability exponents (p in space, q in time) in dimension d."""

    model_config = ConfigDict(frozen=True)

    p: float = Field(gt=1)
    q: float = Field(gt=1)
    d: int = Field(default=2, ge=1)

    @property
    def margin(self) -> float:
        return 1.0 - self.d / self.p - 2.0 / self.q

    @property
    def admissible(self) -> bool:
        return self.margin > 0


class SeminormParams(BaseModel):
    """Fractional Sobolev exponents and the Hölder exponent they should control."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0, lt=1)
    p_exp: float = Field(ge=1)
    theta: float = Field(gt=0, lt=1)

    @property
    def embedding_applies(self) -> bool:
        return self.alpha >= self.theta + 1.0 / self.p_exp


class LqLpEstimate(BaseModel):
    value: float
    refinements: list[float]
    monotone: bool
    p: float
    q: float


class CheckResult(BaseModel):
    """One line of the verification suite."""

    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""
