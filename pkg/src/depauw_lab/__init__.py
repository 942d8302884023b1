"""
Depauw zero-noise laboratory.

Exact flow and Monte Carlo SDE experiments for the Depauw vector field on
the two-dimensional torus, with the statistics and regularity diagnostics
used to study the vanishing-noise limit.
"""

__version__ = "1.0.0"

from .depauw_field import eval_bdp, eval_u, eval_w, stage_of
from .errors import (
    ConfigError,
    CsvFormatError,
    DepauwLabError,
    DomainError,
    InsufficientSamplesError,
    ResourceLimitError,
    StageCrossingError,
)
from .exact_flow import flow, flow_stage, integral_curve, rho_B, rho_W
from .models import (
    CheckerboardDensity,
    DepauwField,
    EmpiricalMeasure,
    FlowQuery,
    Path,
    PathEnsemble,
    SdeConfig,
    TorusPoint,
)
from .sde_engine import simulate
from .settings import ExperimentConfig, load_config

__all__ = [
    "CheckerboardDensity",
    "ConfigError",
    "CsvFormatError",
    "DepauwField",
    "DepauwLabError",
    "DomainError",
    "EmpiricalMeasure",
    "ExperimentConfig",
    "FlowQuery",
    "InsufficientSamplesError",
    "Path",
    "PathEnsemble",
    "ResourceLimitError",
    "SdeConfig",
    "StageCrossingError",
    "TorusPoint",
    "eval_bdp",
    "eval_u",
    "eval_w",
    "flow",
    "flow_stage",
    "integral_curve",
    "load_config",
    "rho_B",
    "rho_W",
    "simulate",
    "stage_of",
]
