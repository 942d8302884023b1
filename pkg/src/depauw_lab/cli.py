"""
Command line for the laboratory.

Subcommands:
    field    sample b_DP (or the black density) on a grid at one time
    flow     exact trajectory of one starting point
    sde      Monte Carlo run; writes samples.csv and manifest.json
    analyze  statistics on stored samples; writes report_<kind>.json
    verify   deterministic check suite

Exit codes: 0 success, 1 runtime or check failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from .depauw_field import grid_centers, sample_field_grid
from .diagnostics import integral_curve_residual
from .errors import ConfigError, CsvFormatError, DepauwLabError, DomainError
from .exact_flow import mass_split, rho_B, trajectory
from .measure_stats import (
    branching_fraction,
    chi_square_uniformity,
    conditional_black_fractions,
    convergence_slope,
    disintegrate,
    median_conditional_spread,
    spread,
)
from .models import CheckerboardDensity, EmpiricalMeasure, Path as SampledPath, PathEnsemble
from .sde_engine import simulate
from .settings import ExperimentConfig, configure_logging, load_config
from .torus import lift_path, wrap
from .verification import run_checks

logger = logging.getLogger(__name__)

FIELD_HEADER = ["t", "x1", "x2", "b1", "b2"]
DENSITY_HEADER = ["t", "x1", "x2", "rhoB"]
FLOW_HEADER = ["t", "x1", "x2"]
SAMPLES_HEADER = ["path_id", "t", "x1", "x2"]
ANALYSIS_KINDS = ("uniformity", "branching", "backward", "residual", "convergence")


def fmt(value: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(value), ".17g")


def _floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from exc


# ============================================================================
# FILE I/O
# ============================================================================


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.info("wrote %s", path)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_samples(path: Path, ensemble: PathEnsemble) -> None:
    times = [fmt(t) for t in ensemble.save_times]

    def rows():
        for i in range(ensemble.n_paths):
            for j, t in enumerate(times):
                x1, x2 = ensemble.positions[i, j]
                yield [str(i), t, fmt(x1), fmt(x2)]

    _write_csv(path, SAMPLES_HEADER, rows())


class SampleTable:
    """Samples CSV arranged as positions[path, time, coordinate]."""

    def __init__(self, path_ids: np.ndarray, times: np.ndarray, positions: np.ndarray):
        self.path_ids = path_ids
        self.times = times
        self.positions = positions

    @property
    def n_paths(self) -> int:
        return int(self.path_ids.size)

    def at(self, t: float) -> np.ndarray:
        matches = np.flatnonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-12))
        if matches.size == 0:
            raise DomainError(f"no samples at t={t}")
        return self.positions[:, matches[0]]


def read_samples(path: Path) -> SampleTable:
    """Parse a samples CSV; every path must appear at every time."""
    ids, ts, xs = [], [], []
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise CsvFormatError(str(path), 0, f"cannot open: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != SAMPLES_HEADER:
            raise CsvFormatError(str(path), 1, f"header must be {','.join(SAMPLES_HEADER)}")
        for line, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise CsvFormatError(str(path), line, f"expected 4 fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
                ts.append(float(row[1]))
                xs.append((float(row[2]), float(row[3])))
            except ValueError as exc:
                raise CsvFormatError(str(path), line, str(exc)) from exc
    if not ids:
        raise CsvFormatError(str(path), 2, "no sample rows")

    ids_arr, ts_arr, xs_arr = np.asarray(ids), np.asarray(ts), np.asarray(xs)
    path_ids, path_pos = np.unique(ids_arr, return_inverse=True)
    times, time_pos = np.unique(ts_arr, return_inverse=True)
    if ids_arr.size != path_ids.size * times.size:
        raise CsvFormatError(str(path), 0, "every path must be sampled at every time")
    positions = np.full((path_ids.size, times.size, 2), np.nan)
    positions[path_pos, time_pos] = xs_arr
    if np.isnan(positions).any():
        raise CsvFormatError(str(path), 0, "duplicate (path_id, t) rows")
    return SampleTable(path_ids, times, positions)


# ============================================================================
# SUBCOMMANDS
# ============================================================================


def cmd_field(config: ExperimentConfig, out_dir: Path, t: float, grid_n: int, density: bool = False) -> Path:
    """Grid export of b_DP(t, .) or of the black density at time t."""
    field = config.depauw_field()
    if density:
        if not 0.0 < t <= field.horizon:
            raise DomainError(f"t={t} outside (0, {field.horizon}]")
        points = grid_centers(grid_n, field.period)
        values = rho_B(field, t, points)
        target = out_dir / "density.csv"
        rows = ([fmt(t), fmt(x[0]), fmt(x[1]), str(int(v))] for x, v in zip(points, values))
        _write_csv(target, DENSITY_HEADER, rows)
        return target
    points, values = sample_field_grid(field, t, grid_n)
    target = out_dir / "field.csv"
    rows = ([fmt(t), fmt(x[0]), fmt(x[1]), fmt(b[0]), fmt(b[1])] for x, b in zip(points, values))
    _write_csv(target, FIELD_HEADER, rows)
    return target


def cmd_flow(config: ExperimentConfig, out_dir: Path, x0, t_from: float, t_to: float, steps: int) -> Path:
    """Exact trajectory from x0 at t_from to t_to in `steps` equal steps."""
    field = config.depauw_field()
    for t in (t_from, t_to):
        if not 0.0 <= t <= field.horizon:
            raise DomainError(f"t={t} outside [0, {field.horizon}]")
    if steps < 1:
        raise DomainError("steps must be at least 1")
    times = np.array([t_from]) if t_from == t_to else np.linspace(t_from, t_to, steps + 1)
    points = wrap(trajectory(field, x0, times), field.period)
    target = out_dir / "flow.csv"
    _write_csv(target, FLOW_HEADER, ([fmt(t), fmt(x[0]), fmt(x[1])] for t, x in zip(times, points)))
    return target


def manifest_payload(config: ExperimentConfig, ensemble: PathEnsemble) -> dict[str, Any]:
    sde = config.sde
    return {
        "name": config.experiment.name,
        "seed": sde.seed,
        "nu": sde.nu,
        "n_paths": sde.n_paths,
        "dt_base": sde.dt_base,
        "integrator": sde.integrator.value,
        "save_times": list(sde.save_times),
        "wall_time_s": ensemble.wall_time_s,
        "effective_config": config.model_dump(mode="json"),
    }


def cmd_sde(config: ExperimentConfig, out_dir: Path) -> tuple[Path, Path]:
    ensemble = simulate(config.depauw_field(), config.sde)
    samples = out_dir / "samples.csv"
    write_samples(samples, ensemble)
    manifest = out_dir / "manifest.json"
    _write_json(manifest, manifest_payload(config, ensemble))
    return samples, manifest


def _black_region() -> CheckerboardDensity:
    """Black cells at the final time: the unit checkerboard with phase 0."""
    return CheckerboardDensity(scale=0, phase=0)


def _branching_metrics(config: ExperimentConfig, table: SampleTable) -> dict[str, Any]:
    field = config.depauw_field()
    final = table.at(table.times[-1])
    fraction = branching_fraction(final, _black_region())
    spread_est = spread(EmpiricalMeasure.uniform(final, side=field.period))
    metrics: dict[str, Any] = {
        "t": float(table.times[-1]),
        "black_fraction": fraction.model_dump(),
        "spread": spread_est.model_dump(),
    }
    if np.isclose(table.times[-1], field.horizon):
        metrics["mass_split"] = mass_split(field, field.horizon, final).model_dump()
    if table.times[0] == 0.0 and table.times.size > 1:
        family = disintegrate(table.at(0.0), final, "first", config.analysis.bins, side=field.period)
        black = list(conditional_black_fractions(family, _black_region()).values())
        metrics["forward_conditionals"] = {
            "bins_used": len(family.members),
            "median_black_fraction": float(np.median(black)),
            "median_spread": median_conditional_spread(family),
        }
    return metrics


def _backward_metrics(config: ExperimentConfig, table: SampleTable) -> dict[str, Any]:
    field = config.depauw_field()
    first, last = table.at(0.0), table.at(table.times[-1])
    family = disintegrate(first, last, "second", config.analysis.bins, side=field.period)
    return {
        "bins": config.analysis.bins,
        "bins_used": len(family.members),
        "empty_bins": int(np.count_nonzero(family.counts == 0)),
        "median_conditional_spread": median_conditional_spread(family),
        "n_pairs": table.n_paths,
    }


def _uniformity_metrics(config: ExperimentConfig, table: SampleTable) -> dict[str, Any]:
    side = config.depauw_field().period
    results = []
    for j, t in enumerate(table.times):
        result = chi_square_uniformity(table.positions[:, j], config.analysis.bins, side=side)
        results.append({"t": float(t), **result.model_dump()})
    return {"chi_square": results, "min_p_value": min(r["p_value"] for r in results)}


def _residual_metrics(config: ExperimentConfig, table: SampleTable, quad_substeps: int) -> dict[str, Any]:
    field = config.depauw_field()
    if table.times[0] != 0.0:
        raise DomainError("residual analysis needs samples at t=0")
    residuals = [
        integral_curve_residual(
            SampledPath(times=table.times, lift=lift_path(table.positions[i], field.period), side=field.period),
            field,
            quad_substeps,
        )
        for i in range(table.n_paths)
    ]
    return {
        "mean_residual": float(np.mean(residuals)),
        "max_residual": float(np.max(residuals)),
        "n_paths": table.n_paths,
        "quad_substeps": quad_substeps,
    }


def cmd_analyze(
    config: ExperimentConfig,
    out_dir: Path,
    kind: str,
    inputs: list[Path],
    nu_values: list[float] | None = None,
    quad_substeps: int = 4,
) -> Path:
    if kind not in ANALYSIS_KINDS:
        raise ConfigError(f"unknown analysis '{kind}'")
    tables = [read_samples(path) for path in inputs]
    if kind == "convergence":
        if not nu_values or len(nu_values) != len(tables):
            raise ConfigError("convergence needs one --nu-values entry per input")
        ladder = []
        for nu, table in zip(nu_values, tables):
            ladder.append({"nu": nu, **_backward_metrics(config, table), **_branching_metrics(config, table)})
        spreads = [row["median_conditional_spread"] for row in ladder]
        metrics: dict[str, Any] = {
            "ladder": ladder,
            "backward_spread_slope": convergence_slope(nu_values, spreads),
        }
    else:
        table = tables[0]
        if kind == "uniformity":
            metrics = _uniformity_metrics(config, table)
        elif kind == "branching":
            metrics = _branching_metrics(config, table)
        elif kind == "backward":
            metrics = _backward_metrics(config, table)
        else:
            metrics = _residual_metrics(config, table, quad_substeps)

    report = {
        "kind": kind,
        "inputs": [{"path": str(p), "sha256": file_digest(p), "n_paths": t.n_paths} for p, t in zip(inputs, tables)],
        "metrics": metrics,
        "effective_config": config.model_dump(mode="json"),
    }
    target = out_dir / f"report_{kind}.json"
    _write_json(target, report)
    return target


def cmd_verify(config: ExperimentConfig, quick: bool = False, speed_scale: float | None = None) -> int:
    field = config.depauw_field()
    if speed_scale is not None:
        field = field.model_copy(update={"speed_scale": speed_scale})
    results = run_checks(field, quick=quick)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name} value={result.value} threshold={result.threshold} {result.detail}".rstrip())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


# ============================================================================
# ARGUMENT PARSING
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depauw-lab", description="Depauw zero-noise laboratory")
    parser.add_argument("--config", type=Path, help="JSON or key = value config file")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    field = sub.add_parser("field", help="sample the field on a grid")
    field.add_argument("--t", type=float, required=True)
    field.add_argument("--grid-n", type=int, default=64)
    field.add_argument("--density", action="store_true", help="export the black density instead")

    flow = sub.add_parser("flow", help="exact trajectory of one point")
    flow.add_argument("--x0", type=float, nargs=2, metavar=("X1", "X2"))
    flow.add_argument("--t-from", type=float, default=0.0)
    flow.add_argument("--t-to", type=float)
    flow.add_argument("--steps", type=int, default=64)

    sde = sub.add_parser("sde", help="Monte Carlo simulation")
    sde.add_argument("--nu", type=float)
    sde.add_argument("--n-paths", type=int)
    sde.add_argument("--dt-base", type=float)
    sde.add_argument("--integrator", choices=["euler_maruyama", "drift_splitting"])
    sde.add_argument("--save-times", type=_floats)
    sde.add_argument("--initial", choices=["uniform", "point"])
    sde.add_argument("--x0", type=float, nargs=2, metavar=("X1", "X2"))
    sde.add_argument("--workers", type=int)
    sde.add_argument("--name")
    sde.add_argument("--zero-drift", action="store_true", default=None)

    analyze = sub.add_parser("analyze", help="statistics on stored samples")
    analyze.add_argument("kind", choices=ANALYSIS_KINDS)
    analyze.add_argument("--input", type=Path, nargs="+", required=True)
    analyze.add_argument("--bins", type=int)
    analyze.add_argument("--nu-values", type=_floats)
    analyze.add_argument("--quad-substeps", type=int, default=4)

    verify = sub.add_parser("verify", help="deterministic check suite")
    verify.add_argument("--quick", action="store_true")
    verify.add_argument("--speed-scale", type=float, help=argparse.SUPPRESS)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {"sde.seed": args.seed, "logging.level": args.log_level}
    if args.command == "sde":
        overrides.update(
            {
                "sde.nu": args.nu,
                "sde.n_paths": args.n_paths,
                "sde.dt_base": args.dt_base,
                "sde.integrator": args.integrator,
                "sde.save_times": args.save_times,
                "sde.workers": args.workers,
                "experiment.name": args.name,
                "field.zero_drift": args.zero_drift,
            }
        )
        if args.initial == "point" or (args.initial is None and args.x0 is not None):
            if args.x0 is None:
                raise ConfigError("--initial point needs --x0")
            overrides["sde.initial"] = {"kind": "point", "x0": list(args.x0)}
        elif args.initial == "uniform":
            overrides["sde.initial"] = {"kind": "uniform"}
    if args.command == "analyze":
        overrides["analysis.bins"] = args.bins
    return overrides


def run(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    configure_logging(config.logging, args.log_level)
    out_dir = args.out or Path(config.experiment.output_dir)

    if args.command == "field":
        cmd_field(config, out_dir, args.t, args.grid_n, args.density)
    elif args.command == "flow":
        x0 = args.x0 if args.x0 is not None else config.analysis.x0
        t_to = args.t_to if args.t_to is not None else config.field.horizon
        cmd_flow(config, out_dir, x0, args.t_from, t_to, args.steps)
    elif args.command == "sde":
        cmd_sde(config, out_dir)
    elif args.command == "analyze":
        cmd_analyze(config, out_dir, args.kind, args.input, args.nu_values, args.quad_substeps)
    else:
        return cmd_verify(config, args.quick, args.speed_scale)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DepauwLabError, OSError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
