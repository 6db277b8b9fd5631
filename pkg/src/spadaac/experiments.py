"""Experiment configuration, parameter sweeps and oracle validation.

A configuration is one YAML (or JSON) mapping.  Every key has a default and
the resolved configuration, including which keys were defaulted, is written
next to each result as JSON run metadata.  Example::

    profile: default
    receiver: {pde: 0.2, gate_duration_ns: 0.1}
    constellation_order: 4
    axes:
      - {name: lambda_s, min: 1, max: 100, points: 100}
      - {name: lambda_b, values: [0.1, 10, 50]}
    algorithms: [none, rate-max, trigger]
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import io
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
import yaml

from . import __version__, kernels
from .aac import Algorithm, AacSolution, SolverSettings, solve
from .channel import (
    ChannelEstimate,
    Constellation,
    CountModel,
    ReceiverConfig,
    count_pmf,
    square_root_constellation,
)
from .exceptions import ConfigError
from .rate import concavity_scan, rate_report
from .ser import SerReport, ml_thresholds, symbol_error_rate
from .simulator import SimulationMode, SimulationPlan, simulate_counts, simulate_ser

SWEEP_CSV_HEADER = (
    "lambda_s", "lambda_b", "algorithm", "alpha_opt", "rate_bits", "avg_trigger", "ser", "k_max", "gates",
)
VALIDATE_CSV_HEADER = (
    "lambda_s", "lambda_b", "algorithm", "alpha", "tv_max", "ser_analytic", "ser_empirical", "z",
)
AXIS_NAMES = ("lambda_s", "lambda_b", "gates")
TV_LIMIT = 0.02
Z_LIMIT = 4.0

# Receiver presets.  "default" keeps the per-gate detection scale
# p_d * tau_g = 0.02 with 100 gates in a 200 ns symbol; "sbr-curve" uses a
# 5x larger scale so that the no-AAC SER at fixed SBR turns back up
# inside the 0..50 c/ns signal range.
PROFILES: dict[str, dict[str, Any]] = {
    "default": {},
    "sbr-curve": {"gate_duration_ns": 0.5, "dead_time_ns": 1.5},
}

_RECEIVER_FIELDS = tuple(f.name for f in dataclasses.fields(ReceiverConfig))
_SOLVER_FIELDS = tuple(f.name for f in dataclasses.fields(SolverSettings))

DEFAULTS: dict[str, Any] = {
    "profile": "default",
    "receiver": {},
    "constellation_order": 4,
    "lambda_s": 50.0,
    "lambda_b": 10.0,
    "sbr": None,
    "axes": [{"name": "lambda_s", "min": 1.0, "max": 100.0, "points": 100}],
    "algorithms": ["none", "rate-max", "trigger"],
    "solver": {},
    "simulation": {"trials": 100_000, "mode": "per-gate"},
    "concavity": {
        "lambda_s": {"min": 1.0, "max": 100.0, "points": 100},
        "lambda_b": [0.1, 10.0, 50.0],
        "alpha": {"min": 0.02, "max": 1.0, "points": 50},
    },
    "seed": 0,
    "workers": 1,
    "out": "out",
}


@dataclass(frozen=True)
class Axis:
    name: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ConcavityGrid:
    signal_rates: tuple[float, ...]
    background_rates: tuple[float, ...]
    alphas: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    receiver: ReceiverConfig
    constellation_order: int
    axes: tuple[Axis, ...]
    algorithms: tuple[Algorithm, ...]
    lambda_s: float
    lambda_b: float
    sbr: float | None
    solver: SolverSettings
    simulation: SimulationPlan
    concavity: ConcavityGrid
    seed: int
    workers: int
    out: Path
    profile: str = "default"
    resolved: Mapping[str, Any] = dataclasses.field(default_factory=dict, compare=False)
    defaulted: tuple[str, ...] = ()

    def metadata(self, command: str) -> dict:
        return {
            "command": command,
            "version": __version__,
            "backend": kernels.BACKEND,
            "seed": self.seed,
            "config": self.resolved,
            "defaulted": list(self.defaulted),
        }


# ---------------------------------------------------------------- loading


def _values(spec, what: str) -> tuple[float, ...]:
    """Grid values from a list, a scalar, or ``{min, max, points[, spacing]}``."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return (float(spec),)
    if isinstance(spec, (list, tuple)):
        if not spec:
            raise ConfigError(f"{what}: value list is empty")
        return tuple(float(v) for v in spec)
    if isinstance(spec, Mapping):
        if "values" in spec:
            return _values(list(spec["values"]), what)
        try:
            lo, hi, n = float(spec["min"]), float(spec["max"]), spec["points"]
        except KeyError as exc:
            raise ConfigError(f"{what}: needs 'values' or 'min', 'max', 'points' (missing {exc})") from None
        if int(n) != n or n < 1:
            raise ConfigError(f"{what}: points must be a positive integer, got {n}")
        n = int(n)
        if n == 1:
            return (lo,)
        spacing = spec.get("spacing", "linear")
        if spacing == "linear":
            return tuple(np.linspace(lo, hi, n).tolist())
        if spacing == "log":
            if lo <= 0.0 or hi <= 0.0:
                raise ConfigError(f"{what}: log spacing needs positive bounds")
            return tuple(np.geomspace(lo, hi, n).tolist())
        raise ConfigError(f"{what}: spacing must be 'linear' or 'log', got {spacing!r}")
    raise ConfigError(f"{what}: cannot read grid from {spec!r}")


def _check_keys(section: Mapping, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}; valid keys: {sorted(allowed)}")


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _defaulted_keys(raw: Mapping) -> list[str]:
    found = []
    for key, default in DEFAULTS.items():
        if key not in raw:
            found.append(key)
        elif isinstance(default, dict) and isinstance(raw[key], Mapping):
            found += [f"{key}.{k}" for k in default if k not in raw[key]]
    return found


def read_config_file(path: str | os.PathLike) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return dict(data)


def load_config(raw: Mapping[str, Any] | None = None, **overrides) -> ExperimentConfig:
    """Resolve a raw mapping plus CLI overrides into an :class:`ExperimentConfig`.

    ``overrides`` accepts ``seed``, ``trials``, ``algorithm``, ``out`` and
    ``workers``; ``None`` values are ignored.
    """
    raw = dict(raw or {})
    _check_keys(raw, DEFAULTS, "config")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    _check_keys(overrides, ("seed", "trials", "algorithm", "out", "workers"), "overrides")
    if "seed" in overrides:
        raw["seed"] = overrides["seed"]
    if "out" in overrides:
        raw["out"] = str(overrides["out"])
    if "workers" in overrides:
        raw["workers"] = overrides["workers"]
    if "algorithm" in overrides:
        raw["algorithms"] = [overrides["algorithm"]]
    if "trials" in overrides:
        raw["simulation"] = {**dict(raw.get("simulation") or {}), "trials": overrides["trials"]}

    # output location and parallelism never change results, so they stay out of the metadata
    defaulted = [
        k for k in _defaulted_keys(raw) if k not in ("out", "workers", "simulation.workers")
    ]
    merged = _merge(DEFAULTS, raw)

    profile = merged["profile"]
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; valid profiles: {sorted(PROFILES)}")
    receiver_in = dict(merged["receiver"] or {})
    _check_keys(receiver_in, _RECEIVER_FIELDS, "receiver")
    receiver_spec = {**PROFILES[profile], **receiver_in}
    receiver = ReceiverConfig(**receiver_spec)
    defaulted += [f"receiver.{k}" for k in _RECEIVER_FIELDS if k not in receiver_in]

    solver_in = dict(merged["solver"] or {})
    _check_keys(solver_in, _SOLVER_FIELDS, "solver")
    solver = SolverSettings(**solver_in)
    defaulted += [f"solver.{k}" for k in _SOLVER_FIELDS if k not in solver_in]

    order = merged["constellation_order"]
    if isinstance(order, bool) or int(order) != order or order < 2:
        raise ConfigError(f"constellation_order must be an integer >= 2, got {order}")

    axes_in = merged["axes"]
    if not isinstance(axes_in, list) or not axes_in:
        raise ConfigError("axes must be a non-empty list")
    axes = []
    for spec in axes_in:
        if not isinstance(spec, Mapping) or "name" not in spec:
            raise ConfigError(f"axis entries need a 'name': {spec!r}")
        name = spec["name"]
        if name not in AXIS_NAMES:
            raise ConfigError(f"invalid axis {name!r}; valid axes: {list(AXIS_NAMES)}")
        _check_keys(spec, ("name", "values", "min", "max", "points", "spacing"), f"axis {name}")
        values = _values(spec, f"axis {name}")
        if name == "gates" and any(v != int(v) or v < 1 for v in values):
            raise ConfigError(f"gates axis needs positive integers: {values}")
        if any(v < 0.0 for v in values):
            raise ConfigError(f"axis {name} has negative values: {values}")
        axes.append(Axis(name, values))
    names = [a.name for a in axes]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate sweep axes: {names}")

    sbr = merged["sbr"]
    if sbr is not None:
        sbr = float(sbr)
        if not sbr > 0.0:
            raise ConfigError(f"sbr must be positive, got {sbr}")
        if "lambda_b" in names:
            raise ConfigError("sbr derives lambda_b per point; it cannot be combined with a lambda_b axis")

    algs = merged["algorithms"]
    if isinstance(algs, str):
        algs = [algs]
    try:
        algorithms = tuple(Algorithm(a) for a in algs)
    except ValueError:
        raise ConfigError(
            f"invalid algorithm in {algs}; valid: {[a.value for a in Algorithm]}"
        ) from None
    if not algorithms:
        raise ConfigError("at least one algorithm must be selected")

    seed = merged["seed"]
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    seed = int(seed)
    workers = merged["workers"]
    if isinstance(workers, bool) or int(workers) != workers or workers < 1:
        raise ConfigError(f"workers must be a positive integer, got {workers}")

    sim_in = dict(merged["simulation"] or {})
    _check_keys(sim_in, ("trials", "mode", "workers", "seed"), "simulation")
    try:
        mode = SimulationMode(sim_in["mode"])
    except ValueError:
        raise ConfigError(f"simulation mode must be one of {[m.value for m in SimulationMode]}") from None
    if "seed" not in sim_in:
        defaulted.append("simulation.seed")
    simulation = SimulationPlan(
        int(sim_in["trials"]), int(sim_in.get("seed", seed)), mode, int(sim_in.get("workers", workers))
    )

    conc = dict(merged["concavity"] or {})
    _check_keys(conc, ("lambda_s", "lambda_b", "alpha"), "concavity")
    conc = {**DEFAULTS["concavity"], **conc}
    concavity = ConcavityGrid(
        _values(conc["lambda_s"], "concavity.lambda_s"),
        _values(conc["lambda_b"], "concavity.lambda_b"),
        _values(conc["alpha"], "concavity.alpha"),
    )

    lambda_s = float(merged["lambda_s"])
    lambda_b = float(merged["lambda_b"])
    if lambda_s < 0.0 or lambda_b < 0.0:
        raise ConfigError("lambda_s and lambda_b must be non-negative")

    resolved = {
        "profile": profile,
        "receiver": dataclasses.asdict(receiver),
        "constellation_order": int(order),
        "lambda_s": lambda_s,
        "lambda_b": lambda_b,
        "sbr": sbr,
        "axes": [{"name": a.name, "values": list(a.values)} for a in axes],
        "algorithms": [a.value for a in algorithms],
        "solver": dataclasses.asdict(solver),
        "simulation": {
            "trials": simulation.trials,
            "seed": simulation.seed,
            "mode": simulation.mode.value,
        },
        "concavity": {
            "lambda_s": list(concavity.signal_rates),
            "lambda_b": list(concavity.background_rates),
            "alpha": list(concavity.alphas),
        },
        "seed": seed,
    }
    return ExperimentConfig(
        receiver=receiver,
        constellation_order=int(order),
        axes=tuple(axes),
        algorithms=algorithms,
        lambda_s=lambda_s,
        lambda_b=lambda_b,
        sbr=sbr,
        solver=solver,
        simulation=simulation,
        concavity=concavity,
        seed=seed,
        workers=int(workers),
        out=Path(merged["out"]),
        profile=profile,
        resolved=resolved,
        defaulted=tuple(sorted(set(defaulted))),
    )


# ---------------------------------------------------------------- grid


@dataclass(frozen=True)
class GridPoint:
    lambda_s: float
    lambda_b: float
    receiver: ReceiverConfig

    @property
    def gates(self) -> int:
        return self.receiver.gates_per_pixel

    @property
    def k_max(self) -> int:
        return self.receiver.k_max

    def estimate(self) -> ChannelEstimate:
        return ChannelEstimate(self.lambda_s, self.lambda_b)


def grid_points(config: ExperimentConfig) -> list[GridPoint]:
    """Cartesian product of the sweep axes, first axis outermost."""
    points = []
    for combo in itertools.product(*(a.values for a in config.axes)):
        values = dict(zip((a.name for a in config.axes), combo))
        ls = values.get("lambda_s", config.lambda_s)
        if config.sbr is not None:
            lb = ls / config.sbr
        else:
            lb = values.get("lambda_b", config.lambda_b)
        receiver = config.receiver
        if "gates" in values:
            receiver = receiver.with_gates(int(values["gates"]))
        points.append(GridPoint(float(ls), float(lb), receiver))
    return points


def constellation_for(config: ExperimentConfig, lambda_s: float) -> Constellation:
    c = square_root_constellation(lambda_s, config.constellation_order)
    c.require_strict()
    return c


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class PointResult:
    point: GridPoint
    algorithm: Algorithm
    solution: AacSolution
    ser: SerReport

    def csv_row(self) -> tuple:
        return (
            self.point.lambda_s,
            self.point.lambda_b,
            self.algorithm.value,
            self.solution.alpha_opt,
            self.solution.rate_bits,
            self.solution.avg_trigger,
            self.ser.ser,
            self.point.k_max,
            self.point.gates,
        )


def evaluate_point(
    point: GridPoint,
    order: int,
    algorithms: tuple[Algorithm, ...],
    settings: SolverSettings,
) -> list[PointResult]:
    est = point.estimate()
    constellation = square_root_constellation(point.lambda_s, order)
    constellation.require_strict()
    out = []
    for alg in algorithms:
        sol = solve(alg, point.receiver, est, constellation, settings)
        sol.rate_bits  # materialize before crossing process boundaries
        model = count_pmf(point.receiver, est, constellation, sol.alpha_opt)
        out.append(PointResult(point, alg, sol, symbol_error_rate(model, ml_thresholds(model))))
    return out


def _evaluate_task(args):
    return evaluate_point(*args)


def _map(fn, tasks, workers: int):
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


@dataclass(frozen=True)
class SweepResult:
    rows: list[PointResult]
    metadata: dict

    @property
    def nonconverged(self) -> list[PointResult]:
        return [r for r in self.rows if not r.solution.converged]

    def csv(self) -> str:
        return _csv_text(SWEEP_CSV_HEADER, (r.csv_row() for r in self.rows))

    def write(self, out_dir: Path) -> tuple[Path, Path]:
        return _write(out_dir, "sweep.csv", self.csv()), _write(out_dir, "sweep.json", _json_text(self.metadata))


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Solve every grid point with every selected algorithm.

    Points are farmed out to ``config.workers`` processes; rows come back in
    grid order whatever the completion order.
    """
    points = grid_points(config)
    for p in points:
        constellation_for(config, p.lambda_s)
    tasks = [(p, config.constellation_order, config.algorithms, config.solver) for p in points]
    rows = [r for chunk in _map(_evaluate_task, tasks, config.workers) for r in chunk]
    meta = config.metadata("sweep")
    meta["points"] = len(points)
    meta["nonconverged"] = sum(not r.solution.converged for r in rows)
    return SweepResult(rows, meta)


def single_point(config: ExperimentConfig) -> GridPoint:
    """First grid point, or the scalar ``lambda_s``/``lambda_b`` when no axes were given."""
    if "axes" in config.defaulted:
        lb = config.lambda_s / config.sbr if config.sbr is not None else config.lambda_b
        return GridPoint(config.lambda_s, lb, config.receiver)
    return grid_points(config)[0]


def run_point(config: ExperimentConfig) -> dict:
    """All selected algorithms at one operating point, side by side."""
    point = single_point(config)
    est = point.estimate()
    constellation = constellation_for(config, point.lambda_s)
    solutions = {}
    for res in evaluate_point(point, config.constellation_order, config.algorithms, config.solver):
        report = rate_report(point.receiver, est, constellation, res.solution.alpha_opt)
        solutions[res.algorithm.value] = {
            **res.solution.as_dict(),
            "ser": res.ser.ser,
            "per_symbol_error": list(res.ser.per_symbol_error),
            "rate_derivatives": {"d1": report.d1, "d2": report.d2},
        }
    return {
        "point": {
            "lambda_s": point.lambda_s,
            "lambda_b": point.lambda_b,
            "k_max": point.k_max,
            "gates": point.gates,
            "levels_cpns": list(constellation.levels_cpns),
        },
        "solutions": solutions,
        "metadata": config.metadata("optimize"),
    }


def point_json(result: dict) -> str:
    return _json_text(result)


# ---------------------------------------------------------------- validation


ModelHook = Callable[[CountModel], CountModel]


@dataclass(frozen=True)
class ValidationRow:
    point: GridPoint
    algorithm: Algorithm
    alpha: float
    tv: tuple[float, ...]
    ser_analytic: float
    ser_empirical: float
    z: float
    histogram_csv: str

    @property
    def passed(self) -> bool:
        return max(self.tv) <= TV_LIMIT and abs(self.z) <= Z_LIMIT

    def csv_row(self) -> tuple:
        return (
            self.point.lambda_s, self.point.lambda_b, self.algorithm.value, self.alpha,
            max(self.tv), self.ser_analytic, self.ser_empirical, self.z,
        )


@dataclass(frozen=True)
class ValidationReport:
    rows: list[ValidationRow]
    metadata: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def csv(self) -> str:
        return _csv_text(VALIDATE_CSV_HEADER, (r.csv_row() for r in self.rows))

    def summary(self) -> dict:
        return {
            **self.metadata,
            "passed": self.passed,
            "tv_limit": TV_LIMIT,
            "z_limit": Z_LIMIT,
            "max_tv": max((max(r.tv) for r in self.rows), default=0.0),
            "max_abs_z": max((abs(r.z) for r in self.rows), default=0.0),
            "failures": [
                {"index": i, "lambda_s": r.point.lambda_s, "lambda_b": r.point.lambda_b,
                 "algorithm": r.algorithm.value, "tv_max": max(r.tv), "z": r.z}
                for i, r in enumerate(self.rows) if not r.passed
            ],
        }

    def write(self, out_dir: Path) -> list[Path]:
        paths = [
            _write(out_dir, "validate.csv", self.csv()),
            _write(out_dir, "validate.json", _json_text(self.summary())),
        ]
        for i, r in enumerate(self.rows):
            paths.append(_write(out_dir / "histograms", f"point_{i:04d}.csv", r.histogram_csv))
        return paths


def validate_point(
    point: GridPoint,
    constellation: Constellation,
    alpha: float,
    plan: SimulationPlan,
    algorithm: Algorithm = Algorithm.NONE,
    model_hook: ModelHook | None = None,
) -> ValidationRow:
    """Compare the analytic count model at ``alpha`` with the Monte Carlo oracle."""
    model = count_pmf(point.receiver, point.estimate(), constellation, alpha)
    if model_hook is not None:
        model = model_hook(model)
    rule = ml_thresholds(model)
    analytic = symbol_error_rate(model, rule).ser
    counts = simulate_counts(point.receiver, point.estimate(), constellation, alpha, plan)
    empirical = simulate_ser(point.receiver, point.estimate(), constellation, alpha, rule, plan)
    return ValidationRow(
        point, algorithm, alpha,
        tuple(counts.tv_distances(model).tolist()),
        analytic, empirical.ser, empirical.z_score(analytic),
        counts.to_csv(),
    )


def validate(config: ExperimentConfig, model_hook: ModelHook | None = None) -> ValidationReport:
    """Run the event simulator at every grid point and algorithm.

    ``model_hook`` may replace the analytic model before comparison; tests
    use it to corrupt the PMFs as a negative control.
    """
    rows = []
    for point in grid_points(config):
        constellation = constellation_for(config, point.lambda_s)
        for alg in config.algorithms:
            sol = solve(alg, point.receiver, point.estimate(), constellation, config.solver)
            rows.append(validate_point(
                point, constellation, sol.alpha_opt, config.simulation, alg, model_hook
            ))
    meta = config.metadata("validate")
    return ValidationReport(rows, meta)


# ---------------------------------------------------------------- concavity


def run_concavity(config: ExperimentConfig):
    grid = config.concavity
    scan = concavity_scan(
        config.receiver, grid.signal_rates, grid.background_rates, grid.alphas,
        order=config.constellation_order,
    )
    meta = config.metadata("scan-concavity")
    meta["max_d2I"] = scan.max()
    return scan, meta


def write_concavity(scan, meta: dict, out_dir: Path) -> tuple[Path, Path]:
    return (
        _write(out_dir, "concavity.csv", scan.to_csv()),
        _write(out_dir, "concavity.json", _json_text(meta)),
    )
