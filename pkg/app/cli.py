"""Command-line front door: time maps, derivatives, exact solutions, FD solves, residuals, moments."""
import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.config import settings
from app.exceptions import ConfigError, EmptyReportError, FracFPEError
from app.schemas import (FAMILY_CONFIGS, Command, FracParams, Grid1D, PhysParams, RunConfig,
                         SolutionFamily)
from app.services.analysis import grid_points, residual_fpe, residual_report_rows, safe_eval
from app.services.csv_io import write_table
from app.services.exact_solutions import build_solution, construction_residuals
from app.services.frac_ops import TimeMap, fractional_deriv
from app.services.oracle import initial_gaussian, ou_moments, solve_fd
from app.services.presets import PRESETS, get_preset

logger = logging.getLogger(__name__)

RUN_KEYS = ("command", "preset", "family", "reading", "lift", "t_min", "t_max", "nt", "v_min",
            "v_max", "nv", "v0", "v0_width", "dt", "test_function", "output_path", "editorial_note")
FRAC_KEYS = ("kind", "alpha", "beta", "lam", "t_horizon", "ab_norm", "gawad_norm")
PHYS_KEYS = ("eta", "big_b", "mass")
FAMILY_KEYS = ("n", "mu", "c0", "c1", "c2", "k0", "s0", "s1", "f0", "amp_a1", "amp_a2", "amp_b0",
               "amp_b1", "amp_b2", "amp_b3", "a0_const", "a1_const", "b0_const", "b1_const",
               "b0_hermite", "b1", "b2", "b3", "p1", "p2", "p3", "r")
KNOWN_KEYS = frozenset(RUN_KEYS + FRAC_KEYS + PHYS_KEYS + FAMILY_KEYS)
KEY_ALIASES = {"lambda": "lam"}

# Family fields that fall back to a shared constant when not given
FAMILY_FALLBACKS: Dict[SolutionFamily, Dict[str, str]] = {
    SolutionFamily.LINEAR_AUX: {},
    SolutionFamily.QUAD_AUX: {"b1_const": "amp_b1", "b0_hermite": "amp_b0"},
    SolutionFamily.SELF_SIMILAR: {"a1_const": "amp_a1", "b0_const": "amp_b0", "b1": "amp_b1",
                                  "b2": "amp_b2"},
}

# Test functions of the deriv command: (f, f')
TEST_FUNCTIONS: Dict[str, Tuple[Callable[[float], float], Callable[[float], float]]] = {
    "linear": (lambda t: t, lambda t: 1.0),
    "quadratic": (lambda t: t * t, lambda t: 2.0 * t),
    "cubic": (lambda t: t ** 3, lambda t: 3.0 * t * t),
    "exponential": (lambda t: math.exp(-t), lambda t: -math.exp(-t)),
    "sine": (math.sin, math.cos),
}

# More than this share of excluded points makes the output pole-dominated
POLE_DOMINATED_FRACTION = 0.5
POLE_EXIT_CODE = 4


def parse_pairs(lines: Iterable[str], source: str = "config") -> Tuple[List[Tuple[str, str]], List[str]]:
    """Flat key=value pairs in order, plus the problems found while reading them."""
    pairs: List[Tuple[str, str]] = []
    problems: List[str] = []
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = KEY_ALIASES.get(key.strip(), key.strip())
        if not sep or not key:
            problems.append(f"{source} line {number}: expected key=value, got '{line}'")
            continue
        if key not in KNOWN_KEYS:
            problems.append(f"{source} line {number}: unknown key '{key}'")
            continue
        pairs.append((key, value.strip()))
    return pairs, problems


def expand(pairs: Sequence[Tuple[str, Any]]) -> Tuple[Dict[str, Any], List[str]]:
    """Apply the (last) preset first, then every explicit pair in order; last write wins."""
    problems: List[str] = []
    values: Dict[str, Any] = {}
    presets = [value for key, value in pairs if key == "preset"]
    if presets:
        name = presets[-1]
        if name not in PRESETS:
            problems.append(f"unknown preset '{name}'; expected one of {', '.join(sorted(PRESETS))}")
        else:
            values.update(get_preset(name))
            values["preset"] = name
    for key, value in pairs:
        values[key] = value
    return values, problems


def _validation_problems(error: ValidationError, prefix: str) -> List[str]:
    problems = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or prefix
        problems.append(f"{prefix}: {location}: {item['msg']}")
    return problems


def family_config_values(family: SolutionFamily, values: Dict[str, Any]) -> Dict[str, Any]:
    config_cls = FAMILY_CONFIGS[family]
    out = {}
    for field in config_cls.model_fields:
        if field in values:
            out[field] = values[field]
        elif field in FAMILY_FALLBACKS[family] and FAMILY_FALLBACKS[family][field] in values:
            out[field] = values[FAMILY_FALLBACKS[family][field]]
    return out


def build_run_config(values: Dict[str, Any], problems: Optional[List[str]] = None) -> RunConfig:
    """Validate expanded key values into a RunConfig, collecting every problem."""
    problems = list(problems or [])
    run_fields: Dict[str, Any] = {key: values[key] for key in RUN_KEYS
                                  if key in values and key not in ("reading", "family")}

    if "kind" in values:
        try:
            run_fields["frac"] = FracParams(**{key: values[key] for key in FRAC_KEYS if key in values})
        except ValidationError as e:
            problems.extend(_validation_problems(e, "frac"))

    if "eta" in values or "big_b" in values:
        try:
            run_fields["phys"] = PhysParams(**{key: values[key] for key in PHYS_KEYS if key in values})
        except ValidationError as e:
            problems.extend(_validation_problems(e, "phys"))

    if "family" in values:
        try:
            family = SolutionFamily(values["family"])
        except ValueError:
            problems.append(f"unknown family '{values['family']}'")
        else:
            family_values = family_config_values(family, values)
            if "reading" in values:
                family_values["reading"] = values["reading"]
            try:
                FAMILY_CONFIGS[family](**family_values)
            except ValidationError as e:
                problems.extend(_validation_problems(e, family.value))
            run_fields["family"] = family
            run_fields["family_config"] = family_values

    if "command" not in values:
        problems.append("missing required key 'command'")
    if problems:
        raise ConfigError(problems)
    try:
        return RunConfig(**run_fields)
    except ValidationError as e:
        raise ConfigError(_validation_problems(e, "run"))


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """Read a flat key=value file, then apply ``overrides`` (also key=value) on top."""
    lines: List[str] = []
    problems: List[str] = []
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                lines = f.readlines()
        except OSError as e:
            raise ConfigError([f"cannot read config file {path}: {e}"])
    pairs, problems = parse_pairs(lines, source=str(path) if path else "config")
    extra, extra_problems = parse_pairs(overrides, source="--set")
    values, preset_problems = expand(pairs + extra)
    return build_run_config(values, problems + extra_problems + preset_problems)


def _time_map(config: RunConfig) -> Optional[TimeMap]:
    return TimeMap(config.frac) if config.frac is not None else None


def _t_values(config: RunConfig, default_max: float) -> np.ndarray:
    t_max = config.t_max if config.t_max is not None else default_max
    return np.linspace(config.t_min, t_max, config.nt)


def _v_values(config: RunConfig, default_half_width: float) -> np.ndarray:
    v_min = config.v_min if config.v_min is not None else -default_half_width
    v_max = config.v_max if config.v_max is not None else default_half_width
    return np.linspace(v_min, v_max, config.nv)


def _base_metadata(config: RunConfig) -> Dict[str, Any]:
    metadata: Dict[str, Any] = {"command": config.command.value}
    if config.preset:
        metadata["preset"] = config.preset
    if config.frac is not None:
        for key, value in config.frac.model_dump(exclude_none=True).items():
            metadata[f"frac.{key}"] = value
        if not config.frac.derivative_backed:
            metadata["frac.note"] = "time map is not backed by a fractional derivative"
    if config.phys is not None:
        for key, value in config.phys.model_dump().items():
            metadata[f"phys.{key}"] = value
    metadata["lift"] = config.lift
    if config.editorial_note:
        metadata["editorial_note"] = config.editorial_note
    return metadata


def _handle_for(config: RunConfig, metadata: Dict[str, Any]):
    family_config = FAMILY_CONFIGS[config.family](**(config.family_config or {}))
    time_map = _time_map(config) if config.lift else None
    handle = build_solution(config.family, config.phys, family_config, time_map=time_map)
    metadata["family"] = config.family.value
    metadata["reading"] = handle.reading
    for reading, score in handle.reading_scores.items():
        metadata[f"reading_score.{reading}"] = score
    for key, value in handle.config.model_dump(exclude_none=True).items():
        if key != "reading":
            metadata[f"family.{key}"] = value
    for key, value in handle.model.divergences().items():
        metadata[f"divergence.{key}"] = value
    return handle


def _run_tau(config: RunConfig, metadata: Dict[str, Any]):
    time_map = _time_map(config)
    default_max = 0.95 * time_map.t_horizon if math.isfinite(time_map.t_horizon) else 1.0
    t = _t_values(config, default_max)
    metadata["strategy"] = time_map.strategy
    tau = np.asarray(time_map.tau(t))
    p = np.asarray(time_map.p(t))
    return ["t", "tau", "p"], list(zip(t, tau, p)), 0


def _run_deriv(config: RunConfig, metadata: Dict[str, Any]):
    if config.test_function not in TEST_FUNCTIONS:
        raise ConfigError([f"unknown test_function '{config.test_function}'; expected one of "
                           f"{', '.join(sorted(TEST_FUNCTIONS))}"])
    f, df = TEST_FUNCTIONS[config.test_function]
    time_map = _time_map(config)
    t = _t_values(config, 0.5 * time_map.t_horizon)
    t = t[t > 0]
    metadata["test_function"] = config.test_function
    rows = []
    for s in t:
        integral = fractional_deriv(f, config.frac, float(s), df)
        reduced = float(time_map.p(float(s))) * df(float(s))
        rows.append((s, integral, reduced, abs(reduced - integral)))
    return ["t", "integral_form", "reduced", "gap"], rows, 0


def _pole_status(values: np.ndarray, metadata: Dict[str, Any]) -> int:
    excluded = int(np.count_nonzero(~np.isfinite(values)))
    metadata["excluded_points"] = excluded
    if excluded:
        logger.warning(f"{excluded} of {values.size} output points sit on poles")
    return POLE_EXIT_CODE if excluded > POLE_DOMINATED_FRACTION * values.size else 0


def _run_exact(config: RunConfig, metadata: Dict[str, Any]):
    handle = _handle_for(config, metadata)
    t_values = _t_values(config, 1.0)
    v_values = _v_values(config, 4.0 * config.phys.sigma)
    t, v = grid_points(t_values, v_values)
    try:
        values = handle.grid(t_values, v_values).ravel()
    except FracFPEError as e:
        if not isinstance(e, ArithmeticError):
            raise
        logger.warning(f"Grid evaluation hit {type(e).__name__}; evaluating point by point")
        values = safe_eval(handle, t, v)
    return ["t", "v", "f"], list(zip(t, v, values)), _pole_status(values, metadata)


def _run_solve(config: RunConfig, metadata: Dict[str, Any]):
    phys = config.phys
    v_values = _v_values(config, 8.0 * phys.sigma)
    try:
        grid = Grid1D(v_min=float(v_values[0]), v_max=float(v_values[-1]), nv=config.nv)
    except ValidationError as e:
        raise ConfigError(_validation_problems(e, "grid"))
    t_end = config.t_max if config.t_max is not None else 1.0
    time_map = _time_map(config)
    p_of_t = time_map.p if time_map is not None else None
    init = initial_gaussian(grid, config.v0, config.v0_width, t=config.t_min)
    snapshots = solve_fd(phys, p_of_t, init, t_end, config.dt, n_snapshots=config.nt - 1)
    metadata["dt"] = config.dt
    metadata["mass_drift"] = abs(snapshots[-1].mass() - init.mass())
    rows = [(field.t, v, value) for field in snapshots for v, value in zip(grid.nodes(), field.values)]
    return ["t", "v", "f"], rows, 0


def _run_residual(config: RunConfig, metadata: Dict[str, Any]):
    handle = _handle_for(config, metadata)
    t_values = _t_values(config, 1.0)
    p_of_t = handle.p_of_t()
    if p_of_t is not None:
        positive = np.asarray(p_of_t(t_values)) > 0
        if not np.all(positive):
            logger.warning(f"Skipping {np.count_nonzero(~positive)} times where p(t) vanishes")
        t_values = t_values[positive]
    v_values = _v_values(config, 4.0 * config.phys.sigma)
    t, v = grid_points(t_values, v_values)
    t_horizon = handle.time_map.t_horizon if handle.lifted else None
    if t_horizon is not None and not math.isfinite(t_horizon):
        t_horizon = None
    report = residual_fpe(handle, config.phys, p_of_t, t, v, t_horizon=t_horizon, t_floor=config.t_min)
    metadata.update({"l_inf": report.l_inf, "l2": report.l2, "rel_l_inf": report.rel_l_inf,
                     "term_scale": report.term_scale, "excluded_points": len(report.excluded_points)})
    for key, value in construction_residuals(handle).items():
        metadata[f"construction.{key}"] = value
    status = POLE_EXIT_CODE if report.excluded_fraction > POLE_DOMINATED_FRACTION else 0
    return ["t", "v", "residual"], residual_report_rows(report), status


def _run_moments(config: RunConfig, metadata: Dict[str, Any]):
    phys = config.phys
    t = _t_values(config, 10.0)
    time_map = _time_map(config) if config.lift else None
    tau = np.asarray(time_map.tau(t)) if time_map is not None else t.copy()
    mean_sq0 = config.v0 ** 2 + config.v0_width ** 2
    mean, mean_sq = ou_moments(phys, config.v0, mean_sq0, tau)
    mean_c, mean_sq_c = ou_moments(phys, config.v0, mean_sq0, t)
    metadata["v0"] = config.v0
    metadata["v0_width"] = config.v0_width
    columns = ["t", "tau", "mean", "mean_square", "mean_classical", "mean_square_classical"]
    return columns, list(zip(t, tau, np.atleast_1d(mean), np.atleast_1d(mean_sq),
                             np.atleast_1d(mean_c), np.atleast_1d(mean_sq_c))), 0


COMMANDS = {
    Command.TAU: _run_tau,
    Command.DERIV: _run_deriv,
    Command.EXACT: _run_exact,
    Command.SOLVE: _run_solve,
    Command.RESIDUAL: _run_residual,
    Command.MOMENTS: _run_moments,
}


def output_path_for(config: RunConfig) -> Path:
    if config.output_path:
        return Path(config.output_path)
    return settings.ensure_output_dir() / f"{config.preset or config.command.value}.csv"


def run(config: RunConfig) -> Tuple[Path, int]:
    """Execute one command and write its CSV; returns (path, exit status)."""
    logger.info(f"Running '{config.command.value}'" + (f" (preset {config.preset})" if config.preset else ""))
    metadata = _base_metadata(config)
    try:
        columns, rows, status = COMMANDS[config.command](config, metadata)
    except ValidationError as e:
        raise ConfigError(_validation_problems(e, config.command.value))
    path = write_table(output_path_for(config), columns, rows, metadata)
    if status:
        logger.error(f"Output is pole-dominated; exit status {status}")
    else:
        logger.info(f"Finished '{config.command.value}'")
    return path, status


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Fractional Fokker-Planck toolkit: time maps, exact solutions and verification")
    parser.add_argument('--config', type=str, default=None,
                        help='Path to a flat key=value configuration file')
    parser.add_argument('--command', type=str, choices=[c.value for c in Command], default=None,
                        help='Command to run (overrides the config file)')
    parser.add_argument('--preset', type=str, choices=sorted(PRESETS), default=None,
                        help='Named figure parameter set')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one configuration key; may be repeated')
    parser.add_argument('--output', type=str, default=None,
                        help='Output CSV path')
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='Log debug output')
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format=settings.LOG_FORMAT,
    )
    overrides = []
    if args.preset:
        overrides.append(f"preset={args.preset}")
    if args.command:
        overrides.append(f"command={args.command}")
    overrides.extend(args.overrides)
    if args.output:
        overrides.append(f"output_path={args.output}")
    try:
        config = load_config(args.config, overrides)
        path, status = run(config)
    except ConfigError as e:
        for problem in e.problems:
            logger.error(f"Configuration error: {problem}")
        return e.exit_code
    except EmptyReportError as e:
        logger.error(f"Pole-dominated output: {e}")
        return e.exit_code
    except FracFPEError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    print(path)
    return status


if __name__ == "__main__":
    sys.exit(main())
