"""Command-line front end: JSON configs in, CSV/JSON/PGM/PPM/PNG artifacts out.

Subcommands: thresholds | simulate | pss | find-orbit | basins | cstar.
A run is described by a JSON config (--config) with blocks "model",
"integrator", one command block, "output_dir" and "emit"; any field can be
overridden on the command line with repeatable --set dotted.path=value
flags.  Identical configs produce byte-identical artifacts.

Exit codes: 0 success, 2 config error, 3 solver no-convergence,
4 continuation bracket error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import numpy as np

from .basins import GridSpec, sweep
from .continuation import (
    BracketInvalidError,
    OrbitLossError,
    SeedInvalidError,
    find_c_star,
)
from .integrator import IntegratorConfig, StepUnderflowError, integrate, strobe
from .model import ModelParams, State
from .poincare import (
    EventInterruptedError,
    NoConvergenceError,
    PoincareMapSpec,
    find_orbit,
    pss_scan,
    radial_fan_seeds,
)
from .thresholds import compute_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_BRACKET = 4
EXIT_IO = 5

_COMMAND_BLOCKS = {
    "thresholds": "thresholds",
    "simulate": "simulate",
    "pss": "scan",
    "find-orbit": "orbit",
    "basins": "grid",
    "cstar": "continuation",
}

_DEFAULT_FORMATS = {
    "thresholds": ["json"],
    "simulate": ["csv", "json", "png"],
    "pss": ["csv", "png"],
    "find-orbit": ["json"],
    "basins": ["csv", "pgm", "ppm", "png"],
    "cstar": ["json", "png"],
}

_DEFAULT_MODEL = {"c": 0.0, "alpha": 0.5, "lambda": 0.01, "delta": 30.0,
                  "omega": 1.3, "stiffness": "graphene"}

_DEFAULT_BLOCKS = {
    "thresholds": {},
    "simulate": {"x0": 0.0, "v0": 0.0, "t0": 0.0, "t_end": None, "samples": 1001},
    "scan": {"seeds": {"kind": "radial_fan", "rays": 16, "radii": 12,
                       "center": [0.0, 0.0]},
             "x_range": [-0.4, 0.55], "v_range": [-0.4, 0.4],
             "iterations": 500, "n": 1},
    "orbit": {"n": 1, "guess": [0.0, 0.0]},
    "grid": {"x_range": [-0.4, 0.55], "v_range": [-0.4, 0.4],
             "nx": 100, "nv": 100, "iterations": None,
             "attractors": [], "match_tol": 1e-4},
    "continuation": {"n": 3, "guess": [0.0, 0.0], "c_hi": 2e-2,
                     "criterion": "basin"},
}


class ConfigError(ValueError):
    pass


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[parts[-1]] = value


def build_config(command: str, config_path: str | None, sets: list[str],
                 out_dir: str | None, formats: list[str] | None) -> dict:
    """Assemble defaults, file config and --set overrides into a run config."""
    block = _COMMAND_BLOCKS[command]
    cfg = {
        "model": copy.deepcopy(_DEFAULT_MODEL),
        "integrator": {},
        block: copy.deepcopy(_DEFAULT_BLOCKS[block]),
        "output_dir": ".",
        "emit": list(_DEFAULT_FORMATS[command]),
    }
    if config_path is not None:
        try:
            with open(config_path) as fh:
                file_cfg = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {config_path}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {config_path} is not valid JSON: {e}")
        if not isinstance(file_cfg, dict):
            raise ConfigError("config root must be a JSON object")
        present = [b for b in _COMMAND_BLOCKS.values() if b in file_cfg and b != "thresholds"]
        foreign = [b for b in present if b != block]
        if foreign:
            raise ConfigError(
                f"config holds block(s) {foreign} not belonging to command {command!r}")
        cfg = _deep_merge(cfg, file_cfg)
    for assignment in sets:
        _apply_set(cfg, assignment)
    if out_dir is not None:
        cfg["output_dir"] = out_dir
    if formats:
        cfg["emit"] = list(formats)
    bad = set(cfg["emit"]) - {"csv", "json", "pgm", "ppm", "png"}
    if bad:
        raise ConfigError(f"unknown emit formats: {sorted(bad)}")
    return cfg


def _parse_model(cfg: dict) -> ModelParams:
    try:
        return ModelParams.from_dict(cfg["model"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad model block: {e}")


def _parse_integrator(cfg: dict) -> IntegratorConfig:
    try:
        return IntegratorConfig.from_dict(cfg.get("integrator", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad integrator block: {e}")


def _out_dir(cfg: dict) -> Path:
    path = Path(cfg["output_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_text(path: Path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def _emit(cfg, fmt):
    return fmt in cfg["emit"]


def cmd_thresholds(cfg: dict) -> int:
    p = _parse_model(cfg)
    report = compute_report(p)
    print(report.table())
    out = _out_dir(cfg)
    if _emit(cfg, "json"):
        _write_text(out / "thresholds.json", report.to_json() + "\n")
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    p = _parse_model(cfg)
    icfg = _parse_integrator(cfg)
    blk = cfg["simulate"]
    t0 = float(blk.get("t0", 0.0))
    t_end = blk.get("t_end")
    t_end = float(t_end) if t_end is not None else 50.0 * p.period
    samples = int(blk.get("samples", 1001))
    s0 = State(float(blk.get("x0", 0.0)), float(blk.get("v0", 0.0)), t0)
    try:
        outcome = integrate(p, icfg, s0, t_end, sample_times=samples)
    except StepUnderflowError as e:
        print(f"integration stalled: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    out = _out_dir(cfg)
    if _emit(cfg, "csv"):
        with open(out / "trajectory.csv", "w") as fh:
            outcome.samples_to_csv(fh)
    if _emit(cfg, "json"):
        _write_text(out / "outcome.json",
                    json.dumps(outcome.to_json_dict(), indent=2) + "\n")
    if _emit(cfg, "png"):
        from .plots import plot_trajectory
        plot_trajectory(outcome, out / "trajectory.png",
                        title=f"x0={s0.x}, v0={s0.v}")
    print(f"{outcome.kind}: final x={outcome.final_state.x!r} "
          f"v={outcome.final_state.v!r} max|x|={outcome.max_abs_x!r}")
    return EXIT_OK


def _build_seeds(blk: dict) -> list[tuple[float, float]]:
    seeds = blk["seeds"]
    if isinstance(seeds, list):
        return [(float(a), float(b)) for a, b in seeds]
    if isinstance(seeds, dict) and seeds.get("kind") == "radial_fan":
        return radial_fan_seeds(
            int(seeds.get("rays", 16)), int(seeds.get("radii", 12)),
            tuple(blk["x_range"]), tuple(blk["v_range"]),
            center=tuple(seeds.get("center", (0.0, 0.0))))
    raise ConfigError(f"unrecognized seeds spec: {seeds!r}")


def cmd_pss(cfg: dict) -> int:
    p = _parse_model(cfg)
    icfg = _parse_integrator(cfg)
    blk = cfg["scan"]
    seeds = _build_seeds(blk)
    spec = PoincareMapSpec(p, icfg, int(blk.get("n", 1)))
    cloud = pss_scan(spec, seeds, int(blk.get("iterations", 500)))
    out = _out_dir(cfg)
    if _emit(cfg, "csv"):
        with open(out / "pss.csv", "w") as fh:
            cloud.to_csv(fh)
    if _emit(cfg, "png"):
        from .plots import plot_pss
        plot_pss(cloud, out / "pss.png",
                 title=f"omega={p.omega}, c={p.c}")
    n_pts = sum(pts.shape[0] for pts in cloud.points)
    print(f"scanned {len(seeds)} seeds, {n_pts} section points")
    return EXIT_OK


def cmd_find_orbit(cfg: dict) -> int:
    p = _parse_model(cfg)
    icfg = _parse_integrator(cfg)
    blk = cfg["orbit"]
    spec = PoincareMapSpec(p, icfg, int(blk.get("n", 1)))
    guess = tuple(float(g) for g in blk.get("guess", (0.0, 0.0)))
    try:
        orbit = find_orbit(spec, guess)
    except (NoConvergenceError, EventInterruptedError, StepUnderflowError) as e:
        print(f"no convergence: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    out = _out_dir(cfg)
    if _emit(cfg, "json"):
        _write_text(out / "orbit.json",
                    json.dumps(orbit.to_json_dict(), indent=2) + "\n")
    mus = ", ".join(f"{m.real:+.6f}{m.imag:+.6f}j" for m in orbit.multipliers)
    print(f"n={orbit.n} point=({orbit.point.x!r}, {orbit.point.v!r}) "
          f"stable={orbit.stable} multipliers=[{mus}] residual={orbit.residual:.2e}")
    return EXIT_OK


def _find_attractors(p, icfg, entries) -> list:
    orbits = []
    for entry in entries:
        spec = PoincareMapSpec(p, icfg, int(entry["n"]))
        orbits.append(find_orbit(spec, tuple(float(g) for g in entry["guess"])))
    return orbits


def cmd_basins(cfg: dict) -> int:
    p = _parse_model(cfg)
    icfg = _parse_integrator(cfg)
    blk = cfg["grid"]
    try:
        attractors = _find_attractors(p, icfg, blk.get("attractors", []))
    except (NoConvergenceError, EventInterruptedError, StepUnderflowError) as e:
        print(f"attractor search failed: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    try:
        spec = GridSpec(
            x_range=tuple(blk["x_range"]), v_range=tuple(blk["v_range"]),
            nx=int(blk["nx"]), nv=int(blk["nv"]),
            iterations=blk.get("iterations"),
            attractors=tuple(attractors),
            match_tol=float(blk.get("match_tol", 1e-4)))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad grid block: {e}")

    def progress(done, total):
        if done % max(1, total // 20) < spec.nx:
            print(f"  {done}/{total} cells", file=sys.stderr)

    grid = sweep(p, icfg, spec, progress=progress)
    out = _out_dir(cfg)
    if _emit(cfg, "csv"):
        with open(out / "basins.csv", "w") as fh:
            grid.to_csv(fh)
    if _emit(cfg, "pgm"):
        with open(out / "basins_amplitude.pgm", "w") as fh:
            grid.to_pgm(fh)
    if _emit(cfg, "ppm"):
        with open(out / "basins_classes.ppm", "w") as fh:
            grid.to_ppm(fh)
    if _emit(cfg, "png"):
        from .plots import plot_basin_amplitude, plot_basin_classes
        plot_basin_classes(grid, out / "basins_classes.png",
                           title=f"omega={p.omega}, c={p.c}")
        plot_basin_amplitude(grid, out / "basins_amplitude.png",
                             title=f"omega={p.omega}, c={p.c}")
    fractions = {name: grid.fraction(name)
                 for name in ("Bounded", "PullIn", "Escape", "Unresolved")}
    print("class fractions:", json.dumps(fractions))
    return EXIT_OK


def cmd_cstar(cfg: dict) -> int:
    p = _parse_model(cfg)
    icfg = _parse_integrator(cfg)
    blk = cfg["continuation"]
    spec = PoincareMapSpec(p, icfg, int(blk["n"]))
    try:
        seed = find_orbit(spec, tuple(float(g) for g in blk["guess"]))
    except (NoConvergenceError, EventInterruptedError, StepUnderflowError) as e:
        print(f"seed orbit search failed: {e}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    try:
        result = find_c_star(spec, seed, float(blk["c_hi"]),
                             criterion=blk.get("criterion", "basin"))
    except (BracketInvalidError, SeedInvalidError) as e:
        print(f"bracket error: {e}", file=sys.stderr)
        return EXIT_BRACKET
    out = _out_dir(cfg)
    if _emit(cfg, "json"):
        _write_text(out / "cstar.json",
                    json.dumps(result.to_json_dict(), indent=2) + "\n")
    if _emit(cfg, "png"):
        from .plots import plot_continuation
        plot_continuation(result, out / "cstar.png",
                          title=f"n={result.n}, omega={result.omega}")
    print(f"c* = {result.c_star!r} bracket=({result.bracket[0]!r}, {result.bracket[1]!r}) "
          f"criterion={result.criterion} probes={len(result.steps)}")
    return EXIT_OK


_COMMANDS = {
    "thresholds": cmd_thresholds,
    "simulate": cmd_simulate,
    "pss": cmd_pss,
    "find-orbit": cmd_find_orbit,
    "basins": cmd_basins,
    "cstar": cmd_cstar,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memsosc",
        description="Forced parallel-plate MEMS oscillator toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON run config")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field by dotted path (repeatable)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker threads for grid/scan sweeps")
        sp.add_argument("--format", action="append", default=None,
                        choices=["csv", "json", "pgm", "ppm", "png"],
                        help="emit only these formats (repeatable)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.workers is not None:
        import numba
        numba.set_num_threads(max(1, min(args.workers, numba.config.NUMBA_NUM_THREADS)))
    try:
        cfg = build_config(args.command, args.config, args.set, args.out, args.format)
        return _COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
