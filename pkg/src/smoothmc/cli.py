"""Command-line interface: ``smoothmc {simulate,baseline,smc,compare}``.

Exit codes: 0 success, 1 input parse error, 2 invalid configuration,
3 runtime or empty-result error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .crn import ModelError, SIR_MODEL, load_model, parse_model
from .evaluation import EmptySelectionError, SurfaceRecord, compare_reports, format_table, table_csv
from .experiment import ExperimentConfig, baseline_for, parse_design, read_table_csv, run, write_baseline_csv
from .kernels import KernelParams
from .monitor import PropertySyntaxError
from .query import STRATEGIES, QueryConfig
from .ssa import simulate_streams, write_trajectory_csv
from .svgp import FitError, FitOptions

EXIT_OK, EXIT_PARSE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("smoothmc")


class ConfigError(ValueError):
    pass


class InputParseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


_SECTIONS = {"query": QueryConfig, "fit": FitOptions, "kernel": KernelParams}


def _coerce(cls, key: str, raw: str):
    if key not in {f.name for f in fields(cls)} or key in _SECTIONS:
        raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
    default = getattr(cls(), key)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def read_config(path) -> ExperimentConfig:
    """Load an INI file with sections ``experiment``, ``query``, ``fit``, ``kernel``.

    Relative ``model_path``/``property_path`` entries resolve against the
    file's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise InputParseError(f"{path}: {exc}") from None
    unknown = set(parser.sections()) - {"experiment", *_SECTIONS}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    try:
        parts = {
            name: cls(**{k: _coerce(cls, k, v) for k, v in parser[name].items()}) if parser.has_section(name) else cls()
            for name, cls in _SECTIONS.items()
        }
        top = {}
        if parser.has_section("experiment"):
            for k, v in parser["experiment"].items():
                if k in ("model_path", "property_path"):
                    p = Path(v.strip())
                    top[k] = str(p if p.is_absolute() else path.parent / p)
                else:
                    top[k] = _coerce(ExperimentConfig, k, v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig(**top, **parts)


def _override(config: ExperimentConfig, args) -> ExperimentConfig:
    top, query, kernel = {}, {}, {}
    for attr, key in (
        ("model", "model_path"),
        ("property_file", "property_path"),
        ("property", "property"),
        ("seed", "seed"),
        ("threads", "threads"),
        ("t_end", "t_end"),
        ("initial_design", "initial_design"),
        ("inducing", "inducing"),
        ("n_traj", "n_traj"),
        ("iterations", "active_iterations"),
        ("eval_grid", "eval_grid"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            top[key] = value
    if getattr(args, "query", None) is not None:
        query["strategy"] = args.query
    if getattr(args, "batch_size", None) is not None:
        query["batch_size"] = args.batch_size
    if getattr(args, "length_scale", None) is not None:
        kernel["length_scale"] = args.length_scale
    if query:
        top["query"] = replace(config.query, **query)
    if kernel:
        top["kernel"] = replace(config.kernel, **kernel)
    return replace(config, **top)


def _resolve_config(args) -> ExperimentConfig:
    base = read_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    try:
        config = _override(base, args)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if config.model_path is not None and not Path(config.model_path).is_file():
        raise ConfigError(f"model file not found: {config.model_path}")
    if config.property_path is not None and not Path(config.property_path).is_file():
        raise ConfigError(f"property file not found: {config.property_path}")
    return config


def _load_model(path):
    if path is None:
        return parse_model(SIR_MODEL)
    if not Path(path).is_file():
        raise ConfigError(f"model file not found: {path}")
    return load_model(path)


def _parse_point(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise InputParseError(f"cannot parse point {text!r}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    point = _parse_point(args.point)
    try:
        model.check_point(point)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.traj < 1 or not args.t_end > 0:
        raise ConfigError("--traj and --t-end must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trajs = simulate_streams(model, point, args.t_end, args.seed, range(args.traj))
    for j, traj in enumerate(trajs):
        path = out / f"traj_{j}.csv"
        write_trajectory_csv(traj, model.species, path)
        print(path)
    return EXIT_OK


def cmd_baseline(args) -> int:
    config = _resolve_config(args)
    try:
        parse_design(f"grid:{args.grid}")
        config = replace(config, baseline_grid=f"grid:{args.grid}", baseline_runs=args.runs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    grid, est = baseline_for(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_baseline_csv(out, grid, est)
    print(out)
    return EXIT_OK


def cmd_smc(args) -> int:
    config = _resolve_config(args)
    report = run(config, args.mode)
    out = report.save(args.out)
    print(out)
    return EXIT_OK


def cmd_compare(args) -> int:
    if not Path(args.baseline).is_file():
        raise ConfigError(f"baseline file not found: {args.baseline}")
    try:
        points, cols = read_table_csv(args.baseline, ["estimate"])
    except ValueError as exc:
        raise InputParseError(str(exc)) from None
    records = []
    for d in args.reports:
        if not (Path(d) / "surface.csv").is_file():
            raise ConfigError(f"not a report directory: {d}")
        records.append(SurfaceRecord.from_dir(d))
    rows = compare_reports(records, points, cols["estimate"], args.threshold)
    print(format_table(rows))
    if args.csv:
        Path(args.csv).write_text(table_csv(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI experiment configuration")
    p.add_argument("--model", help="reaction network file (default: built-in SIR)")
    p.add_argument("--property", help="property formula text")
    p.add_argument("--property-file", help="file holding the property formula")
    p.add_argument("--t-end", type=float, help="simulation horizon")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--threads", type=int, help="simulation worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothmc", description="Smoothed statistical model checking for CRNs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="dump SSA trajectories as CSV")
    p.add_argument("--model", help="reaction network file (default: built-in SIR)")
    p.add_argument("--point", required=True, help="comma-separated parameter values")
    p.add_argument("--t-end", type=float, default=120.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--traj", type=int, default=1, help="number of trajectories (stream indices 0..n-1)")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("baseline", help="naive per-point Monte Carlo estimate on a grid")
    _add_experiment_flags(p)
    p.add_argument("--grid", default="20x20")
    p.add_argument("--runs", type=int, default=2000)
    p.add_argument("--out", default="baseline.csv")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("smc", help="smoothed model checking run")
    _add_experiment_flags(p)
    p.add_argument("--mode", choices=("dense", "sparse", "active"), default="sparse")
    p.add_argument("--query", help=f"query strategy: {', '.join(STRATEGIES)}")
    p.add_argument("--initial-design", help="e.g. grid:10x10, lhs:100")
    p.add_argument("--inducing", help="initial, grid:AxB or kmeans:k")
    p.add_argument("--n-traj", type=int, help="trajectories per point")
    p.add_argument("--iterations", type=int, help="active iterations")
    p.add_argument("--batch-size", type=int, help="points per active batch")
    p.add_argument("--length-scale", type=float, help="kernel length scale (unit cube)")
    p.add_argument("--eval-grid", help="evaluation grid, e.g. grid:20x20")
    p.add_argument("--out", default="report", help="report directory")
    p.set_defaults(func=cmd_smc)

    p = sub.add_parser("compare", help="accuracy table of reports against a baseline")
    p.add_argument("reports", nargs="+", help="report directories")
    p.add_argument("--baseline", required=True, help="baseline CSV")
    p.add_argument("--threshold", type=float, default=0.02)
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad flags; unknown choices are config errors too
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputParseError, ModelError, PropertySyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (EmptySelectionError, FitError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
