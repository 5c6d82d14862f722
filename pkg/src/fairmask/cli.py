"""``fairmask`` command line: measure, generate, optimize, benchmark.

Exit codes: 0 success, 2 bad input or configuration, 3 internal failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import harness, synth
from .dataset import ColumnRoles, DatasetView, EncodeOptions, group_stats, load_csv, write_csv
from .errors import FairmaskError
from .heuristics import SolverConfig, solve
from .measures import BUILTIN_MEASURES, evaluate_all, positive_rates
from .objective import PoolMode, build_pool, materialize

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("fairmask")

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 2, 3

OPTIMIZE_DEFAULTS: dict[str, Any] = {
    "mode": "remove",
    "measure": "sdp_sum",
    "solver": "ga",
    "selection": "elitist",
    "pop": 100,
    "gens": 500,
    "mutation": 0.05,
    "tournament_size": 2,
    "patience": 50,
    "budget": None,
    "seed": 0,
    "synthetic": None,
    "generate": False,
    "synthetic_rows": None,
    "output": None,
    "report": None,
    "provenance_column": None,
    "seed_all_ones": True,
    "min_fraction": 0.0,
    "threads": None,
    "input": None,
    "label": None,
    "protected": None,
    "positive": None,
    "features": None,
    "categorical": None,
    "sep": ",",
}


class UsageError(Exception):
    pass


def _split(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return tuple(v.strip() for v in str(value).split(",") if v.strip())


def _add_data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--input", required=required, help="input CSV file")
    p.add_argument("--label", required=required, help="label column")
    p.add_argument("--protected", required=required, help="protected attribute column")
    p.add_argument("--positive", default=None, help="raw label value meaning y=1")
    p.add_argument("--features", default=None, help="comma-separated feature columns")
    p.add_argument("--categorical", default=None, help="comma-separated categorical columns")
    p.add_argument("--sep", default=None, help="field separator (default ',')")


def _roles_and_options(cfg: dict) -> tuple[ColumnRoles, EncodeOptions]:
    for key in ("input", "label", "protected"):
        if not cfg.get(key):
            raise UsageError(f"missing required setting {key!r}")
    roles = ColumnRoles(
        cfg["label"], cfg["protected"], _split(cfg.get("features")) or (), cfg.get("positive")
    )
    options = EncodeOptions(categorical_columns=_split(cfg.get("categorical")), sep=cfg.get("sep") or ",")
    return roles, options


def _load(cfg: dict):
    roles, options = _roles_and_options(cfg)
    return load_csv(cfg["input"], roles, options), roles, options


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def describe(view: DatasetView) -> dict:
    counts, _ = group_stats(view)
    rates = positive_rates(view).rates
    names = view.source.group_names
    return {
        "n": len(view),
        "k": view.k,
        "group_sizes": {g: int(c) for g, c in zip(names, counts)},
        "positive_rates": {
            g: (None if np.isnan(r) else float(r)) for g, r in zip(names, rates)
        },
        "scores": evaluate_all(view),
    }


def cmd_measure(args) -> int:
    data, _, _ = _load(vars(args))
    _print_json(describe(DatasetView.full(data)))
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = vars(args)
    real, roles, options = _load(cfg)
    if args.output is None:
        raise UsageError("missing required setting 'output'")
    if args.external:
        synthetic = load_csv(args.external, roles, options, like=real)
        shutil.copyfile(args.external, args.output)
    else:
        rows = real.n if args.rows is None else args.rows
        synthetic = synth.generate(real, rows, args.seed)
        write_csv(DatasetView.full(synthetic), args.output)
    _print_json(
        {
            "rows": synthetic.n,
            "output": args.output,
            "seed": None if args.external else args.seed,
            "ks": synth.ks_statistics(real, synthetic),
        }
    )
    return EXIT_OK


def _read_config(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        return tomllib.loads(text)
    return json.loads(text)


def resolve_optimize_config(args) -> dict:
    """Defaults, then config file keys, then explicit flags (flags win)."""
    cfg = dict(OPTIMIZE_DEFAULTS)
    if args.config:
        file_cfg = _read_config(args.config)
        unknown = set(file_cfg) - set(OPTIMIZE_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in OPTIMIZE_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _solver_config(cfg: dict) -> SolverConfig:
    try:
        return SolverConfig(
            kind=cfg["solver"],
            pop_size=int(cfg["pop"]),
            generations=int(cfg["gens"]),
            mutation_rate=float(cfg["mutation"]),
            selection=cfg["selection"],
            tournament_size=int(cfg["tournament_size"]),
            patience=int(cfg["patience"]),
            seed=int(cfg["seed"]),
            evaluation_budget=None if cfg["budget"] is None else int(cfg["budget"]),
            seed_all_ones=bool(cfg["seed_all_ones"]),
            workers=None if cfg["threads"] is None else int(cfg["threads"]),
        )
    except ValueError as exc:
        raise UsageError(f"invalid solver settings: {exc}") from None


def cmd_optimize(args) -> int:
    cfg = resolve_optimize_config(args)
    try:
        mode = PoolMode(cfg["mode"])
    except ValueError:
        raise UsageError(f"invalid setting 'mode': {cfg['mode']!r}") from None
    if cfg["measure"] not in BUILTIN_MEASURES:
        raise UsageError(f"invalid setting 'measure': {cfg['measure']!r}")
    config = _solver_config(cfg)
    real, roles, options = _load(cfg)

    synthetic = None
    if mode.needs_synthetic:
        if cfg["synthetic"]:
            synthetic = load_csv(cfg["synthetic"], roles, options, like=real)
        elif cfg["generate"]:
            rows = real.n if cfg["synthetic_rows"] is None else int(cfg["synthetic_rows"])
            synthetic = synth.generate(real, rows, config.seed)
        else:
            raise UsageError(f"mode {mode.value!r} needs setting 'synthetic' or 'generate'")

    spec = build_pool(mode, real, synthetic, cfg["measure"], min_fraction=float(cfg["min_fraction"]))
    baseline_mask = np.ones(spec.size, dtype=bool)
    report = solve(spec, config)
    mask = report.best_mask
    fell_back = False
    baseline_score = float(solve(spec, dataclasses.replace(config, kind="original")).best_score)
    if config.seed_all_ones and report.best_score > baseline_score:
        logger.warning("solver result is worse than the unmodified pool; keeping the pool")
        mask, fell_back = baseline_mask, True
    view = materialize(spec, mask)

    if cfg["output"]:
        write_csv(view, cfg["output"], cfg["provenance_column"])
    out = {
        "config": cfg,
        "pool_size": spec.size,
        "popcount": int(mask.sum()),
        "selected_rows": len(view),
        "synthetic_rows_selected": int(spec.synthetic[view.selected].sum()),
        "before": describe(DatasetView.full(real)),
        "baseline_pool": describe(materialize(spec, baseline_mask)),
        "after": describe(view),
        "objective": {"baseline": baseline_score, "best": float(report.best_score)},
        "fell_back_to_baseline": fell_back,
        "evaluations": report.evaluations,
        "generations": int(report.trace.shape[0] - 1),
        "terminated_early": report.terminated_early,
        "runtime_seconds": report.wall_time,
        "seed": config.seed,
    }
    if cfg["report"]:
        Path(cfg["report"]).write_text(json.dumps(out, indent=2, sort_keys=True, default=_json_default))
    _print_json({k: out[k] for k in ("popcount", "pool_size", "objective", "evaluations", "runtime_seconds")})
    return EXIT_OK


def cmd_benchmark(args) -> int:
    raw = _read_config(args.plan)
    if not raw:
        raise UsageError("plan is empty; required keys: ['datasets', 'solvers']")
    try:
        plan = harness.plan_from_dict(raw, base_dir=Path(args.plan).parent)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        plan.output = args.out
    if args.grid:
        pops = [int(v) for v in _split(args.pop_sizes)] if args.pop_sizes else harness.GRID_POP_SIZES
        gens = [int(v) for v in _split(args.generations)] if args.generations else harness.GRID_GENERATIONS
        result = harness.grid_search(plan, pop_sizes=pops, generations=gens)
    else:
        result = harness.run_plan(plan)
    print(result.table.to_string(index=False))
    failed = int(result.table["failed"].sum()) if "failed" in result.table else 0
    return EXIT_FAILURE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairmask", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="report group rates and SDP scores of a CSV")
    _add_data_args(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("generate", help="fit a Gaussian copula and write synthetic rows")
    _add_data_args(p)
    p.add_argument("--rows", type=int, default=None, help="rows to sample (default: input size)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--external", default=None, help="validate and pass through this synthetic CSV")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("optimize", help="select a fairer subset and write it")
    p.add_argument("--config", default=None, help="JSON or TOML file with settings")
    _add_data_args(p, required=False)
    p.add_argument("--mode", choices=[m.value for m in PoolMode])
    p.add_argument("--measure", choices=BUILTIN_MEASURES)
    p.add_argument("--solver", choices=["original", "random", "ga"])
    p.add_argument("--selection", choices=["elitist", "tournament", "roulette"])
    p.add_argument("--pop", type=int)
    p.add_argument("--gens", type=int)
    p.add_argument("--mutation", type=float)
    p.add_argument("--tournament-size", dest="tournament_size", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--budget", type=int, help="random-search evaluations")
    p.add_argument("--seed", type=int)
    p.add_argument("--synthetic", help="synthetic CSV for modes that need one")
    p.add_argument("--generate", action="store_const", const=True, help="generate synthetic data")
    p.add_argument("--synthetic-rows", dest="synthetic_rows", type=int)
    p.add_argument("--output", help="where to write the selected rows")
    p.add_argument("--report", help="where to write the JSON report")
    p.add_argument("--provenance-column", dest="provenance_column")
    p.add_argument("--no-seed-ones", dest="seed_all_ones", action="store_const", const=False)
    p.add_argument("--min-fraction", dest="min_fraction", type=float)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("benchmark", help="run an experiment plan")
    p.add_argument("--plan", required=True, help="JSON or TOML plan file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--grid", action="store_true", help="run the GA population/generation grid")
    p.add_argument("--pop-sizes", dest="pop_sizes", default=None)
    p.add_argument("--generations", default=None)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except (UsageError, FairmaskError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"fairmask: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        logger.exception("internal failure")
        print(f"fairmask: internal failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
