"""Repeated-trial experiments, result tables and an exhaustive oracle.

A plan crosses datasets x pool modes x measures x solvers; every cell is
run ``repeats`` times with seeds ``seed_base + trial``. Synthetic data for
trial ``t`` is generated once per dataset with the same seed and shared by
all cells of that trial. Raw per-trial records go to
``results_raw.jsonl``, aggregated mean/std tables to CSV.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from . import synth
from .dataset import ColumnRoles, DatasetView, EncodedDataset, EncodeOptions, encode_frame, load_csv
from .errors import PoolTooLarge
from .heuristics import Selection, SolverConfig, SolverKind, solve
from .measures import evaluate
from .objective import (
    ObjectiveSpec,
    PoolMode,
    build_pool,
    fitness,
    resolve_workers,
    scores_from_stats,
    view_stats,
)

logger = logging.getLogger(__name__)

BRUTE_FORCE_CAP = 24
CELL_KEYS = ("dataset", "mode", "measure", "solver")


def make_biased_dataset(
    n: int = 2000,
    group_rates: Sequence[float] = (0.7, 0.5, 0.4, 0.2),
    group_weights: Sequence[float] | None = None,
    n_numeric: int = 2,
    categories: Sequence[str] = ("a", "b", "c"),
    seed: int = 0,
) -> EncodedDataset:
    """A seeded table whose groups have the given positive-label rates.

    Features are loosely tied to the label: numeric columns are shifted by
    the label, the categorical column leans towards its first category for
    positives. Group codes follow the order of ``group_rates``.
    """
    rng = np.random.default_rng(seed)
    k = len(group_rates)
    weights = np.ones(k) if group_weights is None else np.asarray(group_weights, dtype=float)
    weights = weights / weights.sum()
    counts = np.floor(weights * n).astype(int)
    counts[: n - counts.sum()] += 1
    groups = np.repeat(np.arange(k), counts)
    labels = np.concatenate(
        [rng.permutation(np.arange(c) < round(r * c)) for c, r in zip(counts, group_rates)]
    ).astype(int)
    order = rng.permutation(n)
    groups, labels = groups[order], labels[order]

    frame = {}
    for j in range(n_numeric):
        frame[f"num{j}"] = np.round(rng.normal(size=n) + 0.8 * labels + 0.2 * j, 6)
    if categories:
        cats = np.asarray(categories, dtype=object)
        lean = rng.random(n) < 0.3 * labels
        frame["cat"] = np.where(lean, cats[0], cats[rng.integers(0, len(cats), n)])
    frame["label"] = labels
    frame["group"] = [f"g{g + 1}" for g in groups]
    df = pd.DataFrame(frame).astype(str)
    cat_cols = ("cat",) if categories else ()
    data = encode_frame(
        df, ColumnRoles("label", "group"), EncodeOptions(categorical_columns=cat_cols)
    )
    return data.with_group_names([f"g{g + 1}" for g in range(k)])


@dataclass(frozen=True)
class DatasetSpec:
    """Where a plan's dataset comes from: a CSV file or the biased generator."""

    name: str
    path: str | None = None
    roles: ColumnRoles | None = None
    options: EncodeOptions = field(default_factory=EncodeOptions)
    biased: dict = field(default_factory=dict)

    def load(self) -> EncodedDataset:
        if self.path is not None:
            if self.roles is None:
                raise ValueError(f"dataset {self.name!r}: roles are required with a path")
            return load_csv(self.path, self.roles, self.options)
        return make_biased_dataset(**self.biased)


def solver_label(config: SolverConfig) -> str:
    if config.kind is SolverKind.GENETIC:
        return f"ga/{config.selection.value}"
    return config.kind.value


@dataclass
class ExperimentPlan:
    datasets: list[DatasetSpec]
    modes: list[str] = field(default_factory=lambda: ["remove"])
    measures: list[str] = field(default_factory=lambda: ["sdp_sum"])
    solvers: list[SolverConfig] = field(default_factory=lambda: [SolverConfig()])
    repeats: int = 15
    seed_base: int = 0
    output: str | None = None
    synthetic_rows: int | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        self.modes = [PoolMode(m).value for m in self.modes]

    def cells(self) -> list[tuple[DatasetSpec, str, str, SolverConfig]]:
        return [
            (ds, mode, measure, solver)
            for ds in self.datasets
            for mode in self.modes
            for measure in self.measures
            for solver in self.solvers
        ]


@dataclass
class ResultTable:
    """Per-trial records plus their per-cell aggregates."""

    records: list[dict]
    table: pd.DataFrame

    @classmethod
    def from_records(cls, records: list[dict], keys: Sequence[str] = CELL_KEYS) -> "ResultTable":
        return cls(records, aggregate(records, keys))

    def write(self, out_dir, table_name: str = "results_table.csv") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "results_raw.jsonl", "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self.table.to_csv(out / table_name, index=False)


def _mean_std(name: str, values: np.ndarray) -> dict:
    if values.size == 0:
        return {f"mean_{name}": math.nan, f"std_{name}": math.nan}
    # centred on the first value so identical trials give exactly (x, 0)
    shifted = values - values[0]
    return {
        f"mean_{name}": float(values[0] + shifted.mean()),
        f"std_{name}": float(shifted.std()),
    }


def aggregate(records: list[dict], keys: Sequence[str] = CELL_KEYS) -> pd.DataFrame:
    """Mean and (population) standard deviation of score and runtime per cell."""
    rows = []
    cells: dict[tuple, list[dict]] = {}
    for rec in records:
        cells.setdefault(tuple(rec[k] for k in keys), []).append(rec)
    for key, recs in cells.items():
        ok = [r for r in recs if r.get("error") is None]
        scores = np.array([r["score"] for r in ok], dtype=float)
        times = np.array([r["runtime"] for r in ok], dtype=float)
        row = dict(zip(keys, key))
        row.update(trials=len(recs), failed=len(recs) - len(ok))
        row.update(_mean_std("score", scores))
        row.update(_mean_std("runtime", times))
        rows.append(row)
    return pd.DataFrame(rows)


def _run_trial(
    real: EncodedDataset,
    synthetic: EncodedDataset | None,
    mode: str,
    measure: str,
    config: SolverConfig,
    seed: int,
) -> dict:
    spec = build_pool(mode, real, synthetic, measure)
    report = solve(spec, dataclasses.replace(config, seed=seed))
    rec = {
        "score": report.best_score,
        "runtime": report.wall_time,
        "evaluations": report.evaluations,
        "popcount": report.popcount,
        "pool_size": spec.size,
        "generations": int(report.trace.shape[0] - 1),
        "terminated_early": report.terminated_early,
        "groups_nonempty": bool(_all_groups_present(spec, report.best_mask)),
    }
    if config.kind is SolverKind.ORIGINAL and mode != "remove":
        # second reading of the baseline: the real data alone
        rec["baseline_real_only"] = evaluate(measure, DatasetView.full(real))
    return rec


def _all_groups_present(spec: ObjectiveSpec, mask) -> bool:
    return bool((view_stats(spec, mask).counts > 0).all())


def _run_cell(cell, real, synthetic_by_trial, plan: ExperimentPlan) -> list[dict]:
    ds, mode, measure, config = cell
    label = solver_label(config)
    records = []
    for trial in range(plan.repeats):
        seed = plan.seed_base + trial
        rec = {
            "dataset": ds.name,
            "mode": mode,
            "measure": measure,
            "solver": label,
            "pop_size": config.pop_size,
            "max_generations": config.generations,
            "trial": trial,
            "seed": seed,
            "error": None,
        }
        try:
            synthetic = synthetic_by_trial[trial] if PoolMode(mode).needs_synthetic else None
            rec.update(_run_trial(real, synthetic, mode, measure, config, seed))
        except Exception as exc:  # recorded, the other cells keep going
            logger.exception("cell %s/%s/%s/%s trial %d failed", ds.name, mode, measure, label, trial)
            rec["error"] = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    return records


def run_plan(plan: ExperimentPlan, keys: Sequence[str] = CELL_KEYS) -> ResultTable:
    """Run every cell of ``plan`` and aggregate; writes outputs if ``plan.output``."""
    data = {ds.name: ds.load() for ds in plan.datasets}
    needs_synth = any(PoolMode(m).needs_synthetic for m in plan.modes)
    synthetic: dict[str, list[EncodedDataset | None]] = {}
    for name, real in data.items():
        if needs_synth:
            model = synth.fit(real)
            rows = plan.synthetic_rows or real.n
            synthetic[name] = [
                synth.sample(model, rows, plan.seed_base + t) for t in range(plan.repeats)
            ]
        else:
            synthetic[name] = [None] * plan.repeats

    cells = plan.cells()
    workers = min(resolve_workers(plan.workers), max(len(cells), 1))

    def work(cell):
        return _run_cell(cell, data[cell[0].name], synthetic[cell[0].name], plan)

    if workers <= 1:
        per_cell = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(workers) as ex:
            per_cell = list(ex.map(work, cells))
    records = [rec for recs in per_cell for rec in recs]
    result = ResultTable.from_records(records, keys)
    if plan.output is not None:
        result.write(plan.output)
    return result


GRID_POP_SIZES = (20, 50, 100, 200)
GRID_GENERATIONS = (50, 100, 200, 500)


def grid_search(
    plan: ExperimentPlan,
    pop_sizes: Sequence[int] = GRID_POP_SIZES,
    generations: Sequence[int] = GRID_GENERATIONS,
    base: SolverConfig | None = None,
) -> ResultTable:
    """GA hyperparameter grid: one result cell per (pop_size, generations).

    ``base`` defaults to the first GA config in the plan, or a tournament
    GA if the plan has none.
    """
    if base is None:
        ga = [s for s in plan.solvers if s.kind is SolverKind.GENETIC]
        base = ga[0] if ga else SolverConfig(selection=Selection.TOURNAMENT)
    configs = [
        dataclasses.replace(base, kind=SolverKind.GENETIC, pop_size=p, generations=g)
        for p in pop_sizes
        for g in generations
    ]
    grid_plan = dataclasses.replace(plan, solvers=configs, output=None)
    keys = (*CELL_KEYS, "pop_size", "max_generations")
    result = run_plan(grid_plan, keys)
    if plan.output is not None:
        out = Path(plan.output)
        out.mkdir(parents=True, exist_ok=True)
        result.table.to_csv(out / "grid_table.csv", index=False)
    return result


def _bit_matrix(count: int) -> np.ndarray:
    """All ``2**count`` masks of ``count`` bits, row i = binary digits of i (MSB first)."""
    ints = np.arange(2**count, dtype=np.int64)
    return ((ints[:, None] >> np.arange(count - 1, -1, -1)) & 1).astype(np.float64)


def brute_force(spec: ObjectiveSpec) -> tuple[np.ndarray, float]:
    """Exact minimizer over all ``2**n`` masks (n <= 24).

    Masks are enumerated in lexicographic order (first bit most
    significant); the first mask attaining the minimum is returned.
    Built-in measures are scored from group statistics: the pool is split
    into a head and a tail, per-half statistics are tabulated once and
    every full mask's statistics are the sum of one head and one tail
    entry.
    """
    n = spec.size
    if n > BRUTE_FORCE_CAP:
        raise PoolTooLarge(f"pool of {n} rows exceeds the brute-force cap of {BRUTE_FORCE_CAP}")
    if spec.measure.kernel is None:
        return _brute_force_generic(spec)

    k = spec.k
    tail_bits = n // 2
    head_bits = n - tail_bits
    ind = spec._indicators
    head = _bit_matrix(head_bits)
    tail = _bit_matrix(tail_bits)
    head_stats = head @ ind[:head_bits]
    tail_stats = tail @ ind[head_bits:]
    head_pop = head.sum(axis=1)
    tail_pop = tail.sum(axis=1)
    fixed = np.concatenate([spec.fixed_stats.counts, spec.fixed_stats.positives]).astype(float)

    best_score, best_index = math.inf, -1
    chunk = max(1, (1 << 18) // tail.shape[0])
    for h0 in range(0, head.shape[0], chunk):
        h1 = min(h0 + chunk, head.shape[0])
        stats = (head_stats[h0:h1, None, :] + tail_stats[None, :, :]).reshape(-1, 2 * k) + fixed
        pop = (head_pop[h0:h1, None] + tail_pop[None, :]).reshape(-1)
        scores = scores_from_stats(spec, stats[:, :k], stats[:, k:], pop)
        i = int(np.argmin(scores))
        if scores[i] < best_score:
            best_score, best_index = float(scores[i]), h0 * tail.shape[0] + i
    mask = ((best_index >> np.arange(n - 1, -1, -1)) & 1).astype(bool)
    return mask, best_score


def _brute_force_generic(spec: ObjectiveSpec) -> tuple[np.ndarray, float]:
    n = spec.size
    best_score, best_mask = math.inf, None
    for i in range(2**n):
        mask = ((i >> np.arange(n - 1, -1, -1)) & 1).astype(bool)
        score = fitness(spec, mask)
        if score < best_score:
            best_score, best_mask = score, mask
    return best_mask, best_score


def _solver_from_dict(entry: dict[str, Any]) -> SolverConfig:
    entry = dict(entry)
    aliases = {"pop": "pop_size", "gens": "generations", "mutation": "mutation_rate", "solver": "kind"}
    for old, new in aliases.items():
        if old in entry:
            entry[new] = entry.pop(old)
    known = {f.name for f in dataclasses.fields(SolverConfig)}
    unknown = set(entry) - known
    if unknown:
        raise ValueError(f"unknown solver keys: {sorted(unknown)}")
    return SolverConfig(**entry)


def plan_from_dict(raw: dict[str, Any], base_dir: str | Path = ".") -> ExperimentPlan:
    """Build a plan from parsed JSON/TOML. Raises ValueError naming missing keys."""
    missing = [k for k in ("datasets", "solvers") if k not in raw]
    if missing:
        raise ValueError(f"plan is missing required keys: {missing}")
    datasets = []
    for entry in raw["datasets"]:
        entry = dict(entry)
        if "name" not in entry:
            raise ValueError("every dataset needs a 'name'")
        path = entry.get("path")
        roles = None
        if path is not None:
            path = str(Path(base_dir) / path)
            for key in ("label", "protected"):
                if key not in entry:
                    raise ValueError(f"dataset {entry['name']!r} is missing key {key!r}")
            roles = ColumnRoles(
                entry["label"],
                entry["protected"],
                tuple(entry.get("features", ())),
                entry.get("positive"),
            )
        options = EncodeOptions(
            categorical_columns=tuple(entry["categorical"]) if "categorical" in entry else None,
            sep=entry.get("sep", ","),
        )
        datasets.append(
            DatasetSpec(entry["name"], path, roles, options, dict(entry.get("biased", {})))
        )
    return ExperimentPlan(
        datasets=datasets,
        modes=list(raw.get("modes", ["remove"])),
        measures=list(raw.get("measures", ["sdp_sum"])),
        solvers=[_solver_from_dict(s) for s in raw["solvers"]],
        repeats=int(raw.get("repeats", 15)),
        seed_base=int(raw.get("seed_base", 0)),
        output=raw.get("output"),
        synthetic_rows=raw.get("synthetic_rows"),
        workers=raw.get("workers"),
    )
