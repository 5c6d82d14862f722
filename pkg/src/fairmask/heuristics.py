"""Black-box solvers for ``min_b f(b)`` over binary masks.

* ``original`` returns the all-ones mask, i.e. the unmodified pool.
* ``random`` samples uniform masks and keeps the best.
* ``ga`` is a genetic algorithm with elitist, tournament or roulette-wheel
  selection, uniform crossover and fixed-count bit-flip mutation. Half the
  population is carried over by the selection operator, the other half is
  offspring, the best individual always survives, and the run stops after
  ``patience`` generations without a strict improvement.

All randomness flows from one ``numpy.random.Generator`` seeded from the
config, and population scoring never touches it, so results do not depend
on the number of fitness workers.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegeneratePopulation, LengthMismatch
from .objective import ObjectiveSpec, fitness_batch

ROULETTE_EPS = 1e-9


class SolverKind(str, Enum):
    ORIGINAL = "original"
    RANDOM = "random"
    GENETIC = "ga"


class Selection(str, Enum):
    ELITIST = "elitist"
    TOURNAMENT = "tournament"
    ROULETTE = "roulette"


@dataclass(frozen=True)
class SolverConfig:
    kind: SolverKind = SolverKind.GENETIC
    pop_size: int = 100
    generations: int = 500
    mutation_rate: float = 0.05
    selection: Selection = Selection.ELITIST
    tournament_size: int = 2
    patience: int = 50
    seed: int = 0
    evaluation_budget: int | None = None
    seed_all_ones: bool = True
    workers: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SolverKind(self.kind))
        object.__setattr__(self, "selection", Selection(self.selection))
        if self.pop_size < 1 or self.generations < 1:
            raise ValueError("pop_size and generations must be positive")
        if self.kind is SolverKind.GENETIC and self.pop_size < 2:
            raise ValueError("the genetic algorithm needs pop_size >= 2")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.evaluation_budget is not None and self.evaluation_budget < 1:
            raise ValueError("evaluation_budget must be >= 1")

    @property
    def budget(self) -> int:
        """Random-search budget; defaults to what a full GA run evaluates."""
        if self.evaluation_budget is not None:
            return self.evaluation_budget
        return self.pop_size + self.generations * (self.pop_size - math.ceil(self.pop_size / 2))


@dataclass
class SolverReport:
    best_mask: np.ndarray
    best_score: float
    trace: np.ndarray
    evaluations: int
    wall_time: float
    terminated_early: bool
    seed: int
    solver: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def popcount(self) -> int:
        return int(self.best_mask.sum())


def random_masks(rng: np.random.Generator, count: int, length: int) -> np.ndarray:
    """``count`` masks with independent fair-coin bits."""
    nbytes = (length + 7) // 8
    raw = rng.integers(0, 256, size=(count, nbytes), dtype=np.uint8)
    return np.unpackbits(raw, axis=1, count=length).astype(bool)


def select_parents(
    scores,
    selection: Selection | str,
    rng: np.random.Generator,
    tournament_size: int = 2,
    n_pairs: int | None = None,
) -> np.ndarray:
    """Indices of parent pairs, shape (n_pairs, 2). Lower scores are better.

    elitist
        uniform draws from the best ceil(P/2) individuals.
    tournament
        each parent is the best of ``tournament_size`` distinct individuals.
    roulette
        draws with probability proportional to ``max(score) - score + eps``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pop = scores.shape[0]
    if pop == 0:
        raise ValueError("empty population")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n_pairs = pop // 2 if n_pairs is None else n_pairs
    n_pairs = max(n_pairs, 1)
    selection = Selection(selection)

    if selection is Selection.ELITIST:
        top = np.argsort(scores, kind="stable")[: math.ceil(pop / 2)]
        return top[rng.integers(0, top.shape[0], size=(n_pairs, 2))]

    if selection is Selection.TOURNAMENT:
        size = min(tournament_size, pop)
        draws = 2 * n_pairs
        candidates = np.argsort(rng.random((draws, pop)), axis=1)[:, :size]
        winners = candidates[np.arange(draws), np.argmin(scores[candidates], axis=1)]
        return winners.reshape(n_pairs, 2)

    spread = scores.max() - scores
    if not spread.any():
        warnings.warn("all scores equal; roulette draws uniformly", DegeneratePopulation)
        return rng.integers(0, pop, size=(n_pairs, 2))
    weights = spread + ROULETTE_EPS
    return rng.choice(pop, size=(n_pairs, 2), p=weights / weights.sum())


def uniform_crossover(parent_a, parent_b, rng: np.random.Generator):
    """Per position, a fair coin decides which parent each child copies.

    Works on single masks or on stacks of masks (one row per pair).
    ``child_b`` always receives the bit ``child_a`` did not take.
    """
    a = np.asarray(parent_a, dtype=bool)
    b = np.asarray(parent_b, dtype=bool)
    if a.shape != b.shape:
        raise LengthMismatch("parents must have the same shape")
    flat = a.reshape(-1, a.shape[-1]) if a.ndim else a.reshape(1, 1)
    coin = random_masks(rng, flat.shape[0], flat.shape[1]).reshape(a.shape)
    return np.where(coin, a, b), np.where(coin, b, a)


def bitflip_mutation(mask, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Toggle exactly floor(rate * n) distinct random bits of each mask."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    out = np.array(mask, dtype=bool, copy=True)
    length = out.shape[-1]
    flips = math.floor(rate * length)
    if flips == 0:
        return out
    rows = out.reshape(-1, length)
    for row in rows:
        idx = rng.choice(length, size=flips, replace=False)
        row[idx] = ~row[idx]
    return out


def solve_original(spec: ObjectiveSpec, config: SolverConfig | None = None) -> SolverReport:
    seed = config.seed if config is not None else 0
    start = time.perf_counter()
    mask = np.ones(spec.size, dtype=bool)
    score = float(fitness_batch(spec, mask[None, :], workers=1)[0])
    return SolverReport(
        mask, score, np.array([score]), 1, time.perf_counter() - start, False, seed, "original"
    )


def solve_random(spec: ObjectiveSpec, config: SolverConfig) -> SolverReport:
    """Best of ``config.budget`` uniform random masks, sampled in batches of pop_size."""
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    budget = config.budget
    batch = max(1, config.pop_size)
    best_mask, best_score = None, math.inf
    trace = []
    done = 0
    while done < budget:
        count = min(batch, budget - done)
        masks = random_masks(rng, count, spec.size)
        scores = fitness_batch(spec, masks, workers=config.workers)
        i = int(np.argmin(scores))
        if scores[i] < best_score:
            best_score, best_mask = float(scores[i]), masks[i].copy()
        trace.append(best_score)
        done += count
    return SolverReport(
        best_mask,
        best_score,
        np.asarray(trace),
        done,
        time.perf_counter() - start,
        False,
        config.seed,
        "random",
    )


def select_survivors(
    scores, selection: Selection | str, rng: np.random.Generator, tournament_size: int, count: int
) -> np.ndarray:
    """Indices of the ``count`` individuals carried into the next generation.

    Elitist keeps the ``count`` best outright; tournament and roulette
    keep ``count`` independent draws of their parent operator.
    """
    selection = Selection(selection)
    if selection is Selection.ELITIST:
        return np.argsort(scores, kind="stable")[:count]
    pairs = select_parents(scores, selection, rng, tournament_size, math.ceil(count / 2))
    return pairs.ravel()[:count]


def genetic_evaluations(config: SolverConfig, generations: int | None = None) -> int:
    """Fitness calls made by a GA run lasting ``generations`` generations."""
    generations = config.generations if generations is None else generations
    offspring = config.pop_size - math.ceil(config.pop_size / 2)
    return config.pop_size + generations * offspring


def solve_genetic(spec: ObjectiveSpec, config: SolverConfig) -> SolverReport:
    """Genetic algorithm with parent carry-over.

    Each generation the selection operator picks ceil(P/2) survivors that
    pass unchanged into the next population; the remaining slots are
    filled with mutated uniform-crossover offspring of operator-selected
    parents. The incumbent replaces the worst survivor whenever no survivor
    matches its score.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    pop_size = config.pop_size
    n_survivors = math.ceil(pop_size / 2)
    n_offspring = pop_size - n_survivors

    pop = random_masks(rng, pop_size, spec.size)
    if config.seed_all_ones:
        pop[0] = True
    scores = fitness_batch(spec, pop, workers=config.workers)
    evaluations = pop_size

    i = int(np.argmin(scores))
    best_mask, best_score = pop[i].copy(), float(scores[i])
    trace = [best_score]
    stale = 0
    early = False
    for _ in range(config.generations):
        keep = select_survivors(scores, config.selection, rng, config.tournament_size, n_survivors)
        pairs = select_parents(
            scores, config.selection, rng, config.tournament_size, math.ceil(n_offspring / 2)
        )
        child_a, child_b = uniform_crossover(pop[pairs[:, 0]], pop[pairs[:, 1]], rng)
        children = np.concatenate([child_a, child_b])[:n_offspring]
        children = bitflip_mutation(children, config.mutation_rate, rng)
        child_scores = fitness_batch(spec, children, workers=config.workers)
        evaluations += n_offspring

        survivors, survivor_scores = pop[keep], scores[keep]
        if survivor_scores.min() > best_score:
            worst = int(np.argmax(survivor_scores))
            survivors[worst] = best_mask
            survivor_scores[worst] = best_score
        pop = np.concatenate([survivors, children])
        scores = np.concatenate([survivor_scores, child_scores])

        i = int(np.argmin(scores))
        if scores[i] < best_score:
            best_mask, best_score = pop[i].copy(), float(scores[i])
            stale = 0
        else:
            stale += 1
        trace.append(best_score)
        if stale >= config.patience:
            early = True
            break

    return SolverReport(
        best_mask,
        best_score,
        np.asarray(trace),
        evaluations,
        time.perf_counter() - start,
        early,
        config.seed,
        f"ga/{config.selection.value}",
    )


def solve(spec: ObjectiveSpec, config: SolverConfig) -> SolverReport:
    if config.kind is SolverKind.ORIGINAL:
        return solve_original(spec, config)
    if config.kind is SolverKind.RANDOM:
        return solve_random(spec, config)
    return solve_genetic(spec, config)
