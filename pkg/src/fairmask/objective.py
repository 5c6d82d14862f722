"""The subset-selection objective.

A binary mask ``b`` over a sample pool ``S`` selects the fair dataset
``{s_i in S : b_i = 1}``; its discrimination is the objective value. In
``add`` mode the real data is always kept and the mask only chooses which
synthetic rows to add on top of it.

The pool is stored as one combined :class:`EncodedDataset` (real rows
first, then synthetic rows) plus index arrays, so every candidate subset
is a :class:`DatasetView` into that table.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import DatasetView, EncodedDataset, GroupStats, concat, group_stats
from .errors import LengthMismatch, MissingSynthetic, SchemaMismatch
from .measures import Measure, get_measure, rates_from_counts


class PoolMode(str, Enum):
    REMOVE = "remove"
    SYNTHETIC = "synthetic"
    MERGE = "merge"
    PRIVACY = "privacy"
    ADD = "add"

    @property
    def needs_synthetic(self) -> bool:
        return self is not PoolMode.REMOVE


def resolve_workers(workers: int | None = None) -> int:
    """Worker count from the argument or ``FAIRMASK_THREADS`` (0 = all cores)."""
    if workers is None:
        workers = int(os.environ.get("FAIRMASK_THREADS", "1") or 1)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """Everything the objective needs; immutable and safe to share.

    Attributes
    ----------
    mode : PoolMode
    measure : Measure
    data : EncodedDataset
        Real rows followed by synthetic rows, under one group dictionary.
    pool_index : array of int
        Rows of ``data`` that form the pool, in mask order.
    fixed_index : array of int
        Rows always present in the selected view (the real data in add mode).
    synthetic : array of bool
        Provenance of each row of ``data``.
    penalty : float
        Returned for masks that leave a group empty or select nothing.
    min_fraction : float
        Masks selecting fewer than ``min_fraction * pool size`` rows are
        penalized too. 0 disables the check.
    """

    mode: PoolMode
    measure: Measure
    data: EncodedDataset
    pool_index: np.ndarray
    fixed_index: np.ndarray
    synthetic: np.ndarray
    penalty: float
    min_fraction: float = 0.0
    _pool_groups: np.ndarray = field(init=False, repr=False)
    _pool_labels: np.ndarray = field(init=False, repr=False)
    _indicators: np.ndarray = field(init=False, repr=False)
    _fixed_stats: GroupStats = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("pool_index", "fixed_index"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        k = self.data.k
        g = self.data.groups[self.pool_index] - 1
        y = self.data.labels[self.pool_index].astype(np.float64)
        ind = np.zeros((self.size, 2 * k))
        ind[np.arange(self.size), g] = 1.0
        ind[np.arange(self.size), k + g] = y
        object.__setattr__(self, "_pool_groups", g)
        object.__setattr__(self, "_pool_labels", self.data.labels[self.pool_index])
        object.__setattr__(self, "_indicators", ind)
        fixed = DatasetView(self.data, self.fixed_index)
        object.__setattr__(self, "_fixed_stats", group_stats(fixed))

    @property
    def size(self) -> int:
        """Pool size, i.e. the mask length."""
        return self.pool_index.shape[0]

    @property
    def k(self) -> int:
        return self.data.k

    @property
    def fixed_stats(self) -> GroupStats:
        return self._fixed_stats


def default_penalty(measure: Measure, k: int) -> float:
    """A value strictly above every score ``measure`` can attain with k groups."""
    return float(measure.upper_bound(k)) + 1.0


def _row_keys(rows: np.ndarray) -> list[bytes]:
    rows = np.ascontiguousarray(rows + 0.0)  # folds -0.0 into 0.0
    return [r.tobytes() for r in rows]


def build_pool(
    mode: PoolMode | str,
    real: EncodedDataset,
    synthetic: EncodedDataset | None = None,
    measure: str | Measure = "sdp_sum",
    penalty: float | None = None,
    min_fraction: float = 0.0,
) -> ObjectiveSpec:
    """Construct the sample pool for ``mode`` and wrap it in an ObjectiveSpec."""
    mode = PoolMode(mode)
    measure = get_measure(measure)
    if not 0.0 <= min_fraction <= 1.0:
        raise ValueError("min_fraction must lie in [0, 1]")
    if mode.needs_synthetic and synthetic is None:
        raise MissingSynthetic(f"mode {mode.value!r} needs a synthetic dataset")

    if mode is PoolMode.REMOVE:
        data = real
        n, m = real.n, 0
    else:
        if synthetic.d != real.d or synthetic.feature_names != real.feature_names:
            raise SchemaMismatch(
                "synthetic data must have the same encoded feature columns as the real data"
            )
        data = concat([real, synthetic])
        n, m = real.n, synthetic.n
    prov = np.zeros(data.n, dtype=bool)
    prov[n:] = True

    fixed = np.arange(0)
    if mode is PoolMode.REMOVE:
        pool = np.arange(n)
    elif mode is PoolMode.SYNTHETIC:
        pool = n + np.arange(m)
    elif mode is PoolMode.MERGE:
        pool = np.arange(n + m)
    elif mode is PoolMode.ADD:
        pool = n + np.arange(m)
        fixed = np.arange(n)
    else:
        rows = data.rows()
        seen = set(_row_keys(rows[:n]))
        keep = [j for j, key in enumerate(_row_keys(rows[n:])) if key not in seen]
        pool = n + np.asarray(keep, dtype=np.int64)

    if penalty is None:
        penalty = default_penalty(measure, data.k)
    return ObjectiveSpec(mode, measure, data, pool, fixed, prov, float(penalty), min_fraction)


def as_mask(spec: ObjectiveSpec, mask) -> np.ndarray:
    b = np.asarray(mask)
    if b.shape[-1:] != (spec.size,):
        raise LengthMismatch(f"mask length {b.shape[-1:]} != pool size {spec.size}")
    return b.astype(bool, copy=False)


def materialize(spec: ObjectiveSpec, mask) -> DatasetView:
    """The view selected by ``mask`` (plus the fixed rows in add mode)."""
    b = as_mask(spec, mask)
    if b.ndim != 1:
        raise LengthMismatch("materialize takes a single mask")
    selected = np.concatenate([spec.fixed_index, spec.pool_index[b]])
    return DatasetView(spec.data, selected, spec.synthetic)


def view_stats(spec: ObjectiveSpec, mask) -> GroupStats:
    return group_stats(materialize(spec, mask))


def _batch_stats(spec: ObjectiveSpec, masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = spec.k
    sums = masks.astype(np.float64) @ spec._indicators
    counts = sums[:, :k] + spec.fixed_stats.counts
    positives = sums[:, k:] + spec.fixed_stats.positives
    return counts, positives


def scores_from_stats(spec: ObjectiveSpec, counts, positives, popcount) -> np.ndarray:
    """Objective values from per-view group statistics (built-in measures only).

    ``counts`` and ``positives`` have shape (P, k) and already include the
    fixed rows; ``popcount`` is the number of selected pool rows per view.
    """
    counts = np.asarray(counts, dtype=np.float64)
    invalid = (counts == 0).any(axis=1) | (np.asarray(popcount) < spec.min_fraction * spec.size)
    rates = rates_from_counts(counts, positives)
    rates[invalid] = 0.0
    scores = spec.measure.kernel(rates)
    scores[invalid] = spec.penalty
    return scores


def _score_chunk(spec: ObjectiveSpec, masks: np.ndarray) -> np.ndarray:
    popcount = masks.sum(axis=1)
    if spec.measure.kernel is not None:
        counts, positives = _batch_stats(spec, masks)
        return scores_from_stats(spec, counts, positives, popcount)
    too_small = popcount < spec.min_fraction * spec.size
    scores = np.empty(masks.shape[0])
    for i, b in enumerate(masks):
        view = materialize(spec, b)
        counts, _ = group_stats(view)
        if too_small[i] or len(view) == 0 or (counts == 0).any():
            scores[i] = spec.penalty
        else:
            scores[i] = float(spec.measure(view))
    return scores


def fitness_batch(spec: ObjectiveSpec, masks, workers: int | None = None) -> np.ndarray:
    """Objective values for a stack of masks, shape (P, pool size) -> (P,).

    Rows are scored independently, so splitting them across threads does
    not change any value.
    """
    masks = as_mask(spec, np.atleast_2d(masks))
    workers = min(resolve_workers(workers), masks.shape[0])
    if workers <= 1:
        return _score_chunk(spec, masks)
    chunks = np.array_split(np.arange(masks.shape[0]), workers)
    with ThreadPoolExecutor(workers) as ex:
        parts = list(ex.map(lambda idx: _score_chunk(spec, masks[idx]), chunks))
    return np.concatenate(parts)


def fitness(spec: ObjectiveSpec, mask) -> float:
    """Objective value of one mask; the penalty for degenerate selections."""
    b = as_mask(spec, mask)
    if b.ndim != 1:
        raise LengthMismatch("fitness takes a single mask; use fitness_batch")
    return float(_score_chunk(spec, b[None, :])[0])


def incremental_stats(spec: ObjectiveSpec, stats: GroupStats, mask, flip: int) -> GroupStats:
    """Group statistics after toggling bit ``flip`` of ``mask``.

    ``stats`` must describe the view selected by ``mask``; ``mask`` itself
    is not modified.
    """
    if not 0 <= flip < spec.size:
        raise IndexError(f"bit {flip} out of range for pool size {spec.size}")
    sign = -1 if mask[flip] else 1
    g = spec._pool_groups[flip]
    counts = stats.counts.copy()
    positives = stats.positives.copy()
    counts[g] += sign
    positives[g] += sign * int(spec._pool_labels[flip])
    return GroupStats(counts, positives)
