"""Statistical-parity discrimination measures for k >= 2 groups.

Each measure compares every pair of groups by the absolute difference of
their positive-label rates and aggregates the k(k-1)/2 differences by
sum, average or maximum. Lower is fairer; 0 means statistical parity.

Custom measures can be registered by name with :func:`register_measure`.
They receive a :class:`~fairmask.dataset.DatasetView` and are treated as
black boxes by the solvers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .dataset import DatasetView, group_stats
from .errors import UndefinedRate


class PositiveRates(NamedTuple):
    """Empirical P(y=1 | z=g) per group; NaN marks a group with no rows."""

    rates: np.ndarray
    counts: np.ndarray

    @property
    def defined(self) -> bool:
        return bool(np.all(self.counts > 0))


def rates_from_counts(counts, positives) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, positives / np.where(counts > 0, counts, 1.0), np.nan)


def positive_rates(view: DatasetView) -> PositiveRates:
    counts, positives = group_stats(view)
    return PositiveRates(rates_from_counts(counts, positives), counts)


def _as_rates(rates) -> np.ndarray:
    r = rates.rates if isinstance(rates, PositiveRates) else np.asarray(rates, dtype=np.float64)
    if r.shape[-1] < 2:
        raise ValueError("need at least two groups")
    if np.isnan(r).any():
        raise UndefinedRate("a protected group is empty, its positive rate is undefined")
    return r


# Batched kernels over the last axis. With sorted rates the pairwise sum
# counts each gap r_(t+1) - r_(t) once per pair straddling it, i.e.
# (t + 1)(k - t - 1) times. Gaps are >= 0, so equal rates give exactly 0.
def _sum_kernel(r: np.ndarray) -> np.ndarray:
    k = r.shape[-1]
    t = np.arange(1, k, dtype=np.float64)
    gaps = np.diff(np.sort(r, axis=-1), axis=-1)
    return (gaps * (t * (k - t))).sum(axis=-1)


def _avg_kernel(r: np.ndarray) -> np.ndarray:
    k = r.shape[-1]
    return (2.0 / (k * (k - 1))) * _sum_kernel(r)


def _max_kernel(r: np.ndarray) -> np.ndarray:
    return r.max(axis=-1) - r.min(axis=-1)


def sdp_sum(rates) -> float:
    """Sum of absolute statistical disparities over all group pairs."""
    return float(_sum_kernel(_as_rates(rates)))


def sdp_avg(rates) -> float:
    """Average absolute statistical disparity, in [0, 1]."""
    return float(_avg_kernel(_as_rates(rates)))


def sdp_max(rates) -> float:
    """Largest absolute statistical disparity between any two groups."""
    return float(_max_kernel(_as_rates(rates)))


@dataclass(frozen=True)
class Measure:
    """A named discrimination measure.

    ``func`` scores a view. ``kernel``, when present, scores a batch of
    rate vectors directly and lets the objective skip materializing rows.
    ``upper_bound(k)`` must be >= every score the measure can return for k
    groups; the objective's penalty is derived from it.
    """

    name: str
    func: Callable[[DatasetView], float]
    upper_bound: Callable[[int], float]
    kernel: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, view: DatasetView) -> float:
        return self.func(view)


def _builtin(name, kernel, bound):
    def func(view: DatasetView) -> float:
        return float(kernel(_as_rates(positive_rates(view))))

    func.__name__ = name
    return Measure(name, func, bound, kernel)


_REGISTRY: dict[str, Measure] = {
    "sdp_sum": _builtin("sdp_sum", _sum_kernel, lambda k: k * (k - 1) / 2),
    "sdp_avg": _builtin("sdp_avg", _avg_kernel, lambda k: 1.0),
    "sdp_max": _builtin("sdp_max", _max_kernel, lambda k: 1.0),
}

BUILTIN_MEASURES = ("sdp_sum", "sdp_avg", "sdp_max")


def register_measure(
    name: str, func: Callable[[DatasetView], float], upper_bound: float | Callable[[int], float]
) -> Measure:
    """Register a black-box measure under ``name`` and return it."""
    if name in BUILTIN_MEASURES:
        raise ValueError(f"cannot replace built-in measure {name!r}")
    bound = upper_bound if callable(upper_bound) else (lambda k, b=float(upper_bound): b)
    measure = Measure(name, func, bound)
    _REGISTRY[name] = measure
    return measure


def unregister_measure(name: str) -> None:
    if name in BUILTIN_MEASURES:
        raise ValueError(f"cannot remove built-in measure {name!r}")
    _REGISTRY.pop(name, None)


def get_measure(kind: str | Measure) -> Measure:
    if isinstance(kind, Measure):
        return kind
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise KeyError(f"unknown measure {kind!r}; known: {sorted(_REGISTRY)}") from None


def available_measures() -> list[str]:
    return sorted(_REGISTRY)


def evaluate(kind: str | Measure, view: DatasetView) -> float:
    """Score ``view`` with the named measure. Raises UndefinedRate on empty groups."""
    return get_measure(kind)(view)


def evaluate_all(view: DatasetView) -> dict[str, float | None]:
    """All built-in scores; None where a group is empty."""
    out: dict[str, float | None] = {}
    for name in BUILTIN_MEASURES:
        try:
            out[name] = evaluate(name, view)
        except UndefinedRate:
            out[name] = None
    return out
