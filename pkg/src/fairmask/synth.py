"""Gaussian-copula generator for synthetic rows ``G ~ P(D)``.

Each column keeps its empirical marginal (sampling inverts the empirical
CDF by nearest rank, so every sampled value was observed in the data).
Dependence between columns is a Gaussian copula: a correlation matrix over
the normal scores of the columns.

Discrete columns (the label, the protected attribute and each one-hot
block, which is modeled as a single categorical column) are coded by their
positive-label rate so that their association with the label is monotone.
Correlations involving discrete columns are corrected for the attenuation
caused by discretization before sampling, otherwise synthetic data would
show systematically weaker dependence than the original.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .dataset import EncodedDataset
from .errors import DegenerateColumn, MissingGroupWarning

HERMITE_TERMS = 30


@dataclass(frozen=True, eq=False)
class CopulaModel:
    """A fitted copula.

    Attributes
    ----------
    column_names : tuple of str
        Latent column names: numeric features, categorical blocks, then
        ``label`` and ``group``.
    column_quantiles : array, shape (n, c)
        Sorted observed values of each latent column.
    correlation : array, shape (c, c)
        PSD correlation matrix used for sampling.
    raw_correlation : array, shape (c, c)
        Sample correlation of the normal scores, before any correction.
    discrete_columns : array of bool, shape (c,)
    degenerate : array of bool, shape (c,)
        Constant columns; they are reproduced as-is and left uncorrelated.
    """

    column_names: tuple[str, ...]
    column_quantiles: np.ndarray
    correlation: np.ndarray
    raw_correlation: np.ndarray
    discrete_columns: np.ndarray
    degenerate: np.ndarray
    template: EncodedDataset
    numeric_index: np.ndarray
    blocks: tuple[np.ndarray, ...]
    block_orders: tuple[np.ndarray, ...]
    group_order: np.ndarray

    @property
    def n(self) -> int:
        return self.column_quantiles.shape[0]


def _feature_blocks(data: EncodedDataset) -> tuple[np.ndarray, list[np.ndarray]]:
    if data.schema is None:
        return np.arange(data.d), []
    numeric, blocks = [], []
    for col, idx in data.schema.blocks():
        if col in data.schema.categories:
            blocks.append(idx)
        else:
            numeric.append(idx[0])
    return np.asarray(numeric, dtype=np.int64), blocks


def _rate_order(codes: np.ndarray, labels: np.ndarray, size: int) -> np.ndarray:
    """Permutation of ``range(size)`` sorting category codes by positive rate."""
    counts = np.bincount(codes, minlength=size)
    pos = np.bincount(codes, weights=labels, minlength=size)
    rate = np.where(counts > 0, pos / np.maximum(counts, 1), 0.0)
    return np.lexsort((np.arange(size), rate))


def normal_scores(values: np.ndarray) -> np.ndarray:
    """Phi^-1((rank - 0.5) / n) with average ranks for ties."""
    n = values.shape[0]
    return stats.norm.ppf((stats.rankdata(values, method="average") - 0.5) / n)


def _hermite_coefficients(values: np.ndarray, terms: int = HERMITE_TERMS) -> np.ndarray:
    """Normalized Hermite coefficients of a column's normal-score step function.

    The column is viewed as ``h(Z)`` with ``Z`` standard normal, constant on
    each quantile interval of a distinct value. Returns ``a_m`` for
    m = 1..terms with ``sum a_m**2 == 1``, so that for two such columns
    ``corr(h_i(Z_i), h_j(Z_j)) = sum_m rho**m a_im a_jm``.
    """
    n = values.shape[0]
    uniq, counts = np.unique(values, return_counts=True)
    cum = np.cumsum(counts) / n
    score = stats.norm.ppf(cum - counts / (2.0 * n))  # normal score of the average rank
    p = counts / n
    score = score - np.sum(p * score)
    sd = math.sqrt(np.sum(p * score**2))
    if sd == 0.0:
        return np.zeros(terms)
    t = stats.norm.ppf(cum[:-1])
    phi = stats.norm.pdf(t)
    coef = np.empty(terms)
    # normalized Hermite recursion: h_{m+1} = (t h_m - sqrt(m) h_{m-1}) / sqrt(m+1)
    h_prev, h_cur = np.zeros_like(t), np.ones_like(t)
    for m in range(1, terms + 1):
        g = phi * h_cur  # phi(t) * h_{m-1}(t) at each interior threshold
        upper = np.concatenate([g, [0.0]])
        lower = np.concatenate([[0.0], g])
        coef[m - 1] = np.sum(score * (lower - upper)) / math.sqrt(m) / sd
        h_prev, h_cur = h_cur, (t * h_cur - math.sqrt(m - 1) * h_prev) / math.sqrt(m)
    return coef


def _latent_correlation(r: float, a: np.ndarray, b: np.ndarray) -> float:
    powers = np.arange(1, a.shape[0] + 1)
    prod = a * b

    def gap(rho):
        return float(np.sum(prod * rho**powers)) - r

    lo, hi = gap(-1.0), gap(1.0)
    if lo >= 0:
        return -1.0
    if hi <= 0:
        return 1.0
    return optimize.brentq(gap, -1.0, 1.0, xtol=1e-12)


def nearest_correlation(matrix: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to 0 and rescale to a unit diagonal."""
    sym = (matrix + matrix.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    fixed = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    scale = np.sqrt(np.clip(np.diag(fixed), 1e-300, None))
    out = fixed / np.outer(scale, scale)
    np.fill_diagonal(out, 1.0)
    return (out + out.T) / 2.0


def fit(real: EncodedDataset, correct_attenuation: bool = True) -> CopulaModel:
    """Fit empirical marginals and a normal-score correlation matrix."""
    n = real.n
    if n < 2:
        raise ValueError("need at least two rows to fit a copula")
    labels = real.labels.astype(np.float64)
    numeric, blocks = _feature_blocks(real)

    columns, names, discrete = [], [], []
    for j in numeric:
        columns.append(real.features[:, j])
        names.append(real.feature_names[j])
        discrete.append(False)
    block_orders = []
    for idx in blocks:
        codes = real.features[:, idx].argmax(axis=1)
        order = _rate_order(codes, labels, idx.shape[0])
        rank_of = np.empty_like(order)
        rank_of[order] = np.arange(order.shape[0])
        columns.append(rank_of[codes].astype(np.float64))
        names.append(real.feature_names[idx[0]].split("=", 1)[0])
        discrete.append(True)
        block_orders.append(order)
    columns.append(labels)
    names.append("label")
    discrete.append(True)
    group_order = _rate_order(real.groups - 1, labels, real.k)
    group_rank = np.empty_like(group_order)
    group_rank[group_order] = np.arange(real.k)
    columns.append(group_rank[real.groups - 1].astype(np.float64))
    names.append("group")
    discrete.append(True)

    values = np.column_stack(columns)
    c = values.shape[1]
    degenerate = np.array([np.all(col == col[0]) for col in values.T])
    for name, flag in zip(names, degenerate):
        if flag:
            warnings.warn(f"column {name!r} is constant; excluded from correlation", DegenerateColumn)

    live = np.flatnonzero(~degenerate)
    raw = np.eye(c)
    if live.size > 1:
        scores = np.column_stack([normal_scores(values[:, j]) for j in live])
        raw[np.ix_(live, live)] = np.corrcoef(scores, rowvar=False)
    latent = raw.copy()
    if correct_attenuation and live.size > 1:
        coefs = {j: _hermite_coefficients(values[:, j]) for j in live}
        for a_pos, i in enumerate(live):
            for j in live[a_pos + 1 :]:
                rho = _latent_correlation(raw[i, j], coefs[i], coefs[j])
                latent[i, j] = latent[j, i] = rho
    correlation = nearest_correlation(latent)

    return CopulaModel(
        tuple(names),
        np.sort(values, axis=0),
        correlation,
        raw,
        np.asarray(discrete),
        degenerate,
        real.take(np.arange(0)),
        numeric,
        tuple(blocks),
        tuple(block_orders),
        group_order,
    )


def _psd_factor(corr: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(corr)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def sample(model: CopulaModel, m: int, seed: int | None = 0) -> EncodedDataset:
    """Draw ``m`` synthetic rows with the same encoding as the fitted data."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    c = model.correlation.shape[0]
    z = rng.standard_normal((m, c)) @ _psd_factor(model.correlation)
    u = stats.norm.cdf(z)
    n = model.n
    idx = np.clip(np.ceil(u * n).astype(np.int64) - 1, 0, n - 1)
    latent = np.take_along_axis(model.column_quantiles, idx, axis=0)
    latent[:, model.degenerate] = model.column_quantiles[0, model.degenerate]

    template = model.template
    features = np.zeros((m, template.d))
    col = 0
    for j in model.numeric_index:
        features[:, j] = latent[:, col]
        col += 1
    for idx_block, order in zip(model.blocks, model.block_orders):
        codes = order[latent[:, col].astype(np.int64)]
        features[np.arange(m), idx_block[codes]] = 1.0
        col += 1
    labels = latent[:, col].astype(np.int8)
    groups = model.group_order[latent[:, col + 1].astype(np.int64)] + 1

    missing = sorted(set(range(1, template.k + 1)) - set(np.unique(groups).tolist()))
    if missing:
        names = [template.group_names[g - 1] for g in missing]
        warnings.warn(f"groups absent from synthetic sample: {names}", MissingGroupWarning)
    return EncodedDataset(
        features, labels, groups, template.group_names, template.feature_names, template.schema
    )


def generate(real: EncodedDataset, m: int | None = None, seed: int | None = 0) -> EncodedDataset:
    """Fit on ``real`` and sample ``m`` rows (default: as many as ``real``)."""
    return sample(fit(real), real.n if m is None else m, seed)


def ks_statistics(real: EncodedDataset, synthetic: EncodedDataset) -> dict[str, float]:
    """Two-sample Kolmogorov-Smirnov statistic for every encoded column."""
    def ks(a, b):
        # only the statistic is used; it does not depend on the p-value method
        return float(stats.ks_2samp(a, b, method="asymp").statistic)

    out = {name: ks(real.features[:, j], synthetic.features[:, j]) for j, name in enumerate(real.feature_names)}
    out["label"] = ks(real.labels, synthetic.labels)
    out["group"] = ks(real.groups, synthetic.groups)
    return out
