import itertools

import numpy as np
import pytest

from fairmask.dataset import DatasetView, EncodedDataset


def make_data(groups, labels, features=None, k=None, names=None):
    groups = np.asarray(groups, dtype=np.int64)
    labels = np.asarray(labels)
    k = k or int(groups.max())
    if names is None:
        names = [f"g{i}" for i in range(1, k + 1)]
    if features is None:
        features = np.arange(groups.shape[0], dtype=float).reshape(-1, 1)
    return EncodedDataset(features, labels, groups, names)


def random_data(rng, n, k, d=2, p=None):
    """Every group present at least once; random labels and features."""
    groups = np.concatenate([np.arange(1, k + 1), rng.integers(1, k + 1, n - k)])
    rng.shuffle(groups)
    labels = rng.random(n) < (0.5 if p is None else p)
    features = rng.integers(0, 5, size=(n, d)).astype(float)
    return make_data(groups, labels, features, k=k)


def scan_stats(view):
    """Row-by-row group counts, the slow way."""
    k = view.source.k
    counts, positives = [0] * k, [0] * k
    for i in view.selected:
        g = int(view.source.groups[i]) - 1
        counts[g] += 1
        positives[g] += int(view.source.labels[i])
    return counts, positives


def pairwise(rates):
    """(sum, avg, max) of |r_i - r_j| by an explicit pair loop."""
    diffs = [abs(a - b) for a, b in itertools.combinations(rates, 2)]
    return sum(diffs), sum(diffs) / len(diffs), max(diffs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def full():
    return DatasetView.full


# acceptance summary: one line per criterion, whatever the verbosity
CRITERION_DETAILS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    import re

    outcomes = {}
    for status in ("passed", "failed", "skipped", "error"):
        for rep in terminalreporter.stats.get(status, []):
            match = re.search(r"test_criterion_(\d+)_", getattr(rep, "nodeid", ""))
            if match and getattr(rep, "when", "call") in ("call", "setup"):
                n = int(match.group(1))
                if outcomes.get(n) != "FAIL":
                    outcomes[n] = {"passed": "PASS", "skipped": "SKIP"}.get(status, "FAIL")
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcomes):
        detail = CRITERION_DETAILS.get(n, "")
        terminalreporter.write_line(f"criterion {n}: {outcomes[n]}  {detail}".rstrip())
