# Any function of a view can be optimized. Here: the gap between the best
# and the worst group's positive rate, ignoring groups smaller than 50 rows.
import numpy as np

from fairmask import SolverConfig, build_pool, materialize, register_measure, solve
from fairmask.dataset import group_stats
from fairmask.harness import make_biased_dataset


def big_group_gap(view):
    counts, positives = group_stats(view)
    big = counts >= 50
    if big.sum() < 2:
        return 1.0
    rates = positives[big] / counts[big]
    return float(rates.max() - rates.min())


register_measure("big_group_gap", big_group_gap, upper_bound=1.0)

data = make_biased_dataset(n=600, group_rates=(0.8, 0.6, 0.3), group_weights=(5, 3, 1), seed=2)
spec = build_pool("remove", data, measure="big_group_gap")
# custom measures are called once per candidate, so keep the run short
report = solve(spec, SolverConfig(pop_size=30, generations=60, seed=0))
view = materialize(spec, report.best_mask)
print("gap before", big_group_gap(materialize(spec, np.ones(spec.size, bool))))
print("gap after ", report.best_score)
print("rows per group", group_stats(view).counts)
