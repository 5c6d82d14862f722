# On a tiny pool every subset can be scored, so the GA can be checked
# against the true optimum.
import numpy as np

from fairmask import EncodedDataset, SolverConfig, build_pool, solve
from fairmask.harness import brute_force

rng = np.random.default_rng(7)
n, k = 16, 3
groups = np.r_[1:k + 1, rng.integers(1, k + 1, n - k)]
labels = rng.random(n) < 0.5
data = EncodedDataset(rng.normal(size=(n, 2)), labels, groups, ["a", "b", "c"])

# require at least half the rows, otherwise three rows with equal labels win
spec = build_pool("remove", data, measure="sdp_max", min_fraction=0.5)
mask, optimum = brute_force(spec)          # 65536 subsets
print("optimum", optimum, "keeping", mask.sum(), "rows")

hits = 0
for seed in range(10):
    report = solve(spec, SolverConfig(seed=seed))
    hits += abs(report.best_score - optimum) < 1e-9
    print(seed, round(report.best_score, 6), report.evaluations)
print(f"GA found the optimum in {hits}/10 runs")
