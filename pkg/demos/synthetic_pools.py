# Fit a Gaussian copula, check how close the samples are, then select from
# real + synthetic pools.
import warnings

from fairmask import SolverConfig, build_pool, evaluate_all, generate, ks_statistics, materialize, solve
from fairmask.dataset import DatasetView
from fairmask.measures import positive_rates
from fairmask.harness import make_biased_dataset

real = make_biased_dataset(n=3000, seed=4)
fake = generate(real, seed=5)  # same size as the real table

ks = ks_statistics(real, fake)
for name, value in sorted(ks.items()):
    print(f"KS {name:6s} {value:.4f}")
print("real rates     ", positive_rates(DatasetView.full(real)).rates.round(3))
print("synthetic rates", positive_rates(DatasetView.full(fake)).rates.round(3))

config = SolverConfig(seed=0)
for mode in ("synthetic", "merge", "privacy", "add"):
    spec = build_pool(mode, real, fake, measure="sdp_max")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = solve(spec, config)
    view = materialize(spec, report.best_mask)
    n_syn = int(spec.synthetic[view.selected].sum())
    print(f"{mode:9s} pool {spec.size:5d}  rows out {len(view):5d} ({n_syn} synthetic)"
          f"  max-sdp {evaluate_all(view)['sdp_max']:.4f}")

# add mode keeps every real row no matter what the mask says
spec = build_pool("add", real, fake)
assert len(materialize(spec, report.best_mask * 0)) == real.n
