"""
Training and convergence
========================

Fit a boosted survival-tree ensemble on synthetic data and follow the
training loss, which should fall quickly over the first iterations.
"""

import time

from gbst import BoosterParams, fit
from gbst.synthetic import make_survival_data

# 2000 loans, 10 standard-normal features, 12 monthly periods. Only the
# first three features drive the hazard.
train = make_survival_data(n_records=2000, n_features=10, n_periods=12, seed=0)
print(f"{int(train.event.sum())} defaults among {train.n_records} loans")

# Full-data trees (subsample=1) with shrinkage 0.1 and depth 6.
params = BoosterParams(num_trees=30, max_depth=6, learning_rate=0.1, reg_lambda=0.001,
                       subsample=1.0)
start = time.perf_counter()
model = fit(train, params)
print(f"trained {len(model.trees)} trees in {time.perf_counter() - start:.1f}s")

# Iteration 0 is the Kaplan-Meier baseline.
trace = [model.initial_loss] + model.loss_trace
for m in (0, 1, 2, 5, 10, 20, 30):
    print(f"iteration {m:2d}  loss {trace[m]:10.2f}  ({trace[m] / trace[0]:.1%} of start)")

# Row subsampling (20%, the library default) trades a noisier trace for speed.
sub = fit(train, BoosterParams(num_trees=30, subsample=0.2, seed=1))
print(f"subsampled run final loss: {sub.loss_trace[-1]:.2f}")

# Survival curve of the first loan.
h, S = model.predict_survival(train.features[0])
print("loan 0 survival:", S.round(3))
