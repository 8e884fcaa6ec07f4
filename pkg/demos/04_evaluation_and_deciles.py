"""
Evaluation: C-index, per-period AUC/KS and decile groups
========================================================

Score a held-out sample and check that predicted survival ranks loans
by their observed default rate.
"""

from gbst import BoosterParams, fit
from gbst.metrics import decile_analysis, evaluate
from gbst.synthetic import make_survival_data

train = make_survival_data(2000, 10, 12, seed=0)
test = make_survival_data(2000, 10, 12, seed=1)
model = fit(train, BoosterParams(num_trees=30, subsample=1.0))

report = evaluate(model.predict_hazards(test.features), test, decile_periods=[6, 12])
print(f"held-out C-index: {report.c_index:.4f}")

# Period metrics only use loans whose status in that period is known.
print("period  cohort  events    AUC     KS")
for row in report.periods:
    auc = "   -  " if row["auc"] is None else f"{row['auc']:.4f}"
    ks = "   -  " if row["ks"] is None else f"{row['ks']:.4f}"
    print(f"{row['period']:6d}  {row['cohort']:6d}  {row['events']:6d}  {auc}  {ks}")

# Ten equal groups by predicted survival at month 12; group 1 is the riskiest.
S12 = model.predict_survival_matrix(test.features)[:, 11]
for g, rate in enumerate(decile_analysis(S12, test, 12), start=1):
    print(f"group {g:2d}: default rate {rate:.3f}  " + "#" * int(rate * 40))
