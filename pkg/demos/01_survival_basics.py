"""
Discrete-time survival basics
=============================

Hazards, survival curves and the Kaplan-Meier baseline on a toy cohort.
"""

import numpy as np

from gbst import ObservationGrid, SurvivalDataset, kaplan_meier_init, map_to_period, survival_curve
from gbst.survival import build_risk_sets, event_probability

# A monthly grid with three periods. A time of 2.5 months lands in period 3,
# anything past the last boundary is "beyond the horizon" (period J+1).
grid = ObservationGrid.regular(3)
print("periods for t = 0.5, 2.5, 7:", [map_to_period(t, grid) for t in (0.5, 2.5, 7.0)])

# Five loans: (event flag, event period). Loan 3 is censored in period 2,
# loan 4 is still current after period 3.
event = [1, 1, 0, 0, 1]
period = [1, 2, 2, 4, 3]
ds = SurvivalDataset(np.zeros((5, 1)), period, event, grid)

# Risk sets shrink as loans default or drop out.
for j, members in enumerate(build_risk_sets(ds), start=1):
    print(f"at risk in period {j}: {members.tolist()}")

# Kaplan-Meier hazards are events over the at-risk count: 1/5, 1/4, 1/2.
h = kaplan_meier_init(ds)
S = survival_curve(h)
print("KM hazards:", h)
print("survival  :", S)

# Event probabilities per period plus the terminal survival sum to one.
probs = [event_probability(h, j) for j in (1, 2, 3)]
print("P(event in j):", np.round(probs, 4), " total with S_J:", sum(probs) + S[-1])
