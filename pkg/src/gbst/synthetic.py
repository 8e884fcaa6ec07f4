"""Synthetic censored data with a known discrete-time hazard."""

from __future__ import annotations

import csv

import numpy as np

from .survival import ObservationGrid, SurvivalDataset


def make_survival_data(n_records: int = 2000, n_features: int = 10, n_periods: int = 12,
                       coef=(4.0, -3.0, 2.0), base_hazard: float = 0.06,
                       censor_rate: float = 0.02, seed: int = 0) -> SurvivalDataset:
    """Draw records whose hazard logit is linear in the first features.

    ``logit h_j(x) = logit(base_hazard) + x[:len(coef)] @ coef`` in every
    period, features are standard normal. Each record may also drop out
    (censoring) with probability ``censor_rate`` per period; records still
    alive after the last period are censored beyond the horizon.
    """
    rng = np.random.default_rng(seed)
    coef = np.asarray(coef, dtype=float)
    X = rng.standard_normal((n_records, n_features))
    logits = np.log(base_hazard / (1 - base_hazard)) + X[:, : coef.size] @ coef
    h = 1.0 / (1.0 + np.exp(-logits))

    event_period = np.full(n_records, n_periods + 1)
    event = np.zeros(n_records, dtype=np.int64)
    alive = np.ones(n_records, dtype=bool)
    for j in range(1, n_periods + 1):
        u_event = rng.random(n_records)
        u_censor = rng.random(n_records)
        dies = alive & (u_event < h)
        event_period[dies] = j
        event[dies] = 1
        alive &= ~dies
        drops = alive & (u_censor < censor_rate)
        event_period[drops] = j
        alive &= ~drops
    return SurvivalDataset(X, event_period, event, ObservationGrid.regular(n_periods),
                           [f"x{k}" for k in range(n_features)])


def write_csv(dataset: SurvivalDataset, path, segments: int = 0, seed: int = 0) -> None:
    """Write ``dataset`` as a CSV the ``gbst`` command line can train on.

    Columns are ``id``, the features, an optional noise categorical
    ``segment`` with ``segments`` levels, ``months`` (mid-period time,
    or half a period past the horizon when censored beyond it) and
    ``default``.
    """
    rng = np.random.default_rng(seed)
    level = rng.integers(0, segments, size=dataset.n_records) if segments else None
    times = dataset.event_period - 0.5
    header = ["id", *dataset.feature_names]
    if segments:
        header.append("segment")
    header += ["months", "default"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n_records):
            row = [i, *(repr(float(v)) for v in dataset.features[i])]
            if segments:
                row.append(f"s{level[i]}")
            row += [repr(float(times[i])), int(dataset.event[i])]
            w.writerow(row)
