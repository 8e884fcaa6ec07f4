"""Discrimination metrics for discrete-time survival predictions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .survival import SurvivalDataset


def _labels(dataset_or_labels):
    if isinstance(dataset_or_labels, SurvivalDataset):
        return dataset_or_labels.event_period, dataset_or_labels.event
    ep, ev = dataset_or_labels
    return np.asarray(ep), np.asarray(ev)


def concordance_index(risk_scores, dataset) -> float:
    """Harrell's C-index on discrete event periods.

    A pair ``(i, k)`` is comparable when ``i`` has an observed event and
    ``k`` leaves the study in a strictly later period. It is concordant when
    ``i`` carries the higher risk score; score ties count one half. Returns
    0.5 when nothing is comparable.
    """
    scores = np.asarray(risk_scores, dtype=float)
    ep, ev = _labels(dataset)
    if scores.shape != ep.shape:
        raise ValueError("need exactly one risk score per record")
    twice_concordant = 0
    comparable = 0
    for p in np.unique(ep[ev == 1]):
        later = np.sort(scores[ep > p])
        if later.size == 0:
            continue
        s = scores[(ep == p) & (ev == 1)]
        lo = np.searchsorted(later, s, side="left")
        hi = np.searchsorted(later, s, side="right")
        twice_concordant += int(2 * lo.sum() + (hi - lo).sum())
        comparable += s.size * later.size
    if comparable == 0:
        return 0.5
    return twice_concordant / (2 * comparable)


def period_cohort(dataset, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Records with a known period-``j`` outcome and their 0/1 labels.

    The cohort is the risk set of period ``j`` minus records censored in
    period ``j``. The label is 1 for an event in period ``j``.
    """
    ep, ev = _labels(dataset)
    in_risk = ep >= j
    known = in_risk & ~((ep == j) & (ev == 0))
    positive = (ev == 1) & (ep <= j)
    return known, positive[known].astype(np.int8)


def _split_scores(scores, dataset, j):
    scores = np.asarray(scores, dtype=float)
    mask, y = period_cohort(dataset, j)
    s = scores[mask]
    return s[y == 1], s[y == 0]


def period_auc(scores, dataset, j: int) -> Optional[float]:
    """Rank AUC of ``scores`` for a period-``j`` event; None for a one-class cohort."""
    pos, neg = _split_scores(scores, dataset, j)
    if pos.size == 0 or neg.size == 0:
        return None
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def period_ks(scores, dataset, j: int) -> Optional[float]:
    """Largest gap between the class-conditional score CDFs (``max |TPR - FPR|``)."""
    pos, neg = _split_scores(scores, dataset, j)
    if pos.size == 0 or neg.size == 0:
        return None
    grid = np.unique(np.concatenate([pos, neg]))
    cdf_pos = np.searchsorted(np.sort(pos), grid, side="right") / pos.size
    cdf_neg = np.searchsorted(np.sort(neg), grid, side="right") / neg.size
    return float(np.max(np.abs(cdf_pos - cdf_neg)))


def default_rate(dataset, j: int) -> float:
    """Share of records with an observed event in periods ``1..j``."""
    ep, ev = _labels(dataset)
    if ep.size == 0:
        raise ValueError("default rate of an empty subset is undefined")
    return float(np.count_nonzero((ev == 1) & (ep <= j)) / ep.size)


def decile_analysis(survival_at_j, dataset, j: int, n_groups: int = 10) -> np.ndarray:
    """Observed default rates of groups ordered by predicted survival.

    Records are stably sorted by ascending ``S(tau_j)`` and cut into
    ``n_groups`` contiguous groups; the first ``N mod n_groups`` groups get
    one extra record. Group 1 holds the lowest predicted survival.
    """
    s = np.asarray(survival_at_j, dtype=float)
    ep, ev = _labels(dataset)
    if s.size < n_groups:
        raise ValueError(f"need at least {n_groups} records for group analysis")
    order = np.argsort(s, kind="stable")
    return np.array([default_rate((ep[g], ev[g]), j) for g in np.array_split(order, n_groups)])


def risk_score(survival: np.ndarray, reduction: str = "expected") -> np.ndarray:
    """Scalar risk per record from ``(N, J)`` survival curves; higher is riskier.

    ``"expected"`` is minus the sum of the survival curve, ``"horizon:j"``
    is the cumulative event probability ``1 - S(tau_j)``.
    """
    survival = np.asarray(survival, dtype=float)
    if reduction == "expected":
        return -survival.sum(axis=1)
    if reduction.startswith("horizon:"):
        j = int(reduction.split(":", 1)[1])
        if not 1 <= j <= survival.shape[1]:
            raise ValueError(f"horizon {j} out of range")
        return 1.0 - survival[:, j - 1]
    raise ValueError(f"unknown score reduction {reduction!r}")


@dataclass
class EvaluationReport:
    c_index: float
    score_reduction: str
    periods: list[dict] = field(default_factory=list)
    deciles: dict[int, list[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "c_index": self.c_index,
            "score_reduction": self.score_reduction,
            "periods": self.periods,
            "deciles": {str(j): rates for j, rates in self.deciles.items()},
        }


def evaluate(hazards: np.ndarray, dataset: SurvivalDataset, score_reduction: str = "expected",
             decile_periods: Optional[Sequence[int]] = None) -> EvaluationReport:
    """Full report from predicted ``(N, J)`` hazards.

    Per-period AUC and KS score the at-risk cohort by the predicted hazard
    of that period.
    """
    hazards = np.asarray(hazards, dtype=float)
    survival = np.cumprod(1.0 - hazards, axis=1)
    report = EvaluationReport(
        concordance_index(risk_score(survival, score_reduction), dataset), score_reduction)
    for j in range(1, dataset.n_periods + 1):
        mask, y = period_cohort(dataset, j)
        report.periods.append({
            "period": j,
            "at_risk": int(np.count_nonzero(dataset.event_period >= j)),
            "cohort": int(mask.sum()),
            "events": int(y.sum()),
            "auc": period_auc(hazards[:, j - 1], dataset, j),
            "ks": period_ks(hazards[:, j - 1], dataset, j),
        })
    if decile_periods is None:
        decile_periods = range(1, dataset.n_periods + 1)
    if dataset.n_records >= 10:
        for j in decile_periods:
            rates = decile_analysis(survival[:, j - 1], dataset, j)
            report.deciles[int(j)] = [float(r) for r in rates]
    return report
