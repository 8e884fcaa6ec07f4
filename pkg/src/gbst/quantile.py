"""Weighted-quantile split candidates and the approximate split search.

Candidate thresholds for a feature are proposed per period from the
hessian-weighted distribution of the feature over the node's at-risk
records, then merged across periods. Only those thresholds are evaluated.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .tree import (
    GradientField,
    NodeStats,
    SplitDecision,
    _decision_from,
    _midpoint,
    best_over_features,
    scan_positions,
    sorted_node_samples,
)


def rank_function(z: float, values, weights) -> float:
    """Share of the total weight carried by values strictly below ``z``.

    Returns 0 when the total weight is 0.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        return 0.0
    return float(weights[values < z].sum() / total)


def period_candidates(values, weights, epsilon: float) -> np.ndarray:
    """Candidates for one period: interior quantile points plus the maximum.

    Sweeping upward from the minimum, a value is admitted once the weight of
    the values above the previous candidate and up to it (inclusive)
    reaches ``epsilon`` of the total. Buckets are disjoint, so at most
    ``ceil(1/epsilon) - 1`` interior points appear.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        return values
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    distinct, start = np.unique(v, return_index=True)
    mass = np.add.reduceat(w, start)
    cum = np.cumsum(mass)
    # relative slack so buckets of exactly epsilon close despite rounding
    step = epsilon * cum[-1] * (1.0 - 1e-12)
    picked = []
    pos = 0
    while True:
        nxt = int(np.searchsorted(cum, cum[pos] + step, side="left"))
        if nxt >= len(cum):
            break
        picked.append(nxt)
        pos = nxt
    picked.append(len(distinct) - 1)
    return np.unique(distinct[picked])


def propose_candidates(x, hess, at_risk, epsilon: float) -> np.ndarray:
    """Sorted candidate thresholds for one feature of a node.

    Parameters
    ----------
    x : ndarray of shape (m,)
        Feature values of the node's samples.
    hess : ndarray of shape (m, J)
        Hessians, used as rank weights.
    at_risk : ndarray of bool, shape (m, J)
    epsilon : float in (0, 1]
    """
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x
    found = [np.array([x.min(), x.max()])]
    for j in range(hess.shape[1]):
        m = at_risk[:, j]
        if np.any(m):
            found.append(period_candidates(x[m], hess[m, j], epsilon))
    return np.unique(np.concatenate(found))


def max_candidates(n_periods: int, epsilon: float) -> int:
    return n_periods * math.ceil(1.0 / epsilon) + 2


def find_best_split_quantile(samples, X: np.ndarray, field_: GradientField, reg_lambda: float,
                             epsilon: float = 0.05, min_gain: float = 0.0,
                             min_child_count: int = 1, presorted: Optional[np.ndarray] = None,
                             n_threads: int = 1) -> Optional[SplitDecision]:
    """Best split restricted to weighted-quantile candidate thresholds.

    Candidate ``s`` sends ``x <= s`` left. The stored threshold is the
    midpoint between ``s`` and the next larger value in the node, so a
    decision coincides with the exact search whenever both pick the same
    partition.
    """
    samples = np.sort(np.asarray(samples, dtype=np.int64))
    if len(samples) < 2:
        return None
    parent = NodeStats.from_samples(field_, samples)
    in_node = None
    if presorted is not None:
        in_node = np.zeros(X.shape[0], dtype=bool)
        in_node[samples] = True

    def scan(k):
        col = X[:, k]
        order = sorted_node_samples(col, samples,
                                    None if presorted is None else presorted[:, k], in_node)
        xs = col[order]
        cands = propose_candidates(xs, field_.hess[order], field_.at_risk[order], epsilon)
        positions = np.searchsorted(xs, cands, side="right") - 1
        positions = positions[positions < len(xs) - 1]
        res = scan_positions(xs, field_.grad[order], field_.hess[order], field_.at_risk[order],
                             parent, reg_lambda, positions, min_child_count)
        if res is None:
            return None
        gain, p = res
        return gain, _midpoint(xs[p], xs[p + 1]), None

    best = best_over_features(scan, X.shape[1], n_threads)
    if best is None or not best[1][0] > min_gain:
        return None
    return _decision_from(X, samples, best)
