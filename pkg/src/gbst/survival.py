"""Discrete-time survival machinery.

Periods are 1-based throughout: period ``j`` is the interval
``(tau_{j-1}, tau_j]`` with ``tau_0 = 0``, and period ``J + 1`` stands for
"observed beyond the last boundary". Arrays indexed by period use column
``j - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, logit

#: Hazards are kept inside ``[H_MIN, 1 - H_MIN]``.
H_MIN = 1e-7
#: Margin magnitude matching the hazard clamp.
F_MAX = float(logit(1.0 - H_MIN))


class InvalidTimeError(ValueError):
    pass


@dataclass(frozen=True)
class ObservationGrid:
    """Strictly increasing observation boundaries ``tau_1 < ... < tau_J``."""

    boundaries: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(v) for v in self.boundaries)
        if len(b) < 1:
            raise ValueError("grid needs at least one boundary")
        if not all(math.isfinite(v) for v in b) or b[0] <= 0:
            raise ValueError("grid boundaries must be finite and positive")
        if any(b[i + 1] <= b[i] for i in range(len(b) - 1)):
            raise ValueError("grid boundaries must be strictly increasing")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def regular(cls, n_periods: int, step: float = 1.0) -> "ObservationGrid":
        if n_periods < 1:
            raise ValueError("n_periods must be >= 1")
        return cls(tuple(step * (j + 1) for j in range(n_periods)))

    @property
    def period_count(self) -> int:
        return len(self.boundaries)


def map_to_period(t: float, grid: ObservationGrid) -> int:
    """Period index ``J(t)`` of a single time; boundaries close on the right."""
    t = float(t)
    if not t > 0:
        raise InvalidTimeError(f"time must be positive, got {t!r}")
    return int(np.searchsorted(grid.boundaries, t, side="left")) + 1


def map_to_periods(times, grid: ObservationGrid) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if not np.all(times > 0):
        raise InvalidTimeError("all times must be positive")
    return np.searchsorted(np.asarray(grid.boundaries), times, side="left") + 1


def censor_label(j: int, event_period: int, event: int, n_periods: int | None = None) -> int:
    """Label ``y_j`` (+1 once the event has happened by period ``j``, else -1).

    Only defined on the record's contribution range
    ``1 <= j <= min(event_period, J)``.
    """
    upper = event_period if n_periods is None else min(event_period, n_periods)
    if not 1 <= j <= upper:
        raise ValueError(f"period {j} outside contribution range [1, {upper}]")
    return 1 if (event == 1 and j >= event_period) else -1


@dataclass
class SurvivalDataset:
    """Feature matrix with per-record ``(event_period, event)`` labels.

    Attributes
    ----------
    features : ndarray of shape (N, n)
    event_period : ndarray of int, shape (N,)
        ``J(t_i)`` in ``1..J+1``.
    event : ndarray of int, shape (N,)
        1 for an observed default, 0 for right-censored.
    grid : ObservationGrid
    feature_names : list of str
    """

    features: np.ndarray
    event_period: np.ndarray
    event: np.ndarray
    grid: ObservationGrid
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=float))
        if self.features.ndim == 1:
            self.features = self.features.reshape(-1, 1)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        self.event_period = np.asarray(self.event_period, dtype=np.int64).ravel()
        self.event = np.asarray(self.event, dtype=np.int64).ravel()
        n_rec = self.features.shape[0]
        if n_rec < 1:
            raise ValueError("dataset must contain at least one record")
        if self.event_period.shape[0] != n_rec or self.event.shape[0] != n_rec:
            raise ValueError("label arrays must have one entry per record")
        J = self.grid.period_count
        if np.any(self.event_period < 1) or np.any(self.event_period > J + 1):
            raise ValueError(f"event_period must lie in [1, {J + 1}]")
        if not np.all((self.event == 0) | (self.event == 1)):
            raise ValueError("event indicator must be 0 or 1")
        if not self.feature_names:
            self.feature_names = [f"x{k}" for k in range(self.features.shape[1])]
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names length does not match feature width")
        self.feature_names = list(self.feature_names)

    @property
    def n_records(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_periods(self) -> int:
        return self.grid.period_count

    def subset(self, index) -> "SurvivalDataset":
        index = np.asarray(index)
        return SurvivalDataset(
            self.features[index],
            self.event_period[index],
            self.event[index],
            self.grid,
            list(self.feature_names),
        )


def risk_mask(dataset: SurvivalDataset) -> np.ndarray:
    """Boolean ``(N, J)`` matrix, True where record ``i`` belongs to ``N_j``."""
    periods = np.arange(1, dataset.n_periods + 1)
    return dataset.event_period[:, None] >= periods[None, :]


def build_risk_sets(dataset: SurvivalDataset) -> list[np.ndarray]:
    """Index sets ``N_j = {i : J(t_i) >= j}`` for ``j = 1..J`` (0-based indices)."""
    mask = risk_mask(dataset)
    return [np.flatnonzero(mask[:, j]) for j in range(dataset.n_periods)]


def label_matrix(dataset: SurvivalDataset) -> np.ndarray:
    """``(N, J)`` int8 matrix of labels ``y_j(t_i)``; 0 outside the risk sets."""
    periods = np.arange(1, dataset.n_periods + 1)[None, :]
    ep = dataset.event_period[:, None]
    positive = (dataset.event[:, None] == 1) & (periods >= ep)
    y = np.where(positive, 1, -1).astype(np.int8)
    y[ep < periods] = 0
    return y


def hazard_from_margin(f):
    """Logistic hazard of a margin, clamped into ``[H_MIN, 1 - H_MIN]``."""
    f = np.clip(np.asarray(f, dtype=float), -F_MAX, F_MAX)
    h = np.clip(expit(f), H_MIN, 1.0 - H_MIN)
    return h if h.ndim else float(h)


def margin_from_hazard(h):
    h = np.clip(np.asarray(h, dtype=float), H_MIN, 1.0 - H_MIN)
    f = logit(h)
    return f if f.ndim else float(f)


def _check_hazards(h: np.ndarray) -> None:
    if np.any(~(h > 0)) or np.any(~(h < 1)):
        raise ValueError("hazards must lie strictly inside (0, 1)")


def survival_curve(hazards) -> np.ndarray:
    """``S(tau_j) = prod_{l <= j} (1 - h_l)`` along the last axis."""
    h = np.asarray(hazards, dtype=float)
    _check_hazards(h)
    return np.cumprod(1.0 - h, axis=-1)


def event_probability(hazards, j: int) -> float:
    """Probability that the event falls in period ``j`` (1-based)."""
    h = np.asarray(hazards, dtype=float)
    _check_hazards(h)
    if not 1 <= j <= h.shape[-1]:
        raise ValueError(f"period {j} out of range [1, {h.shape[-1]}]")
    return float(h[j - 1] * np.prod(1.0 - h[: j - 1]))


def kaplan_meier_init(dataset: SurvivalDataset) -> np.ndarray:
    """Per-period baseline hazards ``d_j / n_j``.

    ``d_j`` counts observed events (``event == 1``) in period ``j``; ``n_j``
    is the size of the risk set. Periods with an empty risk set get
    ``H_MIN``, and every estimate is clamped to ``[H_MIN, 1 - H_MIN]``.
    """
    J = dataset.n_periods
    periods = np.arange(1, J + 1)
    ep = dataset.event_period
    d = np.array([np.count_nonzero((ep == j) & (dataset.event == 1)) for j in periods], dtype=float)
    n = np.array([np.count_nonzero(ep >= j) for j in periods], dtype=float)
    h = np.full(J, H_MIN)
    nz = n > 0
    h[nz] = d[nz] / n[nz]
    return np.clip(h, H_MIN, 1.0 - H_MIN)


def logistic_loss(y, f):
    """``log(1 + exp(-y f))`` with the margin clamp applied."""
    f = np.clip(np.asarray(f, dtype=float), -F_MAX, F_MAX)
    return np.logaddexp(0.0, -np.asarray(y, dtype=float) * f)


def gradient_hessian(y, f):
    """First and second derivative of the logistic loss in the margin.

    Returns ``(r, sigma)`` with ``r = h - 1`` for ``y = +1``, ``r = h`` for
    ``y = -1`` and ``sigma = h (1 - h)``. Works elementwise on arrays.
    """
    h = hazard_from_margin(f)
    r = h - (np.asarray(y) == 1)
    sigma = h * (1.0 - h)
    if np.ndim(r) == 0:
        return float(r), float(sigma)
    return r, sigma


def gradient_field(labels: np.ndarray, margins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(r, sigma)`` matrices for a label matrix; zero outside the risk sets."""
    r, sigma = gradient_hessian(labels, margins)
    outside = labels == 0
    r = np.where(outside, 0.0, r)
    sigma = np.where(outside, 0.0, sigma)
    return r, sigma


def penalty(leaf_weights: Iterable[np.ndarray], reg_lambda: float) -> float:
    """``(lambda / 2) * sum_k ||w^(k)||^2`` over per-tree leaf-weight arrays."""
    if reg_lambda == 0:
        return 0.0
    sq = math.fsum(math.fsum(np.square(np.asarray(w, dtype=float)).ravel()) for w in leaf_weights)
    return 0.5 * reg_lambda * sq


def total_loss(
    dataset: SurvivalDataset,
    margins: np.ndarray,
    reg_lambda: float = 0.0,
    leaf_weights: Sequence[np.ndarray] = (),
) -> float:
    """Regularized negative log-likelihood over all risk sets.

    Parameters
    ----------
    dataset : SurvivalDataset
    margins : ndarray of shape (N, J)
    reg_lambda : float
    leaf_weights : sequence of ndarray
        One ``(L_k, J)`` array of leaf weights per tree.
    """
    margins = np.asarray(margins, dtype=float)
    if margins.shape != (dataset.n_records, dataset.n_periods):
        raise ValueError(f"margins must have shape {(dataset.n_records, dataset.n_periods)}")
    y = label_matrix(dataset)
    losses = logistic_loss(y, margins)
    # period-major order; fsum makes the result independent of chunking anyway
    nll = math.fsum(losses.T[(y != 0).T])
    return nll + penalty(leaf_weights, reg_lambda)
