"""Gradient-boosted survival trees for discrete-time credit-risk modelling."""

from .booster import BoosterModel, BoosterParams, fit, subsample
from .survival import (
    H_MIN,
    ObservationGrid,
    SurvivalDataset,
    build_risk_sets,
    censor_label,
    event_probability,
    gradient_hessian,
    hazard_from_margin,
    kaplan_meier_init,
    map_to_period,
    survival_curve,
    total_loss,
)

__all__ = [
    "BoosterModel",
    "BoosterParams",
    "fit",
    "subsample",
    "H_MIN",
    "ObservationGrid",
    "SurvivalDataset",
    "build_risk_sets",
    "censor_label",
    "event_probability",
    "gradient_hessian",
    "hazard_from_margin",
    "kaplan_meier_init",
    "map_to_period",
    "survival_curve",
    "total_loss",
]

__version__ = "0.1.0"
