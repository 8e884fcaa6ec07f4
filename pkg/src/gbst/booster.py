"""Gradient-boosted survival trees: training loop, prediction, persistence."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .survival import (
    ObservationGrid,
    SurvivalDataset,
    hazard_from_margin,
    kaplan_meier_init,
    label_matrix,
    margin_from_hazard,
    total_loss,
)
from .tree import GradientField, SurvivalTree, TreeNode, TreeParams, grow_tree

FORMAT_VERSION = 1


@dataclass(frozen=True)
class BoosterParams:
    """Hyperparameters of a boosting run.

    Defaults: depth 6, ``reg_lambda=0.001``, 20% row sampling per tree,
    shrinkage 0.1 and 30 trees.
    """

    num_trees: int = 30
    max_depth: int = 6
    learning_rate: float = 0.1
    reg_lambda: float = 0.001
    subsample: float = 0.2
    split_mode: str = "exact"
    epsilon: float = 0.05
    min_gain: float = 0.0
    min_child_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 0:
            raise ValueError("num_trees must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")
        self.tree_params()

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.reg_lambda, self.min_gain, self.min_child_count,
                          self.split_mode, self.epsilon)


def subsample(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """``ceil(rate * n)`` distinct sorted indices; every index when ``rate == 1``."""
    if not 0 < rate <= 1:
        raise ValueError("rate must lie in (0, 1]")
    if rate == 1:
        return np.arange(n)
    k = max(1, math.ceil(round(rate * n, 9)))
    return np.sort(rng.choice(n, size=k, replace=False))


@dataclass
class BoosterModel:
    grid: ObservationGrid
    base_hazards: np.ndarray
    trees: list[SurvivalTree]
    params: BoosterParams
    feature_names: list[str]
    loss_trace: list[float] = field(default_factory=list)
    initial_loss: float = float("nan")

    @property
    def base_margins(self) -> np.ndarray:
        return margin_from_hazard(self.base_hazards)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_periods(self) -> int:
        return self.grid.period_count

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def _margins(self, X):
        X = self._check(X)
        eta = self.params.learning_rate
        margins = np.tile(self.base_margins, (X.shape[0], 1))
        moved = np.zeros(margins.shape, dtype=bool)
        for tree in self.trees:
            pred = tree.predict(X)
            margins += eta * pred
            moved |= pred != 0
        return margins, moved

    def predict_margins(self, X) -> np.ndarray:
        """``(N, J)`` margins: base margins plus shrunken tree outputs."""
        return self._margins(X)[0]

    def predict_hazards(self, X) -> np.ndarray:
        margins, moved = self._margins(X)
        # untouched entries keep the stored baseline hazard bit-for-bit
        return np.where(moved, hazard_from_margin(margins), self.base_hazards[None, :])

    def predict_survival_matrix(self, X) -> np.ndarray:
        return np.cumprod(1.0 - self.predict_hazards(X), axis=1)

    def predict_survival(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Hazard and survival vectors for a single feature vector."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ValueError("predict_survival expects a single feature vector")
        h = self.predict_hazards(x)[0]
        return h, np.cumprod(1.0 - h)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "grid": {"boundaries": list(self.grid.boundaries)},
            "base_hazards": [float(v) for v in self.base_hazards],
            "base_margins": [float(v) for v in self.base_margins],
            "learning_rate": self.params.learning_rate,
            "reg_lambda": self.params.reg_lambda,
            "params": asdict(self.params),
            "feature_names": list(self.feature_names),
            "initial_loss": self.initial_loss,
            "loss_trace": list(self.loss_trace),
            "trees": [_node_to_dict(t.root) for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "BoosterModel":
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {version!r}")
        grid = ObservationGrid(tuple(doc["grid"]["boundaries"]))
        names = list(doc["feature_names"])
        trees = [SurvivalTree(_node_from_dict(t), grid.period_count, len(names))
                 for t in doc["trees"]]
        return cls(grid, np.asarray(doc["base_hazards"], dtype=float), trees,
                   BoosterParams(**doc["params"]), names,
                   [float(v) for v in doc.get("loss_trace", [])],
                   float(doc.get("initial_loss", float("nan"))))

    @classmethod
    def from_json(cls, text: str) -> "BoosterModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "BoosterModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"weights": [float(w) for w in node.weights]}
    return {
        "feature": int(node.feature),
        "threshold": float(node.threshold),
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(doc: dict) -> TreeNode:
    if "weights" in doc:
        return TreeNode(weights=np.asarray(doc["weights"], dtype=float))
    return TreeNode(int(doc["feature"]), float(doc["threshold"]),
                    _node_from_dict(doc["left"]), _node_from_dict(doc["right"]))


def fit(dataset: SurvivalDataset, params: BoosterParams = BoosterParams(),
        n_threads: int = 1,
        callback: Optional[Callable[[int, BoosterModel], bool]] = None) -> BoosterModel:
    """Train a boosted survival-tree ensemble.

    Starts from the Kaplan-Meier hazards, then adds one tree per iteration,
    grown on a fresh row sample using derivatives at the current margins.
    Margins of all records are updated after each tree and the full
    regularized training loss is appended to ``model.loss_trace``.

    ``callback(m, model)`` runs after iteration ``m`` (1-based); returning
    True stops training.
    """
    X = dataset.features
    labels = label_matrix(dataset)
    base_h = kaplan_meier_init(dataset)
    model = BoosterModel(dataset.grid, base_h, [], params, list(dataset.feature_names))
    margins = np.tile(model.base_margins, (dataset.n_records, 1))
    model.initial_loss = total_loss(dataset, margins)

    eta = params.learning_rate
    tparams = params.tree_params()
    presorted = np.argsort(X, axis=0, kind="stable")
    rng = np.random.default_rng(params.seed)
    scaled = []
    for m in range(1, params.num_trees + 1):
        rows = subsample(dataset.n_records, params.subsample, rng)
        field_ = GradientField.from_labels(labels, margins)
        tree = grow_tree(field_, X, tparams, rows, presorted, n_threads)
        margins += eta * tree.predict(X)
        model.trees.append(tree)
        scaled.append(eta * tree.leaf_weights())
        model.loss_trace.append(total_loss(dataset, margins, params.reg_lambda, scaled))
        if callback is not None and callback(m, model):
            break
    return model
