"""Survival trees: leaf weights, split gains, exact greedy split search, growth."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class GradientField:
    """Per-record, per-period derivatives restricted to the risk sets.

    ``grad`` and ``hess`` are zero wherever ``at_risk`` is False.
    """

    grad: np.ndarray
    hess: np.ndarray
    at_risk: np.ndarray

    @classmethod
    def from_labels(cls, labels: np.ndarray, margins: np.ndarray) -> "GradientField":
        from .survival import gradient_field

        r, s = gradient_field(labels, margins)
        return cls(r, s, labels != 0)

    @property
    def n_periods(self) -> int:
        return self.grad.shape[1]


@dataclass
class NodeStats:
    """Per-period gradient sum ``W``, hessian sum ``V`` and at-risk count."""

    grad: np.ndarray
    hess: np.ndarray
    count: np.ndarray

    @classmethod
    def from_samples(cls, field_: GradientField, samples) -> "NodeStats":
        samples = np.asarray(samples, dtype=np.int64)
        return cls(
            field_.grad[samples].sum(axis=0),
            field_.hess[samples].sum(axis=0),
            field_.at_risk[samples].sum(axis=0).astype(np.int64),
        )

    def __add__(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.grad + other.grad, self.hess + other.hess, self.count + other.count)

    def __sub__(self, other: "NodeStats") -> "NodeStats":
        return NodeStats(self.grad - other.grad, self.hess - other.hess, self.count - other.count)


def _score_terms(grad, hess, count, reg_lambda):
    """``W^2 / (V + lambda)`` per period, 0 where the risk set is empty."""
    grad = np.asarray(grad, dtype=float)
    denom = np.asarray(hess, dtype=float) + reg_lambda
    valid = (np.asarray(count) > 0) & (denom > 0)
    out = np.zeros(np.broadcast(grad, denom).shape)
    np.divide(grad * grad, denom, out=out, where=valid)
    return out


def leaf_weight(stats: NodeStats, reg_lambda: float) -> np.ndarray:
    """Optimal leaf weights ``-W_j / (V_j + lambda)``; 0 for empty periods."""
    if reg_lambda < 0:
        raise ValueError("reg_lambda must be non-negative")
    denom = stats.hess + reg_lambda
    valid = (stats.count > 0) & (denom > 0)
    w = np.zeros(len(stats.grad))
    np.divide(-stats.grad, denom, out=w, where=valid)
    return w


def structure_score(leaves: list[NodeStats], reg_lambda: float) -> float:
    return -0.5 * float(sum(_score_terms(s.grad, s.hess, s.count, reg_lambda).sum() for s in leaves))


def split_gain(parent: NodeStats, left: NodeStats, right: NodeStats, reg_lambda: float,
               atol: float = 1e-9) -> float:
    """Loss reduction of splitting ``parent`` into ``left`` and ``right``."""
    merged = left + right
    scale = 1.0 + np.abs(parent.grad).max(initial=0.0) + np.abs(parent.hess).max(initial=0.0)
    if (
        np.any(merged.count != parent.count)
        or not np.allclose(merged.grad, parent.grad, rtol=0, atol=atol * scale)
        or not np.allclose(merged.hess, parent.hess, rtol=0, atol=atol * scale)
    ):
        raise ValueError("left + right statistics do not add up to the parent")
    terms = (
        _score_terms(left.grad, left.hess, left.count, reg_lambda)
        + _score_terms(right.grad, right.hess, right.count, reg_lambda)
        - _score_terms(parent.grad, parent.hess, parent.count, reg_lambda)
    )
    return 0.5 * float(terms.sum())


@dataclass
class SplitDecision:
    feature: int
    threshold: float
    gain: float
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)


def _midpoint(a: float, b: float) -> float:
    m = a + (b - a) / 2.0
    # adjacent doubles can round the midpoint up onto b
    return m if a <= m < b else a


def sorted_node_samples(x_col: np.ndarray, samples: np.ndarray,
                        presorted: Optional[np.ndarray] = None,
                        in_node: Optional[np.ndarray] = None) -> np.ndarray:
    """Node samples ordered by feature value, ties by record index.

    ``samples`` must be ascending. With a global stable ``presorted`` order
    and the node's membership mask the result is the same array, computed
    by filtering instead of sorting.
    """
    if presorted is not None and in_node is not None and 8 * len(samples) > len(presorted):
        return presorted[in_node[presorted]]
    return samples[np.argsort(x_col[samples], kind="stable")]


def scan_positions(x_sorted, grad_sorted, hess_sorted, risk_sorted, parent: NodeStats,
                   reg_lambda: float, positions: np.ndarray, min_child_count: int = 1):
    """Best split among prefix boundaries of an ordered sample list.

    A position ``p`` sends the first ``p + 1`` samples left. Positions must
    sit on distinct-value boundaries (``x_sorted[p] < x_sorted[p + 1]``).
    Returns ``(gain, p)`` with the first maximal position, or ``None``.
    """
    n = len(x_sorted)
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size:
        left_n = positions + 1
        positions = positions[(left_n >= min_child_count) & (n - left_n >= min_child_count)]
    if positions.size == 0:
        return None
    gl = np.cumsum(grad_sorted, axis=0)[positions]
    hl = np.cumsum(hess_sorted, axis=0)[positions]
    cl = np.cumsum(risk_sorted, axis=0, dtype=np.int64)[positions]
    gr = parent.grad - gl
    hr = parent.hess - hl
    cr = parent.count - cl
    gains = 0.5 * (
        _score_terms(gl, hl, cl, reg_lambda)
        + _score_terms(gr, hr, cr, reg_lambda)
        - _score_terms(parent.grad, parent.hess, parent.count, reg_lambda)
    ).sum(axis=1)
    best = int(np.argmax(gains))
    return float(gains[best]), int(positions[best])


def boundary_positions(x_sorted: np.ndarray) -> np.ndarray:
    return np.flatnonzero(x_sorted[:-1] < x_sorted[1:])


def best_over_features(scan_feature: Callable[[int], Optional[tuple]], n_features: int,
                       n_threads: int = 1):
    """Evaluate ``scan_feature`` on every feature and keep the best result.

    Each result is ``(gain, threshold, payload)``. Ties go to the lowest
    feature index; within a feature the scan already returns the smallest
    threshold. Merging happens in feature order, so the outcome does not
    depend on ``n_threads``.
    """
    if n_threads > 1 and n_features > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(scan_feature, range(n_features)))
    else:
        results = [scan_feature(k) for k in range(n_features)]
    best = None
    for k, res in enumerate(results):
        if res is not None and (best is None or res[0] > best[1][0]):
            best = (k, res)
    return best


def _exact_feature_scan(X, field_: GradientField, samples, parent, reg_lambda, min_child_count,
                        presorted, in_node):
    def scan(k):
        col = X[:, k]
        order = sorted_node_samples(col, samples,
                                    None if presorted is None else presorted[:, k], in_node)
        xs = col[order]
        res = scan_positions(xs, field_.grad[order], field_.hess[order], field_.at_risk[order],
                             parent, reg_lambda, boundary_positions(xs), min_child_count)
        if res is None:
            return None
        gain, p = res
        return gain, _midpoint(xs[p], xs[p + 1]), None

    return scan


def _decision_from(X, samples, best) -> Optional[SplitDecision]:
    if best is None:
        return None
    k, (gain, thr, _) = best
    goes_left = X[samples, k] <= thr
    return SplitDecision(k, thr, gain, samples[goes_left], samples[~goes_left])


def find_best_split_exact(samples, X: np.ndarray, field_: GradientField, reg_lambda: float,
                          min_gain: float = 0.0, min_child_count: int = 1,
                          presorted: Optional[np.ndarray] = None,
                          n_threads: int = 1) -> Optional[SplitDecision]:
    """Exhaustive greedy split search over every feature and value boundary.

    Parameters
    ----------
    samples : array of int
        Record indices of the node.
    X : ndarray of shape (N, n)
    field_ : GradientField
    reg_lambda : float
    min_gain : float
        Splits with gain ``<= min_gain`` are rejected.
    min_child_count : int
        Minimum number of samples on each side.
    presorted : ndarray of shape (N, n), optional
        Stable argsort of every column of ``X``, reused across nodes.
    n_threads : int

    Returns
    -------
    SplitDecision or None
    """
    samples = np.sort(np.asarray(samples, dtype=np.int64))
    if len(samples) < 2:
        return None
    parent = NodeStats.from_samples(field_, samples)
    in_node = None
    if presorted is not None:
        in_node = np.zeros(X.shape[0], dtype=bool)
        in_node[samples] = True
    scan = _exact_feature_scan(X, field_, samples, parent, reg_lambda, min_child_count,
                               presorted, in_node)
    best = best_over_features(scan, X.shape[1], n_threads)
    if best is None or not best[1][0] > min_gain:
        return None
    return _decision_from(X, samples, best)


@dataclass
class TreeNode:
    """Internal node (``feature``/``threshold``/children) or leaf (``weights``)."""

    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    weights: Optional[np.ndarray] = None

    @property
    def is_leaf(self) -> bool:
        return self.weights is not None


@dataclass
class SurvivalTree:
    root: TreeNode
    n_periods: int
    n_features: int

    def leaves(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def leaf_weights(self) -> np.ndarray:
        """``(L, J)`` array of leaf weights in left-to-right order."""
        return np.array([leaf.weights for leaf in self.leaves()]).reshape(-1, self.n_periods)

    @property
    def depth(self) -> int:
        def _d(node):
            return 0 if node.is_leaf else 1 + max(_d(node.left), _d(node.right))
        return _d(self.root)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index (into :meth:`leaves`) for every row of ``X``."""
        X = _check_width(X, self.n_features)
        ids = {id(leaf): i for i, leaf in enumerate(self.leaves())}
        out = np.empty(X.shape[0], dtype=np.int64)
        for node, rows in _route(self.root, X, np.arange(X.shape[0])):
            out[rows] = ids[id(node)]
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        """``(N, J)`` leaf weights for every row of ``X``."""
        X = _check_width(X, self.n_features)
        out = np.empty((X.shape[0], self.n_periods))
        for node, rows in _route(self.root, X, np.arange(X.shape[0])):
            out[rows] = node.weights
        return out


def _check_width(X, n_features):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def _route(node, X, rows):
    stack = [(node, rows)]
    while stack:
        node, rows = stack.pop()
        if node.is_leaf:
            yield node, rows
            continue
        left = X[rows, node.feature] <= node.threshold
        stack.append((node.right, rows[~left]))
        stack.append((node.left, rows[left]))


def predict_tree(tree: SurvivalTree, x) -> np.ndarray:
    """Weight vector of the leaf reached by a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != tree.n_features:
        raise ValueError(f"expected a feature vector of length {tree.n_features}")
    node = tree.root
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.weights.copy()


@dataclass
class TreeParams:
    max_depth: int = 6
    reg_lambda: float = 0.001
    min_gain: float = 0.0
    min_child_count: int = 1
    split_mode: str = "exact"
    epsilon: float = 0.05

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be >= 0")
        if self.min_child_count < 1:
            raise ValueError("min_child_count must be >= 1")
        if self.split_mode not in ("exact", "quantile"):
            raise ValueError("split_mode must be 'exact' or 'quantile'")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")


def grow_tree(field_: GradientField, X: np.ndarray, params: TreeParams,
              samples=None, presorted: Optional[np.ndarray] = None,
              n_threads: int = 1) -> SurvivalTree:
    """Grow a survival tree depth-first on ``samples`` (all rows by default)."""
    X = np.asarray(X, dtype=float)
    if samples is None:
        samples = np.arange(X.shape[0])
    samples = np.sort(np.asarray(samples, dtype=np.int64))
    if params.split_mode == "quantile":
        from .quantile import find_best_split_quantile

        def find(idx):
            return find_best_split_quantile(idx, X, field_, params.reg_lambda, params.epsilon,
                                            params.min_gain, params.min_child_count,
                                            presorted, n_threads)
    else:
        def find(idx):
            return find_best_split_exact(idx, X, field_, params.reg_lambda, params.min_gain,
                                         params.min_child_count, presorted, n_threads)

    def build(idx, depth):
        split = None
        if depth < params.max_depth and len(idx) >= 2 * params.min_child_count:
            split = find(idx)
        if split is None:
            stats = NodeStats.from_samples(field_, idx)
            return TreeNode(weights=leaf_weight(stats, params.reg_lambda))
        return TreeNode(split.feature, split.threshold,
                        build(split.left, depth + 1), build(split.right, depth + 1))

    return SurvivalTree(build(samples, 0), field_.n_periods, X.shape[1])
