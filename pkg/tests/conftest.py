import sys

import numpy as np
import pytest

from gbst.survival import ObservationGrid, SurvivalDataset, label_matrix
from gbst.tree import GradientField


def random_tiny(rng, n_max=8, f_max=3, j_max=3, distinct=4):
    """Random small censored dataset plus derivatives at random margins."""
    N = int(rng.integers(2, n_max + 1))
    n = int(rng.integers(1, f_max + 1))
    J = int(rng.integers(1, j_max + 1))
    X = rng.integers(0, distinct, size=(N, n)).astype(float)
    ep = rng.integers(1, J + 2, size=N)
    ev = rng.integers(0, 2, size=N)
    ds = SurvivalDataset(X, ep, ev, ObservationGrid.regular(J))
    margins = rng.normal(0, 1.5, size=(N, J))
    return ds, GradientField.from_labels(label_matrix(ds), margins)


def brute_force_gain(field_, left, right, reg_lambda):
    """Split gain from explicit per-child loops over records and periods."""
    J = field_.grad.shape[1]

    def term(rows, j):
        members = [i for i in rows if field_.at_risk[i, j]]
        if not members:
            return 0.0
        W = sum(field_.grad[i, j] for i in members)
        V = sum(field_.hess[i, j] for i in members)
        return W * W / (V + reg_lambda)

    parent = list(left) + list(right)
    return 0.5 * sum(term(left, j) + term(right, j) - term(parent, j) for j in range(J))


def brute_force_best(X, field_, samples, reg_lambda, min_child_count=1):
    """Max gain over every (feature, observed value) split ``x <= v``."""
    best = None
    for k in range(X.shape[1]):
        for v in np.unique(X[samples, k]):
            left = [i for i in samples if X[i, k] <= v]
            right = [i for i in samples if X[i, k] > v]
            if len(left) < min_child_count or len(right) < min_child_count:
                continue
            g = brute_force_gain(field_, left, right, reg_lambda)
            if best is None or g > best[0]:
                best = (g, k, v)
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.REPORT:
        terminalreporter.write_line(line)
