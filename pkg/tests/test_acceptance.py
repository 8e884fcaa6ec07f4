"""Acceptance gate: one check per primary criterion, each printing PASS or FAIL.

Run under pytest (lines appear in the terminal summary) or directly::

    python tests/test_acceptance.py
"""

import math
import os
import sys
import tempfile
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
from conftest import brute_force_best, random_tiny  # noqa: E402

from gbst.booster import BoosterModel, BoosterParams, fit  # noqa: E402
from gbst.cli import main as cli_main  # noqa: E402
from gbst.metrics import concordance_index, decile_analysis, risk_score  # noqa: E402
from gbst.quantile import find_best_split_quantile, max_candidates, propose_candidates  # noqa: E402
from gbst.survival import (  # noqa: E402
    SurvivalDataset,
    event_probability,
    gradient_hessian,
    kaplan_meier_init,
    survival_curve,
)
from gbst.synthetic import make_survival_data, write_csv  # noqa: E402
from gbst.tree import NodeStats, find_best_split_exact, leaf_weight  # noqa: E402

REPORT: list[str] = []
LENDING_CLUB_ENV = "GBST_LENDING_CLUB_CSV"


def record(name, ok, detail, elapsed=None):
    status = "PASS" if ok else "FAIL"
    took = "" if elapsed is None else f" [{elapsed:.2f}s]"
    line = f"{status}  {name}: {detail}{took}"
    REPORT.append(line)
    print(line)
    return ok


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _fd(y, f, step=1e-5):
    with mpmath.workdps(40):
        f, h = mpmath.mpf(f), mpmath.mpf(step)
        lo, mid, hi = (mpmath.log1p(mpmath.exp(-y * z)) for z in (f - h, f, f + h))
        return float((hi - lo) / (2 * h)), float((hi - 2 * mid + lo) / h**2)


def check_derivatives():
    rng = np.random.default_rng(101)
    worst1 = worst2 = 0.0
    with Timer() as t:
        for _ in range(1000):
            y = int(rng.choice([-1, 1]))
            f = float(rng.uniform(-8, 8))
            r, s = gradient_hessian(y, f)
            d1, d2 = _fd(y, f)
            worst1 = max(worst1, abs(r - d1) / abs(r))
            worst2 = max(worst2, abs(s - d2) / abs(s))
    ok = worst1 < 1e-6 and worst2 < 1e-4 and t.elapsed < 1.0
    return record("derivatives", ok, f"max rel err r={worst1:.2e} sigma={worst2:.2e} on 1000 points",
                  t.elapsed)


def check_leaf_optimality():
    rng = np.random.default_rng(102)
    failures = 0
    with Timer() as t:
        for _ in range(100):
            ds, field_ = random_tiny(rng, n_max=12, j_max=5)
            samples = rng.choice(ds.n_records, size=int(rng.integers(1, ds.n_records + 1)),
                                 replace=False)
            stats = NodeStats.from_samples(field_, samples)
            lam = float(rng.uniform(1e-3, 1.0))
            w = leaf_weight(stats, lam)

            def objective(v):
                return math.fsum(stats.grad * v + 0.5 * (stats.hess + lam) * v * v)

            base = objective(w)
            for j in range(len(w)):
                for d in (-1e-3, 1e-3):
                    v = w.copy()
                    v[j] += d
                    failures += not base < objective(v)
    ok = failures == 0 and t.elapsed < 1.0
    return record("leaf-weight optimality", ok,
                  f"{failures} perturbations not beaten over 100 random NodeStats", t.elapsed)


def check_exact_split():
    rng = np.random.default_rng(103)
    worst, mismatched = 0.0, 0
    with Timer() as t:
        for _ in range(200):
            ds, field_ = random_tiny(rng, n_max=8, f_max=3, j_max=3)
            samples = np.arange(ds.n_records)
            got = find_best_split_exact(samples, ds.features, field_, 0.001, min_gain=-np.inf)
            want = brute_force_best(ds.features, field_, samples, 0.001)
            if (got is None) != (want is None):
                mismatched += 1
            elif got is not None:
                worst = max(worst, abs(got.gain - want[0]))
    ok = mismatched == 0 and worst <= 1e-10 and t.elapsed < 10
    return record("exact-split oracle", ok,
                  f"max |gain - enumeration| = {worst:.1e}, {mismatched} presence mismatches "
                  "over 200 datasets", t.elapsed)


def check_quantile():
    rng = np.random.default_rng(104)
    above = unequal = over_bound = 0
    with Timer() as t:
        for _ in range(150):
            ds, field_ = random_tiny(rng, n_max=60, f_max=3, j_max=4, distinct=20)
            samples = np.arange(ds.n_records)
            exact = find_best_split_exact(samples, ds.features, field_, 0.001, min_gain=-np.inf)
            for eps in (0.5, 0.25, 0.1, 0.05, 0.01):
                q = find_best_split_quantile(samples, ds.features, field_, 0.001, eps,
                                             min_gain=-np.inf)
                if q is not None and exact is not None and q.gain > exact.gain + 1e-12:
                    above += 1
                for k in range(ds.n_features):
                    c = propose_candidates(ds.features[:, k], field_.hess, field_.at_risk, eps)
                    over_bound += len(c) > max_candidates(ds.n_periods, eps)
            tiny = find_best_split_quantile(samples, ds.features, field_, 0.001, 1e-9,
                                            min_gain=-np.inf)
            if (tiny is None) != (exact is None) or (
                    tiny is not None and (tiny.feature, tiny.threshold, tiny.gain)
                    != (exact.feature, exact.threshold, exact.gain)):
                unequal += 1
    ok = above == 0 and unequal == 0 and over_bound == 0 and t.elapsed < 10
    return record("quantile dominance and convergence", ok,
                  f"{above} gains above exact, {unequal} tiny-eps mismatches, "
                  f"{over_bound} candidate sets over J*ceil(1/eps)+2 (150 nodes x 5 eps)", t.elapsed)


def check_normalization():
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(1000):
        J = int(rng.integers(1, 49))
        if rng.random() < 0.5:
            h = rng.uniform(1e-6, 1 - 1e-6, size=J)
        else:
            h = 10 ** rng.uniform(-7, -0.01, size=J)
        total = sum(event_probability(h, j) for j in range(1, J + 1)) + survival_curve(h)[-1]
        worst = max(worst, abs(total - 1.0))
    return record("normalization", worst < 1e-12,
                  f"max |sum P + S_J - 1| = {worst:.1e} on 1000 vectors")


_CACHE = {}


def synthetic_run():
    if "model" not in _CACHE:
        train = make_survival_data(2000, 10, 12, seed=0)
        params = BoosterParams(num_trees=30, max_depth=6, learning_rate=0.1, reg_lambda=0.001,
                               subsample=1.0, seed=0)
        with Timer() as t:
            model = fit(train, params)
        _CACHE.update(train=train, model=model, elapsed=t.elapsed,
                      test=make_survival_data(2000, 10, 12, seed=1))
    return _CACHE


def check_convergence():
    run = synthetic_run()
    model = run["model"]
    trace = [model.initial_loss] + model.loss_trace
    rises = sum(b > a for a, b in zip(trace, trace[1:]))
    ratio = trace[-1] / trace[0]
    ok = rises == 0 and len(trace) == 31 and ratio < 0.6 and run["elapsed"] < 60
    return record("convergence", ok,
                  f"{rises} increases over 30 iterations, final/initial = {ratio:.3f}",
                  run["elapsed"])


def _permuted(ds, rng):
    p = rng.permutation(ds.n_records)
    return SurvivalDataset(ds.features, ds.event_period[p], ds.event[p], ds.grid, ds.feature_names)


def check_discrimination():
    run = synthetic_run()
    model, test = run["model"], run["test"]
    S = model.predict_survival_matrix(test.features)
    c_held = concordance_index(risk_score(S), test)

    rng = np.random.default_rng(106)
    p_train, p_test = _permuted(run["train"], rng), _permuted(test, rng)
    p_model = fit(p_train, model.params)
    c_perm = concordance_index(risk_score(p_model.predict_survival_matrix(p_test.features)), p_test)

    J = test.n_periods
    rates = decile_analysis(S[:, J - 1], test, J)
    inversions = int(np.sum(np.diff(rates) > 0))
    ok = c_held > 0.90 and 0.45 <= c_perm <= 0.55 and inversions <= 1
    return record("discrimination", ok,
                  f"held-out C = {c_held:.4f}, permuted C = {c_perm:.4f}, "
                  f"decile inversions at period {J} = {inversions} "
                  f"(rates {' '.join(f'{r:.3f}' for r in rates)})")


def check_km_baseline():
    ds = make_survival_data(500, 4, 12, seed=7)
    model = fit(ds, BoosterParams(num_trees=0))
    want = survival_curve(kaplan_meier_init(ds))
    S = model.predict_survival_matrix(ds.features)
    ok = bool(np.all(S == want[None, :]))
    return record("KM baseline", ok, "M=0 survival " + ("equals" if ok else "differs from")
                  + " the Kaplan-Meier curve bit for bit on 500 records")


def _naive_cindex(scores, ep, ev):
    num2 = den = 0
    for i in range(len(ep)):
        if ev[i] != 1:
            continue
        for k in range(len(ep)):
            if ep[i] < ep[k]:
                den += 1
                num2 += 2 if scores[i] > scores[k] else 1 if scores[i] == scores[k] else 0
    return 0.5 if den == 0 else num2 / (2 * den)


def check_cindex_oracle():
    rng = np.random.default_rng(108)
    mismatches = 0
    for _ in range(200):
        N = int(rng.integers(1, 201))
        J = int(rng.integers(1, 13))
        ep = rng.integers(1, J + 2, size=N)
        ev = rng.integers(0, 2, size=N)
        scores = rng.integers(0, 15, size=N) / 7.0
        mismatches += concordance_index(scores, (ep, ev)) != _naive_cindex(scores, ep, ev)
    return record("C-index oracle", mismatches == 0,
                  f"{mismatches} inexact results over 200 datasets with N <= 200")


def check_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        write_csv(make_survival_data(2000, 10, 12, seed=0), root / "train.csv", segments=3)
        (root / "run.toml").write_text(
            'seed = 5\n[data]\ntrain = "train.csv"\n'
            '[schema]\nid = "ignore"\nmonths = "time-label"\ndefault = "event-label"\n'
            "[grid]\nperiods = 12\n[booster]\nnum_trees = 10\n")
        codes = [cli_main(["train", "-c", str(root / "run.toml"), "--threads", str(n),
                           "--out", str(root / f"t{n}")]) for n in (1, 4)]
        files = [(root / f"t{n}" / "model.json").read_bytes() if c == 0 else b""
                 for n, c in zip((1, 4), codes)]
    ok = codes == [0, 0] and files[0] == files[1] and len(files[0]) > 0
    return record("determinism", ok,
                  f"model.json with --threads 1 and 4 {'identical' if ok else 'differ'} "
                  f"({len(files[0])} bytes)")


def check_lending_club():
    """External smoke: a preprocessed public lending-club CSV given by path.

    The file needs a ``months`` column (months observed until default or
    censoring), a 0/1 ``default`` column and optionally ``id``. Everything
    else is treated as a feature. Records are split 80/20 with a fixed seed.
    """
    path = os.environ.get(LENDING_CLUB_ENV)
    if not path:
        line = f"SKIP  lending-club smoke: set {LENDING_CLUB_ENV} to a prepared CSV to run"
        REPORT.append(line)
        print(line)
        return None
    from gbst.dataio import bind_labels, build_plan, load_table
    from gbst.survival import ObservationGrid

    schema = {"months": "time-label", "default": "event-label", "id": "ignore"}
    table = load_table(path, schema)
    ds = bind_labels(table, ObservationGrid.regular(24), build_plan(table))
    order = np.random.default_rng(0).permutation(ds.n_records)
    cut = int(0.8 * ds.n_records)
    train, test = ds.subset(np.sort(order[:cut])), ds.subset(np.sort(order[cut:]))
    model = fit(train, BoosterParams())
    c = concordance_index(risk_score(model.predict_survival_matrix(test.features)), test)
    return record("lending-club smoke", c >= 0.64, f"test C = {c:.4f} (target >= 0.64)")


CHECKS = [
    check_derivatives,
    check_leaf_optimality,
    check_exact_split,
    check_quantile,
    check_normalization,
    check_convergence,
    check_discrimination,
    check_km_baseline,
    check_cindex_oracle,
    check_determinism,
]


@pytest.mark.parametrize("check", CHECKS, ids=lambda c: c.__name__.removeprefix("check_"))
def test_criterion(check):
    assert check()


def test_lending_club_smoke():
    result = check_lending_club()
    if result is None:
        pytest.skip(f"{LENDING_CLUB_ENV} not set")
    assert result


if __name__ == "__main__":
    results = [check() for check in CHECKS]
    check_lending_club()
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
