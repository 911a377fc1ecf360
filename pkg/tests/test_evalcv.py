import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import average_precision_score, roc_auc_score

from pxnet.evalcv import cv_run, kfold_split, prauc, roc_auc
from pxnet.netdata import NetworkData
from pxnet.simgen import simulate_dataset


def test_kfold_examples():
    f = kfold_split(10, 5, 0)
    assert np.bincount(f).tolist() == [2] * 5
    np.testing.assert_array_equal(kfold_split(10, 5, 7), kfold_split(10, 5, 7))
    f = kfold_split(23, 4, 1)
    sizes = np.bincount(f)
    assert sizes.sum() == 23 and sizes.max() - sizes.min() <= 1
    with pytest.raises(ValueError):
        kfold_split(3, 5, 0)
    with pytest.raises(ValueError):
        kfold_split(10, 1, 0)


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0]) == pytest.approx(0.75)
    assert roc_auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert prauc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    rng = np.random.default_rng(0)
    assert roc_auc(rng.random(20000), rng.integers(0, 2, 20000)) == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValueError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        prauc([0.1, 0.2], [0, 0])


def test_prauc_constant_scores_is_prevalence():
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1])
    assert prauc(np.full(8, 0.3), y) == pytest.approx(y.mean())


scores_labels = st.integers(4, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 6).map(lambda v: v / 6), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


@settings(max_examples=200, deadline=None)
@given(scores_labels)
def test_metrics_match_sklearn(sl):
    s, y = np.array(sl[0]), np.array(sl[1])
    assert roc_auc(s, y) == pytest.approx(roc_auc_score(y, s), abs=1e-12)
    # average precision is the step-wise area with ties grouped
    assert prauc(s, y) == pytest.approx(average_precision_score(y, s), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(scores_labels)
def test_roc_auc_monotone_invariant(sl):
    s, y = np.array(sl[0]), np.array(sl[1])
    assert roc_auc(np.exp(3 * s) - 2, y) == pytest.approx(roc_auc(s, y), abs=1e-12)


def test_cv_every_dyad_scored_once():
    data, *_ = simulate_dataset("px", 20, 2)
    rep = cv_run(data, ("probit0", "bcem"), k=5, seed=1)
    for e in ("probit0", "bcem"):
        assert not np.isnan(rep.scores[e]).any()
        m = rep.metrics[e]
        assert 0 <= m["prauc"] <= 1 and 0 <= m["roc_auc"] <= 1 and m["failed_folds"] == []
    assert sorted(np.bincount(rep.fold_assignment).tolist()) == [38] * 5
    assert rep.to_dict()["k"] == 5


def test_cv_deterministic(tmp_path):
    data, *_ = simulate_dataset("px", 15, 3)
    a = cv_run(data, ("bcem",), k=3, seed=9)
    b = cv_run(data, ("bcem",), k=3, seed=9)
    np.testing.assert_array_equal(a.scores["bcem"], b.scores["bcem"])
    a.write_scores_csv(tmp_path / "a.csv")
    b.write_scores_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_cv_records_fold_failure():
    # a covariate seen only in one relation separates whenever that relation is held in
    n = 6
    N = 15
    x = np.zeros(N)
    x[0] = 1.0
    y = np.array([1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0])
    data = NetworkData(n, y, np.column_stack([np.ones(N), x]), ("intercept", "x"))
    with pytest.warns(RuntimeWarning):
        rep = cv_run(data, ("probit0",), k=3, seed=0)
    assert len(rep.metrics["probit0"]["failed_folds"]) >= 1


def test_cv_rho0_bcem_close_to_probit0():
    diffs = []
    for s in range(3):
        data, *_ = simulate_dataset("px", 25, 50 + s, rho=0.0)
        rep = cv_run(data, ("bcem", "probit0"), k=5, seed=s)
        diffs.append(rep.metrics["bcem"]["prauc"] - rep.metrics["probit0"]["prauc"])
    assert abs(np.mean(diffs)) < 0.02


@pytest.mark.slow
def test_cv_correlated_bcem_beats_probit0():
    gains = []
    for s in range(10):
        data, *_ = simulate_dataset("px", 60, 200 + s, rho=0.25)
        rep = cv_run(data, ("bcem", "probit0"), k=10, seed=s)
        gains.append(rep.metrics["bcem"]["prauc"] - rep.metrics["probit0"]["prauc"])
    assert np.mean(gains) >= 0
