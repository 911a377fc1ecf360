"""K-fold cross-validation over relations with PRAUC and ROC AUC."""

from __future__ import annotations

import copy
import csv
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .bcem import BcemConfig, fit
from .netdata import NetworkData
from .predict import predict_independent, predict_marginal
from .probit0 import fit_independent
from .relindex import pair_arrays

__all__ = ["CvReport", "kfold_split", "roc_auc", "prauc", "cv_run", "ESTIMATORS"]

ESTIMATORS = ("bcem", "probit0")


def kfold_split(n_relations: int, k: int, rng) -> np.ndarray:
    """Fold label in ``0..k-1`` for each relation; fold sizes differ by at most one."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n_relations:
        raise ValueError(f"k={k} exceeds the number of relations ({n_relations})")
    rng = np.random.default_rng(rng)
    folds = np.arange(n_relations) % k
    return rng.permutation(folds)


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D of equal length")
    if y.all() or not y.any():
        raise ValueError("both classes must be present")
    return s, y


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate with midranks for ties."""
    s, y = _check_binary(scores, labels)
    r = rankdata(s)
    n1 = int(y.sum())
    n0 = y.size - n1
    return float((r[y].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def prauc(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Thresholds run over distinct scores in decreasing order; tied scores
    enter together. Each recall increment is weighted by the precision at
    that threshold.
    """
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    seen = last + 1
    precision = tp / seen
    recall = tp / y.sum()
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class CvReport:
    """Out-of-sample metrics per estimator plus the fold assignment."""

    k: int
    seed: int
    n: int
    metrics: dict
    folds: list
    scores: dict = field(repr=False)
    fold_assignment: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "n": self.n,
            "metrics": copy.deepcopy(self.metrics),
            "folds": copy.deepcopy(self.folds),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def write_scores_csv(self, path, actor_ids=None) -> None:
        I, J = pair_arrays(self.n)
        ids = list(range(self.n)) if actor_ids is None else list(actor_ids)
        ests = sorted(self.scores)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "fold", "y", *ests])
            for d in range(len(self.labels)):
                row = [ids[I[d]], ids[J[d]], int(self.fold_assignment[d]), int(self.labels[d])]
                row += ["" if np.isnan(self.scores[e][d]) else "%.17g" % self.scores[e][d] for e in ests]
                w.writerow(row)


def _run_fold(args):
    data, est, idx, cfg = args
    t0 = time.perf_counter()
    try:
        held = data.with_missing(idx)
        targets = np.asarray(idx, dtype=np.int64)
        if est == "probit0":
            beta = fit_independent(held.X, held.y, held.missing).beta
            p = predict_independent(beta, held, targets).p_hat
        else:
            f = fit(held, cfg)
            p = predict_marginal(f, held, targets, cfg).p_hat
        err = None
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        p, err = None, f"{type(e).__name__}: {e}"
    return p, err, time.perf_counter() - t0


def cv_run(
    data: NetworkData,
    estimators=ESTIMATORS,
    k: int = 10,
    seed: int = 0,
    config: BcemConfig | None = None,
    threads: int = 1,
) -> CvReport:
    """Hold out each fold in turn, refit, and score the held-out relations.

    Relations already missing in ``data`` stay missing in every fit and are
    excluded from the metrics.
    """
    bad = set(estimators) - set(ESTIMATORS)
    if bad or not estimators:
        raise ValueError(f"estimators must be a non-empty subset of {ESTIMATORS}")
    config = config or BcemConfig()
    folds = kfold_split(data.n_rel, k, seed)
    observed = data.observed
    tasks, keys = [], []
    for est in estimators:
        for f in range(k):
            idx = np.flatnonzero((folds == f) & observed)
            tasks.append((data, est, idx, config))
            keys.append((est, f, idx))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]

    scores = {e: np.full(data.n_rel, np.nan) for e in estimators}
    fold_rows = []
    for (est, f, idx), (p, err, secs) in zip(keys, results):
        if p is not None:
            scores[est][idx] = p
        fold_rows.append({"estimator": est, "fold": f, "size": int(idx.size), "seconds": secs, "error": err})

    labels = data.y.astype(np.int8)
    metrics = {}
    for est in estimators:
        ok = observed & ~np.isnan(scores[est])
        rows = [r for r in fold_rows if r["estimator"] == est]
        failed = [r["fold"] for r in rows if r["error"] is not None]
        if failed:
            warnings.warn(f"{est}: {len(failed)} fold(s) failed; metrics use the remaining folds", RuntimeWarning)
        entry = {
            "prauc": None,
            "roc_auc": None,
            "mean_fold_seconds": float(np.mean([r["seconds"] for r in rows])),
            "failed_folds": failed,
        }
        if ok.any():
            try:
                entry["prauc"] = prauc(scores[est][ok], labels[ok])
                entry["roc_auc"] = roc_auc(scores[est][ok], labels[ok])
            except ValueError:
                pass
        metrics[est] = entry
    return CvReport(k, int(seed), data.n, metrics, fold_rows, scores, folds, labels)
