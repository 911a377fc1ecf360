"""Marginal prediction of held-out relations under a fitted PX model."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bcem import BcemConfig, PxFit, beta_estep
from .netdata import NetworkData
from .normal import std_cdf
from .relindex import pair_arrays

__all__ = ["PredictionResult", "mode_value", "predict_marginal", "predict_independent"]


@dataclass(frozen=True)
class PredictionResult:
    index: np.ndarray
    p_hat: np.ndarray
    imputed: int

    def write_csv(self, path, n: int, actor_ids=None) -> None:
        I, J = pair_arrays(n)
        ids = list(range(n)) if actor_ids is None else list(actor_ids)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "p_hat"])
            for d, p in zip(self.index, self.p_hat):
                w.writerow([ids[I[d]], ids[J[d]], "%.17g" % p])


def mode_value(y_observed) -> int:
    """Majority value of a binary vector; an exact tie gives 1."""
    y_observed = np.asarray(y_observed, dtype=float)
    if y_observed.size == 0:
        raise ValueError("no observed responses")
    return int(y_observed.mean() >= 0.5)


def predict_marginal(
    fit: PxFit,
    data: NetworkData,
    targets=None,
    config: BcemConfig | None = None,
) -> PredictionResult:
    """``P(y_jk = 1 | y_-jk)`` for every target relation.

    Targets (default: all missing relations) and any other missing
    relations are set to the observed mode; one solve for ``w = E[eps | y]``
    then serves all targets. The plug-in uses the conditional mean of each
    error given all others, ``(B w)_jk``, with conditional sd ``sigma_n``.
    """
    miss = data.missing.copy()
    if targets is None:
        targets = np.flatnonzero(miss)
    targets = np.asarray(targets, dtype=np.int64)
    miss[targets] = True
    obs = ~miss
    if not obs.any():
        raise ValueError("every relation is held out")
    y = data.y.astype(float)
    ystar = mode_value(y[obs])
    y[miss] = ystar

    beta = np.asarray(fit.beta, dtype=float)
    st = beta_estep(beta, float(fit.rho), data.X, y, config)
    m = st.conditional_mean(data.n)
    eta = data.X[targets] @ beta
    p = std_cdf((m[targets] + eta) / np.sqrt(st.sigma2))
    return PredictionResult(targets, np.clip(p, 0.0, 1.0), ystar)


def predict_independent(beta, data: NetworkData, targets) -> PredictionResult:
    targets = np.asarray(targets, dtype=np.int64)
    p = std_cdf(data.X[targets] @ np.asarray(beta, dtype=float))
    return PredictionResult(targets, p, -1)
