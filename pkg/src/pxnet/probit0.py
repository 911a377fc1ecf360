"""Probit regression that treats every relation as independent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .normal import signed_mills

__all__ = ["SeparationError", "ProbitFit", "probit_loglik", "is_separated", "fit_independent"]


class SeparationError(ArithmeticError):
    """The likelihood has no finite maximiser (perfect or quasi separation)."""


@dataclass(frozen=True)
class ProbitFit:
    beta: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float


def probit_loglik(beta, X, y) -> float:
    eta = X @ np.asarray(beta, dtype=float)
    s = 2.0 * np.asarray(y, dtype=float) - 1.0
    return float(special.log_ndtr(s * eta).sum())


def is_separated(X, y) -> bool:
    """True when some ``b != 0`` has ``(2y - 1) x'b >= 0`` on every row.

    That is exactly the condition (complete or quasi-complete separation)
    under which a full-rank probit likelihood has no finite maximiser. It is
    decided by a feasibility linear program normalised by ``sum (2y-1) x'b = 1``.
    """
    A = (2.0 * np.asarray(y, dtype=float) - 1.0)[:, None] * np.asarray(X, dtype=float)
    p = A.shape[1]
    res = optimize.linprog(
        np.zeros(p),
        A_ub=-A,
        b_ub=np.zeros(A.shape[0]),
        A_eq=A.sum(axis=0)[None, :],
        b_eq=[1.0],
        bounds=[(None, None)] * p,
        method="highs",
    )
    return res.status == 0


def _grad_hess(beta, X, y):
    eta = X @ beta
    lam = signed_mills(eta, y)
    g = X.T @ lam
    # d lam / d eta = -lam (eta + lam), always in (-1, 0)
    wts = lam * (eta + lam)
    H = -(X * wts[:, None]).T @ X
    return g, H


def fit_independent(
    X,
    y,
    mask=None,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
    beta0=None,
) -> ProbitFit:
    """Maximum-likelihood probit fit over the observed rows.

    ``mask`` flags rows to exclude (missing responses). Newton steps are
    halved until the log-likelihood does not decrease.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if mask is not None:
        keep = ~np.asarray(mask, bool)
        X, y = X[keep], y[keep]
    if X.shape[0] == 0:
        raise ValueError("no observed rows")
    if np.all(y == y[0]):
        raise SeparationError("all observed responses are equal")
    p = X.shape[1]
    if np.linalg.matrix_rank(X) < p:
        raise np.linalg.LinAlgError("design matrix is rank deficient on observed rows")
    if is_separated(X, y):
        raise SeparationError("responses are separated by the covariates")

    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    ll = probit_loglik(beta, X, y)
    converged = False
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g, H = _grad_hess(beta, X, y)
        gnorm = float(np.max(np.abs(g)))
        if gnorm < tol:
            converged = True
            it -= 1
            break
        try:
            step = np.linalg.solve(H - 1e-10 * np.eye(p), -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H - 1e-10 * np.eye(p), -g, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            ll_c = probit_loglik(cand, X, y)
            if ll_c >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta, ll = cand, ll_c
        if np.linalg.norm(beta) > 1e3:
            raise SeparationError(f"coefficients diverge (|beta| = {np.linalg.norm(beta):.3g})")
    else:
        g, _ = _grad_hess(beta, X, y)
        gnorm = float(np.max(np.abs(g)))
        converged = gnorm < tol
    return ProbitFit(beta, ll, it, converged, gnorm)
