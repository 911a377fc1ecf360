"""Algebra of undirected exchangeable network covariance matrices.

Any matrix of the form ``c1*S1 + c2*S2 + c3*S3`` over the dyads of an
``n``-actor network, where ``S1`` is the identity, ``S2`` flags dyad pairs
sharing one actor and ``S3`` flags disjoint dyad pairs, is stored as its
three coefficients. Products, inverses and eigenvalues of such matrices stay
in the same three-dimensional family, so everything here is O(1) in the
coefficients or O(n^2) when acting on a dyad vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .relindex import n_relations, pair_arrays

__all__ = [
    "NotPositiveDefiniteError",
    "ExchCovParams",
    "PrecisionParams",
    "RHO_MAX",
    "s_apply",
    "quad_forms",
    "build_C",
    "coef_matrices",
    "solve_coefficients",
    "invert_params",
    "phi_partials",
    "eigenvalues",
    "is_positive_definite",
    "dense_matrix",
]

# PX correlation is kept strictly inside [0, 1/2)
RHO_MAX = 0.5 - 1e-6


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ExchCovParams:
    """Variance, shared-actor covariance and disjoint covariance."""

    phi1: float
    phi2: float
    phi3: float = 0.0

    @classmethod
    def px(cls, rho: float) -> "ExchCovParams":
        return cls(1.0, float(rho), 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2, self.phi3])


@dataclass(frozen=True)
class PrecisionParams:
    """Coefficients of the inverse, ``Omega^{-1} = p1 S1 + p2 S2 + p3 S3``."""

    p1: float
    p2: float
    p3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])


def _coeffs(c) -> np.ndarray:
    if isinstance(c, (ExchCovParams, PrecisionParams)):
        return c.as_array()
    c = np.asarray(c, dtype=float)
    if c.shape != (3,):
        raise ValueError("expected three coefficients")
    return c


def _s2_apply(v: np.ndarray, n: int) -> np.ndarray:
    I, J = pair_arrays(n)
    # r[a] = sum of v over dyads touching actor a
    r = np.bincount(I, weights=v, minlength=n) + np.bincount(J, weights=v, minlength=n)
    return r[I] + r[J] - 2.0 * v


def s_apply(coeffs, v: np.ndarray, n: int) -> np.ndarray:
    """Return ``(c1 S1 + c2 S2 + c3 S3) v`` without forming the matrix."""
    c = _coeffs(coeffs)
    v = np.asarray(v, dtype=float)
    if v.ndim == 2:
        return np.column_stack([s_apply(c, v[:, k], n) for k in range(v.shape[1])])
    if v.shape != (n_relations(n),):
        raise ValueError(f"vector of length {v.shape} does not match n={n}")
    s2v = _s2_apply(v, n)
    out = c[0] * v + c[1] * s2v
    if c[2] != 0.0:
        out = out + c[2] * (v.sum() - v - s2v)
    return out


def quad_forms(v: np.ndarray, n: int) -> tuple[float, float, float]:
    """``(v' S1 v, v' S2 v, v' S3 v)`` in O(n^2)."""
    v = np.asarray(v, dtype=float)
    q1 = float(v @ v)
    q2 = float(v @ _s2_apply(v, n))
    q3 = float(v.sum() ** 2 - q1 - q2)
    return q1, q2, q3


def build_C(phi, n: int) -> np.ndarray:
    """The 3x3 matrix ``C(phi)`` with ``C(phi) p = e1`` when ``p`` inverts ``phi``."""
    if n < 4:
        raise ValueError("need at least four actors")
    f1, f2, f3 = _coeffs(phi)
    h = 0.5 * (n - 2) * (n - 3)
    return np.array(
        [
            [f1, 2 * (n - 2) * f2, h * f3],
            [f2, f1 + (n - 2) * f2 + (n - 3) * f3, (n - 3) * f2 + (h - n + 3) * f3],
            [f3, 4 * f2 + (2 * n - 8) * f3, f1 + (2 * n - 8) * f2 + (h - 2 * n + 7) * f3],
        ]
    )


def coef_matrices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``A_j`` such that ``C(c) = sum_j c_j A_j`` (C is linear in its argument)."""
    return tuple(build_C(e, n) for e in np.eye(3))


def solve_coefficients(coeffs, n: int) -> np.ndarray:
    """Coefficients of the inverse of any nonsingular member of the family.

    Unlike :func:`invert_params` this makes no definiteness check, so it also
    serves the indefinite operators met inside the Newton solver.
    """
    C = build_C(coeffs, n)
    try:
        p = np.linalg.solve(C, np.array([1.0, 0.0, 0.0]))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"exchangeable matrix is singular: {exc}") from None
    if not np.all(np.isfinite(p)):
        raise np.linalg.LinAlgError("exchangeable matrix is numerically singular")
    return p


def invert_params(phi, n: int) -> PrecisionParams:
    if not is_positive_definite(phi, n):
        raise NotPositiveDefiniteError(f"covariance {tuple(_coeffs(phi))} is not positive definite at n={n}")
    try:
        p = solve_coefficients(phi, n)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None
    return PrecisionParams(*p)


def phi_partials(p, n: int) -> np.ndarray:
    """Matrix ``G`` with ``G[i, j] = d phi_i / d p_j``.

    Uses ``C(p) phi = e1``; differentiating gives
    ``d phi / d p_j = -C(p)^{-1} A_j C(p)^{-1} e1``.
    """
    C = build_C(p, n)
    try:
        phi = np.linalg.solve(C, np.array([1.0, 0.0, 0.0]))
        G = np.column_stack([-np.linalg.solve(C, A @ phi) for A in coef_matrices(n)])
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"C(p) is singular: {exc}") from None
    return G


def eigenvalues(phi, n: int) -> list[tuple[float, int]]:
    """Distinct eigenvalues with multiplicities ``1, n-1, n(n-3)/2``."""
    if n < 4:
        raise ValueError("need at least four actors")
    f1, f2, f3 = _coeffs(phi)
    lam1 = f1 + 2 * (n - 2) * f2 + 0.5 * (n - 2) * (n - 3) * f3
    lam2 = f1 + (n - 4) * f2 - (n - 3) * f3
    lam3 = f1 - 2 * f2 + f3
    return [(lam1, 1), (lam2, n - 1), (lam3, n * (n - 3) // 2)]


def is_positive_definite(phi, n: int) -> bool:
    return all(v > 0 for v, _ in eigenvalues(phi, n))


def dense_matrix(coeffs, n: int) -> np.ndarray:
    """Dense ``c1 S1 + c2 S2 + c3 S3``; for checks and small oracles only."""
    if n > 64:
        raise ValueError("dense construction is limited to n <= 64")
    c = _coeffs(coeffs)
    I, J = pair_arrays(n)
    shared = (
        (I[:, None] == I[None, :]).astype(int)
        + (I[:, None] == J[None, :])
        + (J[:, None] == I[None, :])
        + (J[:, None] == J[None, :])
    )
    N = len(I)
    S1 = np.eye(N)
    S2 = (shared == 1).astype(float)
    S3 = (shared == 0).astype(float)
    return c[0] * S1 + c[1] * S2 + c[2] * S3

