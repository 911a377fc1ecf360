"""Univariate and bivariate Gaussian kernels used throughout the estimator.

All functions broadcast over numpy arrays. Ratios of the form
``pdf(x) / cdf(x)`` are evaluated in log space so that they stay finite deep
in either tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

__all__ = [
    "DegenerateObservationError",
    "ETA_GUARD",
    "std_pdf",
    "std_cdf",
    "bivariate_cdf",
    "signed_mills",
    "signed_mills_derivative",
    "TruncMoments",
    "trunc_moments",
    "interval_trunc_second_moment",
    "PairObservation",
    "pair_expectation",
    "pair_expectation_rho1",
    "observed_covariance",
]

ETA_GUARD = 37.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)
# above this |r| the integral is taken from the nearer endpoint r = +-1
_R_SWITCH = 0.925


class DegenerateObservationError(ValueError):
    """A conditioning event has (numerically) zero probability."""


def std_pdf(x):
    return np.exp(-0.5 * np.square(x) - _LOG_SQRT_2PI)


def std_cdf(x):
    return special.ndtr(x)


def _log_pdf(x):
    return -0.5 * np.square(x) - _LOG_SQRT_2PI


def _gl_integral(f, upper):
    """Gauss-Legendre integral of ``f`` from 0 to ``upper`` (elementwise, signed)."""
    half = 0.5 * upper[..., None]
    t = half * (_GL_NODES + 1.0)
    return (half * _GL_WEIGHTS * f(t)).sum(axis=-1)


def bivariate_cdf(h, k, r):
    """``P(Z1 <= h, Z2 <= k)`` for standard normals with correlation ``r``.

    Integrates the derivative of the CDF with respect to the correlation,
    ``d/dr Phi2(h, k; r) = phi2(h, k; r)``, after an angular substitution
    that removes the endpoint singularity. For ``|r| > 0.925`` the integral
    starts from ``r = +-1`` where the CDF is known in closed form.
    """
    h, k, r = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(r, dtype=float)
    )
    if np.any(np.abs(r) >= 1.0) or np.any(np.isnan(r)):
        raise ValueError("correlation must lie strictly inside (-1, 1)")
    scalar = h.ndim == 0
    h, k, r = (np.atleast_1d(a).astype(float).copy() for a in (h, k, r))
    out = np.empty_like(h)

    inf_h, inf_k = np.isinf(h), np.isinf(k)
    neg = (inf_h & (h < 0)) | (inf_k & (k < 0))
    out[neg] = 0.0
    only_k = inf_h & (h > 0) & ~neg
    out[only_k] = std_cdf(k[only_k])
    only_h = inf_k & (k > 0) & ~neg & ~only_k
    out[only_h] = std_cdf(h[only_h])
    fin = ~(inf_h | inf_k)

    hh, kk = h * h, k * k
    hk = h * k

    mid = fin & (np.abs(r) <= _R_SWITCH)
    if mid.any():
        a, b, c = hh[mid] + kk[mid], hk[mid], np.arcsin(r[mid])

        def f(t):
            s = np.sin(t)
            return np.exp(-(a[:, None] - 2.0 * b[:, None] * s) / (2.0 * np.cos(t) ** 2))

        integ = _gl_integral(f, c)
        out[mid] = std_cdf(h[mid]) * std_cdf(k[mid]) + integ / (2.0 * np.pi)

    hi = fin & (r > _R_SWITCH)
    if hi.any():
        a, b, c = hh[hi] + kk[hi], hk[hi], np.arccos(r[hi])

        def f(t):
            return np.exp(-(a[:, None] - 2.0 * b[:, None] * np.cos(t)) / (2.0 * np.sin(t) ** 2))

        out[hi] = std_cdf(np.minimum(h[hi], k[hi])) - _gl_integral(f, c) / (2.0 * np.pi)

    lo = fin & (r < -_R_SWITCH)
    if lo.any():
        a, b, c = hh[lo] + kk[lo], hk[lo], np.arccos(-r[lo])

        def f(t):
            return np.exp(-(a[:, None] + 2.0 * b[:, None] * np.cos(t)) / (2.0 * np.sin(t) ** 2))

        base = np.maximum(0.0, std_cdf(h[lo]) - std_cdf(-k[lo]))
        out[lo] = base + _gl_integral(f, c) / (2.0 * np.pi)

    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


def signed_mills(x, y):
    """Mean of ``e ~ N(0, 1)`` given ``y = 1[x + e > 0]``.

    Equals ``pdf(x) (y - cdf(x)) / (cdf(x) (1 - cdf(x)))``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    up = np.exp(_log_pdf(x) - special.log_ndtr(x))
    down = -np.exp(_log_pdf(x) - special.log_ndtr(-x))
    return np.where(y > 0.5, up, down)


def signed_mills_derivative(x, y):
    """Derivative of :func:`signed_mills` in ``x``: ``-m (x + m)``, in ``[-1, 0]``."""
    m = signed_mills(x, y)
    return np.clip(-m * (x + m), -1.0, 0.0)


class TruncMoments(NamedTuple):
    mean: np.ndarray
    second: np.ndarray
    clamped: bool


def trunc_moments(eta, y) -> TruncMoments:
    """First and second moments of ``e ~ N(0, 1)`` given ``y = 1[eta + e > 0]``."""
    eta = np.asarray(eta, dtype=float)
    clamped = bool(np.any(np.abs(eta) > ETA_GUARD))
    if clamped:
        eta = np.clip(eta, -ETA_GUARD, ETA_GUARD)
    mean = signed_mills(eta, y)
    return TruncMoments(mean, 1.0 - eta * mean, clamped)


def _mass(a, b):
    """``Phi(b) - Phi(a)`` computed on the tail where it does not cancel."""
    upper = a > 0
    return np.where(upper, std_cdf(-a) - std_cdf(-b), std_cdf(b) - std_cdf(a))


def interval_trunc_second_moment(a, b):
    """``E[e^2 | a < e < b]`` for ``e ~ N(0, 1)``; ``a`` or ``b`` may be infinite."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if np.any(a >= b):
        raise ValueError("interval must satisfy a < b")
    scalar = a.ndim == 0
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    out = np.ones_like(a)
    lo_open, hi_open = np.isneginf(a), np.isposinf(b)

    m = ~lo_open & hi_open
    if m.any():
        out[m] = 1.0 + a[m] * np.exp(_log_pdf(a[m]) - special.log_ndtr(-a[m]))
    m = lo_open & ~hi_open
    if m.any():
        out[m] = 1.0 - b[m] * np.exp(_log_pdf(b[m]) - special.log_ndtr(b[m]))
    m = ~lo_open & ~hi_open
    if m.any():
        mass = _mass(a[m], b[m])
        if np.any(mass < 1e-300):
            raise DegenerateObservationError("interval carries no probability mass")
        out[m] = 1.0 + (a[m] * std_pdf(a[m]) - b[m] * std_pdf(b[m])) / mass
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class PairObservation:
    """Two relations' linear predictors, outcomes and their latent correlation."""

    eta1: float
    eta2: float
    y1: int
    y2: int
    rho: float


def _unpack(obs_or_eta1, eta2, y1, y2, rho):
    if isinstance(obs_or_eta1, PairObservation):
        o = obs_or_eta1
        return o.eta1, o.eta2, o.y1, o.y2, o.rho
    return obs_or_eta1, eta2, y1, y2, rho


def pair_expectation(obs, eta2=None, y1=None, y2=None, rho=None):
    """``E[e1 e2 | y1, y2]`` for a pair of relations sharing one actor.

    Accepts either a :class:`PairObservation` or the five fields as
    broadcastable arrays. Outcomes are ``y_k = 1[eta_k + e_k > 0]`` with
    ``corr(e1, e2) = rho``.
    """
    eta1, eta2, y1, y2, rho = _unpack(obs, eta2, y1, y2, rho)
    eta1, eta2, y1, y2, rho = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (eta1, eta2, y1, y2, rho))
    )
    if np.any(np.abs(rho) > 1.0):
        raise ValueError("correlation must lie in [-1, 1]")
    scalar = eta1.ndim == 0
    eta1, eta2, y1, y2, rho = (np.atleast_1d(v) for v in (eta1, eta2, y1, y2, rho))
    out = np.empty_like(eta1)

    zero = rho == 0.0
    if zero.any():
        out[zero] = signed_mills(eta1[zero], y1[zero]) * signed_mills(eta2[zero], y2[zero])
    one = rho == 1.0
    if one.any():
        out[one] = pair_expectation_rho1(eta1[one], eta2[one], y1[one], y2[one])
    gen = ~zero & ~one
    if np.any(gen & (rho == -1.0)):
        raise ValueError("rho = -1 is not supported")
    if gen.any():
        e1, e2, r = eta1[gen], eta2[gen], rho[gen]
        s1, s2 = 2.0 * y1[gen] - 1.0, 2.0 * y2[gen] - 1.0
        eb1, eb2, rb = s1 * e1, s2 * e2, s1 * s2 * r
        L = bivariate_cdf(eb1, eb2, rb)
        if np.any(L < 1e-300):
            raise DegenerateObservationError("orthant probability underflows")
        q = np.sqrt(1.0 - r * r)
        t1 = eb1 * std_pdf(e1) * std_cdf((eb2 - rb * eb1) / q) / L
        t2 = eb2 * std_pdf(e2) * std_cdf((eb1 - rb * eb2) / q) / L
        quad = (e1 * e1 + e2 * e2 - 2.0 * r * e1 * e2) / (1.0 - r * r)
        # the sign factor makes the rho -> 0 limit the product of truncated means
        tail = s1 * s2 * q / math.sqrt(2.0 * math.pi) * std_pdf(np.sqrt(quad)) / L
        out[gen] = r * (1.0 - t1 - t2) + tail
    return float(out[0]) if scalar else out


def pair_expectation_rho1(obs, eta2=None, y1=None, y2=None, rho=None):
    """Piecewise stand-in for ``E[e1 e2 | y1, y2]`` when the two errors coincide.

    Each outcome confines the common error to a half line
    ``U_k = {u : (2 y_k - 1)(u + eta_k) > 0}``. Matching outcomes use the
    tighter half line; mismatched outcomes use the overlap of the two half
    lines, or when it is empty the mass-weighted sum of both one-sided
    second moments.
    """
    eta1, eta2, y1, y2, _ = _unpack(obs, eta2, y1, y2, rho)
    eta1, eta2, y1, y2 = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (eta1, eta2, y1, y2))
    )
    scalar = eta1.ndim == 0
    eta1, eta2, y1, y2 = (np.atleast_1d(v) for v in (eta1, eta2, y1, y2))
    c1, c2 = -eta1, -eta2
    up1, up2 = y1 > 0.5, y2 > 0.5
    out = np.empty_like(eta1)
    inf = np.full_like(eta1, np.inf)

    both1 = up1 & up2
    if both1.any():
        out[both1] = interval_trunc_second_moment(np.maximum(c1, c2)[both1], inf[both1])
    both0 = ~up1 & ~up2
    if both0.any():
        out[both0] = interval_trunc_second_moment(-inf[both0], np.minimum(c1, c2)[both0])

    mixed = up1 != up2
    if mixed.any():
        # lower cut from the y = 1 relation, upper cut from the y = 0 relation
        lower = np.where(up1, c1, c2)[mixed]
        upper = np.where(up1, c2, c1)[mixed]
        res = np.empty_like(lower)
        overlap = lower < upper
        if overlap.any():
            res[overlap] = interval_trunc_second_moment(lower[overlap], upper[overlap])
        gap = ~overlap
        if gap.any():
            a, b = lower[gap], upper[gap]
            # E[e^2 | e > a] P(e > a) + E[e^2 | e < b] P(e < b)
            res[gap] = (std_cdf(-a) + a * std_pdf(a)) + (std_cdf(b) - b * std_pdf(b))
        out[mixed] = res
    return float(out[0]) if scalar else out


def observed_covariance(mu1, mu2, rho):
    """``cov(y1, y2)`` for ``y_k = 1[mu_k + e_k > 0]`` with ``corr(e1, e2) = rho``."""
    return bivariate_cdf(mu1, mu2, rho) - std_cdf(mu1) * std_cdf(mu2)
