"""Block-coordinate EM estimation of the probit exchangeable (PX) model.

The latent errors have covariance ``Omega(rho) = S1 + rho S2``. Estimation
alternates an EM loop for the coefficients, whose E-step solves a nonlinear
fixed-point equation for ``E[eps | y]`` by Newton's method, with an EM loop
for ``rho`` whose M-step enforces unit variance and zero disjoint covariance
through Lagrange multipliers.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import excov
from .excov import RHO_MAX, ExchCovParams
from .netdata import NetworkData, check_full_rank
from .normal import pair_expectation_rho1, signed_mills, signed_mills_derivative, trunc_moments
from .probit0 import fit_independent
from .relindex import n_relations, sample_theta2, theta2_population, theta_counts

__all__ = [
    "EstimationError",
    "BcemConfig",
    "BetaEStepState",
    "GammaStats",
    "RhoMStepResult",
    "PxFit",
    "estep_operators",
    "g_residual",
    "g_jacobian_dense",
    "neumann_solve",
    "rho_init",
    "beta_estep",
    "beta_mstep",
    "gamma_compute",
    "rho_mstep",
    "fit",
]

_DENSE_MAX_N = 64


class EstimationError(ArithmeticError):
    """A numerical step of the estimator failed."""


@dataclass(frozen=True)
class BcemConfig:
    """Tolerances, iteration caps and sampling sizes for :func:`fit`.

    ``noise_aware`` widens the inner rho stopping threshold to twice the
    Monte Carlo standard error of the subsampled shared-actor average, since
    a fresh subsample is drawn on every inner iteration.
    """

    tol: float = 1e-4
    tol_beta: float = 1e-5
    tol_rho: float = 1e-5
    tol_w: float = 1e-6
    max_outer: int = 100
    max_beta_inner: int = 100
    max_rho_inner: int = 50
    max_rho_mstep: int = 100
    max_newton: int = 100
    theta2_factor: float = 10.0
    init_factor: float = 2.0
    prior_weight: float = 100.0
    newton_mode: str = "neumann"
    noise_aware: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("tol", "tol_beta", "tol_rho", "tol_w", "theta2_factor", "init_factor", "prior_weight"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer", "max_beta_inner", "max_rho_inner", "max_rho_mstep", "max_newton"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.newton_mode not in ("neumann", "dense"):
            raise ValueError("newton_mode must be 'neumann' or 'dense'")

    def theta2_size(self, n: int) -> int:
        return max(1, int(round(self.theta2_factor * n * (n - 1))))

    def init_size(self, n: int) -> int:
        return max(1, int(round(self.init_factor * n * n)))


@dataclass
class BetaEStepState:
    w: np.ndarray
    sigma2: float
    B: np.ndarray  # coefficients of B on (S1, S2, S3)
    D: np.ndarray
    delta: float
    iterations: int
    residual: float
    converged: bool
    mode: str

    @property
    def M(self) -> np.ndarray:
        return self.D - self.delta

    def conditional_mean(self, n: int) -> np.ndarray:
        """``B w``: the regression of each error on all the others, in expectation."""
        return excov.s_apply(self.B, self.w, n)


@dataclass(frozen=True)
class GammaStats:
    gamma1: float
    gamma2: float
    gamma3: float
    a2: float
    b2: float
    c2: float
    rho: float
    gamma2_se: float = 0.0
    n_pairs: int = 0
    lambda1: float = 0.0
    lambda3: float = 0.0


@dataclass(frozen=True)
class RhoMStepResult:
    rho: float
    gamma: GammaStats
    iterations: int
    converged: bool
    clamped: bool


@dataclass
class PxFit:
    beta: np.ndarray
    rho: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)
    seed: int = 0
    runtime_seconds: float = 0.0
    beta_init: np.ndarray | None = None
    rho_init: float | None = None
    columns: tuple = ()
    rho_clamped: bool = False

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "rho": float(self.rho),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "trace": self.trace,
            "seed": int(self.seed),
            "runtime_seconds": float(self.runtime_seconds),
            "beta_init": None if self.beta_init is None else [float(b) for b in self.beta_init],
            "rho_init": None if self.rho_init is None else float(self.rho_init),
            "columns": list(self.columns),
            "rho_clamped": bool(self.rho_clamped),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "PxFit":
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            rho=float(d["rho"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            trace=list(d.get("trace", [])),
            seed=int(d.get("seed", 0)),
            runtime_seconds=float(d.get("runtime_seconds", 0.0)),
            beta_init=None if d.get("beta_init") is None else np.asarray(d["beta_init"], dtype=float),
            rho_init=d.get("rho_init"),
            columns=tuple(d.get("columns", ())),
            rho_clamped=bool(d.get("rho_clamped", False)),
        )

    @classmethod
    def from_json(cls, s: str) -> "PxFit":
        return cls.from_dict(json.loads(s))


# ----------------------------------------------------------------------------
# beta block


def estep_operators(rho: float, n: int) -> tuple[float, np.ndarray]:
    """``sigma_n^2`` and the coefficients of ``B = -sigma_n^2 (p2 S2 + p3 S3)``."""
    p = excov.invert_params(ExchCovParams.px(rho), n).as_array()
    sigma2 = 1.0 / p[0]
    return sigma2, np.array([0.0, -sigma2 * p[1], -sigma2 * p[2]])


def _wtilde(w, eta, Bc, sigma, n):
    return (excov.s_apply(Bc, w, n) + eta) / sigma


def g_residual(w, eta, y, Bc, sigma2, n) -> np.ndarray:
    """``g(w) = (B - I) w + sigma_n v(w~)`` with ``w~ = (B w + eta) / sigma_n``."""
    sigma = np.sqrt(sigma2)
    Bw = excov.s_apply(Bc, w, n)
    return Bw - w + sigma * signed_mills((Bw + eta) / sigma, y)


def g_jacobian_dense(w, eta, y, Bc, sigma2, n) -> np.ndarray:
    """Dense ``B - I + D B`` with ``D = diag(v'(w~))``; small ``n`` only."""
    sigma = np.sqrt(sigma2)
    D = signed_mills_derivative(_wtilde(w, eta, Bc, sigma, n), y)
    B = excov.dense_matrix(Bc, n)
    return B - np.eye(len(w)) + D[:, None] * B


def neumann_solve(Bc, D, b, n) -> tuple[np.ndarray, float]:
    """Approximate ``(B - I + D B)^{-1} b`` by a two-term Neumann expansion.

    Centring ``D`` at ``delta`` gives ``J = A + M B`` with exchangeable
    ``A = (1 + delta) B - I`` and diagonal ``M = D - delta I``, so
    ``J^{-1} ~ A^{-1} - A^{-1} M B A^{-1}``. Returns the solution and delta.
    """
    delta = 0.5 * (float(D.min()) + float(D.max()))
    Ac = (1.0 + delta) * np.asarray(Bc) - np.array([1.0, 0.0, 0.0])
    Ainv = excov.solve_coefficients(Ac, n)
    x0 = excov.s_apply(Ainv, b, n)
    corr = excov.s_apply(Ainv, (D - delta) * excov.s_apply(Bc, x0, n), n)
    return x0 - corr, delta


def beta_estep(
    beta,
    rho: float,
    X,
    y,
    config: BcemConfig | None = None,
    *,
    w_init=None,
    mode: str | None = None,
) -> BetaEStepState:
    """Approximate ``E[eps | y]`` by Newton iteration on ``g(w) = 0``.

    Starts from the independent-case truncated means unless ``w_init`` is
    given. After five consecutive residual increases the step is damped by
    halving; if damping stalls the solver falls back to dense Newton when
    ``n <= 64`` and raises otherwise.
    """
    cfg = config or BcemConfig()
    mode = mode or cfg.newton_mode
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    N = len(y)
    n = int(round((1 + np.sqrt(1 + 8 * N)) / 2))
    if n_relations(n) != N:
        raise ValueError("y length is not a dyad count")
    if not 0.0 <= rho <= RHO_MAX:
        raise ValueError(f"rho must lie in [0, {RHO_MAX}]")
    if mode == "dense" and n > _DENSE_MAX_N:
        raise ValueError("dense mode needs n <= 64")
    eta = X @ np.asarray(beta, dtype=float)
    sigma2, Bc = estep_operators(rho, n)
    sigma = np.sqrt(sigma2)

    w = signed_mills(eta, y) if w_init is None else np.array(w_init, dtype=float)
    g = g_residual(w, eta, y, Bc, sigma2, n)
    res = float(np.max(np.abs(g)))
    grow = 0
    damped = False
    converged = False
    delta = 0.0
    D = np.zeros(N)
    it = 0
    for it in range(1, cfg.max_newton + 1):
        D = signed_mills_derivative(_wtilde(w, eta, Bc, sigma, n), y)
        if mode == "dense":
            J = g_jacobian_dense(w, eta, y, Bc, sigma2, n)
            step = np.linalg.solve(J, g)
            delta = 0.5 * (float(D.min()) + float(D.max()))
        else:
            step, delta = neumann_solve(Bc, D, g, n)
        t = 1.0
        w_new = w - step
        g_new = g_residual(w_new, eta, y, Bc, sigma2, n)
        res_new = float(np.max(np.abs(g_new)))
        if damped:
            while res_new > res and t > 1e-8:
                t *= 0.5
                w_new = w - t * step
                g_new = g_residual(w_new, eta, y, Bc, sigma2, n)
                res_new = float(np.max(np.abs(g_new)))
            if res_new > res:
                if mode != "dense" and n <= _DENSE_MAX_N:
                    return beta_estep(beta, rho, X, y, cfg, w_init=w, mode="dense")
                raise EstimationError(f"Newton solve for E[eps|y] stalled at rho={rho:.6g}")
        grow = grow + 1 if res_new > res else 0
        if grow >= 5:
            damped = True
        dw = float(np.max(np.abs(w_new - w)))
        w, g, res = w_new, g_new, res_new
        if not np.all(np.isfinite(w)):
            raise EstimationError(f"Newton solve for E[eps|y] diverged at rho={rho:.6g}")
        if dw < cfg.tol_w:
            converged = True
            break
    return BetaEStepState(w, sigma2, Bc, D, delta, it, res, converged, mode)


def beta_mstep(beta, w, rho: float, X) -> np.ndarray:
    """``beta + (X' Omega^{-1} X)^{-1} X' Omega^{-1} w``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = int(round((1 + np.sqrt(1 + 8 * X.shape[0])) / 2))
    p = excov.invert_params(ExchCovParams.px(rho), n)
    OiX = excov.s_apply(p, X, n)
    A = X.T @ OiX
    try:
        step = np.linalg.solve(A, OiX.T @ np.asarray(w, dtype=float))
    except np.linalg.LinAlgError:
        raise EstimationError("X' Omega^{-1} X is singular") from None
    return np.asarray(beta, dtype=float) + step


# ----------------------------------------------------------------------------
# rho block


def gamma_compute(beta, rho: float, X, y, pairs, missing=None) -> GammaStats:
    """Pairwise approximations of the three conditional second-moment averages.

    ``pairs`` is an ``(m, 2)`` array of shared-actor relation pairs, all
    observed. The shared-actor average is linear in ``rho`` between its
    values at 0 and at 1; disjoint pairs factorise, so their average comes
    from sums over relations in O(n^2).
    """
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[0] == 0:
        raise EstimationError("empty shared-actor subsample")
    y = np.asarray(y, dtype=float)
    N = len(y)
    n = int(round((1 + np.sqrt(1 + 8 * N)) / 2))
    obs = np.ones(N, bool) if missing is None else ~np.asarray(missing, bool)
    eta = np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    tm = trunc_moments(eta, y)
    m = tm.mean

    t1, t2, t3 = theta_counts(n)
    gamma1 = float(tm.second[obs].mean())

    d1, d2 = pairs[:, 0], pairs[:, 1]
    prod0 = m[d1] * m[d2]
    prod1 = pair_expectation_rho1(eta[d1], eta[d2], y[d1], y[d2])
    a2 = float(prod0.mean())
    c2 = float(prod1.mean())
    b2 = c2 - a2
    k = len(pairs)
    items = (1.0 - rho) * prod0 + rho * prod1
    se = float(items.std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0

    mo = m[obs]
    scale = t1 / mo.size
    gamma3 = ((scale * mo.sum()) ** 2 - scale * np.square(mo).sum() - t2 * a2) / t3 if t3 else 0.0
    return GammaStats(gamma1, a2 + b2 * rho, float(gamma3), a2, b2, c2, float(rho), se, k)


def rho_mstep(
    gamma: GammaStats,
    rho: float,
    n: int,
    *,
    tol: float = 1e-5,
    max_iter: int = 100,
) -> RhoMStepResult:
    """Alternate the rho and Lagrange-multiplier updates with ``gamma`` fixed."""
    t1, t2, t3 = theta_counts(n)
    rhs = np.array([t1 * (gamma.gamma1 - 1.0), t3 * gamma.gamma3])
    lam = np.zeros(2)
    clamped = False
    converged = False
    cur = float(np.clip(rho, 0.0, RHO_MAX))
    it = 0
    for it in range(1, max_iter + 1):
        p = excov.invert_params(ExchCovParams.px(cur), n)
        G = excov.phi_partials(p, n)
        L = np.array([[G[0, 0], G[2, 0]], [G[0, 2], G[2, 2]]])
        try:
            lam = np.linalg.solve(L, rhs)
        except np.linalg.LinAlgError:
            raise EstimationError(f"multiplier system is singular at rho={cur:.6g}") from None
        new = gamma.gamma2 - (G[0, 1] * lam[0] + G[2, 1] * lam[1]) / t2
        clamped = not (0.0 <= new <= RHO_MAX)
        new = float(np.clip(new, 0.0, RHO_MAX))
        done = abs(new - cur) < tol
        cur = new
        if done:
            converged = True
            break
    g = replace(gamma, lambda1=float(lam[0]), lambda3=float(lam[1]))
    return RhoMStepResult(cur, g, it, converged, clamped)


def _rho_fixed_point(a2: float, b2: float) -> float:
    if b2 < 1.0:
        r = a2 / (1.0 - b2)
    else:
        r = RHO_MAX if a2 >= 0 else 0.0
    return float(np.clip(r, 0.0, RHO_MAX))


def rho_init(X, y, beta0, n: int, config: BcemConfig | None = None, rng=None, missing=None) -> float:
    """Shrink a subsample estimate of rho toward 1/4.

    The data estimate is the self-consistent point of the linearised
    shared-actor average, ``rho = a2 + b2 rho``. The prior value 1/4 is
    weighted as though it came from ``100 n`` pairs.
    """
    cfg = config or BcemConfig()
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    y = np.asarray(y, dtype=float)
    obs = np.ones(len(y), bool) if missing is None else ~np.asarray(missing, bool)
    size = min(cfg.init_size(n), theta2_population(n, missing))
    prior = cfg.prior_weight * n
    wt = prior / (prior + size)
    yo = y[obs]
    if yo.size == 0 or np.all(yo == yo[0]):
        return 0.25 * wt
    pairs = sample_theta2(n, size, rng, missing)
    g = gamma_compute(beta0, 0.0, X, y, pairs, missing)
    est = _rho_fixed_point(g.a2, g.b2)
    return float(np.clip(0.25 * wt + (1.0 - wt) * est, 0.0, RHO_MAX))


# ----------------------------------------------------------------------------
# driver


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(key)]))


def fit(data: NetworkData, config: BcemConfig | None = None) -> PxFit:
    """Run the full estimator on ``data``.

    Missing responses are imputed from the latest conditional means before
    every outer iteration; the rho block only uses observed relations.
    """
    cfg = config or BcemConfig()
    t_start = time.perf_counter()
    n, X = data.n, data.X
    if n < 4:
        raise ValueError("need at least four actors")
    miss = data.missing
    obs = ~miss
    check_full_rank(X, obs)
    mask = miss if data.has_missing else None

    pf = fit_independent(X, data.y, miss)
    beta = pf.beta.copy()
    rho = rho_init(X, data.y, beta, n, cfg, _stream(cfg.seed, 0), mask)
    beta0, rho0 = beta.copy(), rho
    pop = theta2_population(n, mask)
    m_sub = cfg.theta2_size(n)
    exhaustive = m_sub >= pop

    y = data.y.astype(float)
    w = None
    eta_bar = 0.0
    trace = []
    converged = False
    clamped = False
    nu = 0
    for nu in range(1, cfg.max_outer + 1):
        beta_prev, rho_prev = beta.copy(), rho
        if data.has_missing:
            eta_bar = float((X[obs] @ beta).mean())
            w_miss = np.zeros(int(miss.sum())) if w is None else w[miss]
            y = y.copy()
            y[miss] = (w_miss > -eta_bar).astype(float)

        # beta block
        newton_its = 0
        s = 0
        for s in range(1, cfg.max_beta_inner + 1):
            st = beta_estep(beta, rho, X, y, cfg, w_init=w)
            newton_its += st.iterations
            w = st.w
            new = beta_mstep(beta, w, rho, X)
            db = float(np.abs(new - beta).sum())
            beta = new
            if db < cfg.tol_beta:
                break
        beta_its = s

        # rho block
        se = 0.0
        rho_its = 0
        for s in range(1, cfg.max_rho_inner + 1):
            # the s-th subsample is the same in every outer iteration, so the
            # outer map is deterministic and can converge to tolerance
            pairs = sample_theta2(n, m_sub, _stream(cfg.seed, s), mask)
            gam = gamma_compute(beta, rho, X, y, pairs, mask)
            res = rho_mstep(gam, rho, n, tol=cfg.tol_rho, max_iter=cfg.max_rho_mstep)
            se = 0.0 if exhaustive else gam.gamma2_se
            dr = abs(res.rho - rho)
            rho = res.rho
            clamped = res.clamped
            rho_its = s
            thresh = max(cfg.tol_rho, 2.0 * se) if cfg.noise_aware else cfg.tol_rho
            if dr < thresh:
                break

        d_beta = float(np.abs(beta - beta_prev).sum())
        d_rho = abs(rho - rho_prev)
        trace.append(
            {
                "iteration": nu,
                "beta": [float(b) for b in beta],
                "rho": float(rho),
                "beta_inner": beta_its,
                "rho_inner": rho_its,
                "newton": newton_its,
                "delta_beta": d_beta,
                "delta_rho": d_rho,
                "rho_se": se,
            }
        )
        if max(d_beta, d_rho) <= cfg.tol:
            converged = True
            break

    return PxFit(
        beta=beta,
        rho=float(rho),
        converged=converged,
        iterations=nu,
        trace=trace,
        seed=cfg.seed,
        runtime_seconds=time.perf_counter() - t_start,
        beta_init=beta0,
        rho_init=float(rho0),
        columns=tuple(data.columns),
        rho_clamped=clamped,
    )
