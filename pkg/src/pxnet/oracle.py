"""Small-network reference computations for checking the fast approximations.

Everything here works with dense ``Omega`` and is limited to a few dozen
relations: a GHK simulator for the exact likelihood, a derivative-free
maximiser of that likelihood, and Gibbs samplers for the truncated
multivariate normal posterior of the latent errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import excov
from .excov import RHO_MAX, ExchCovParams
from .netdata import NetworkData
from .relindex import n_relations

__all__ = [
    "GhkEstimate",
    "MleResult",
    "GibbsResult",
    "ghk_loglik",
    "numeric_mle",
    "gibbs_conditional",
    "gibbs_predictive",
    "MleComparison",
    "run_mle_comparison",
]

_GHK_MAX_N = 16
_GIBBS_MAX_N = 10


@dataclass(frozen=True)
class GhkEstimate:
    loglik: float
    se: float
    draws: int
    seed: int | None
    underflow: bool = False


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), (None if rng is None else int(rng))


def _omega(rho: float, n: int) -> np.ndarray:
    if not 0.0 <= rho < 0.5:
        raise excov.NotPositiveDefiniteError(f"rho={rho} outside [0, 1/2)")
    return excov.dense_matrix(ExchCovParams.px(rho).as_array(), n)


def _trunc_std_normal(log_mass, upper: bool, u):
    """Inverse-CDF draw of ``N(0, 1)`` restricted to a half line of given log mass.

    The half line is ``x > a`` when ``upper`` (mass ``Phi(-a)``) and ``x < b``
    otherwise (mass ``Phi(b)``); the bound is implied by the mass.
    """
    mass = np.exp(log_mass)
    q = np.clip(u * mass, 1e-300, 1.0)
    x = special.ndtri(q)
    return np.where(upper, -x, x)


def ghk_loglik(beta, rho: float, data: NetworkData, draws: int = 2000, rng=0, *, uniforms=None) -> GhkEstimate:
    """Simulated ``log P(y)`` by sequential conditioning on the Cholesky factor.

    Pass an integer seed (or a fixed ``uniforms`` array of shape
    ``(draws, n_relations)``) to reuse the same random numbers across
    calls, which makes the estimate a smooth function of ``(beta, rho)``.
    """
    n = data.n
    if n > _GHK_MAX_N:
        raise ValueError(f"GHK oracle is limited to n <= {_GHK_MAX_N}")
    if draws < 100:
        raise ValueError("need at least 100 draws")
    L = np.linalg.cholesky(_omega(rho, n))
    mu = data.X @ np.asarray(beta, dtype=float)
    y = data.y.astype(bool)
    N = len(mu)
    seed = None
    if uniforms is None:
        gen, seed = _as_rng(rng)
        uniforms = gen.random((draws, N))
    else:
        draws = uniforms.shape[0]
    U = np.zeros((draws, N))
    logw = np.zeros(draws)
    for k in range(N):
        c = U[:, :k] @ L[k, :k]
        bound = (-mu[k] - c) / L[k, k]
        # y = 1 needs eps_k > -mu_k, i.e. u_k > bound
        logm = special.log_ndtr(-bound) if y[k] else special.log_ndtr(bound)
        logw += logm
        U[:, k] = _trunc_std_normal(logm, y[k], uniforms[:, k])
    if not np.any(np.isfinite(logw)):
        return GhkEstimate(-math.inf, math.inf, draws, seed, True)
    ll = float(special.logsumexp(logw) - math.log(draws))
    w = np.exp(logw - logw.max())
    se = float(w.std(ddof=1) / (math.sqrt(draws) * w.mean()))
    return GhkEstimate(ll, se, draws, seed, False)


@dataclass
class MleResult:
    beta: np.ndarray
    rho: float
    loglik: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


def _rho_from(t: float) -> float:
    return float(min(0.5 * special.expit(t), RHO_MAX))


def numeric_mle(data: NetworkData, init=None, draws: int = 2000, rng=0, *, max_iter: int = 2000) -> MleResult:
    """Nelder-Mead maximisation of the GHK log-likelihood over ``(beta, logit(2 rho))``.

    ``init`` is ``(beta, rho)``; the same uniforms are used at every
    evaluation.
    """
    gen, _ = _as_rng(rng)
    U = gen.random((draws, data.n_rel))
    p = data.X.shape[1]
    if init is None:
        from .probit0 import fit_independent

        init = (fit_independent(data.X, data.y).beta, 0.25)
    b0, r0 = init
    r0 = float(np.clip(r0, 1e-4, RHO_MAX - 1e-4))
    x0 = np.r_[np.asarray(b0, dtype=float), special.logit(2.0 * r0)]
    trace = []

    def nll(theta):
        est = ghk_loglik(theta[:p], _rho_from(theta[p]), data, uniforms=U)
        val = -est.loglik if np.isfinite(est.loglik) else 1e300
        trace.append(float(-val))
        return val

    res = optimize.minimize(
        nll,
        x0,
        method="Nelder-Mead",
        options={"xatol": 1e-5, "fatol": 1e-7, "maxiter": max_iter, "maxfev": 4 * max_iter},
    )
    return MleResult(res.x[:p].copy(), _rho_from(res.x[p]), float(-res.fun), int(res.nit), bool(res.success), trace)


@dataclass(frozen=True)
class GibbsResult:
    mean: np.ndarray
    se: np.ndarray
    sweeps: int
    chains: int
    pair_mean: np.ndarray | None = None
    pair_se: np.ndarray | None = None


def _gibbs_chains(beta, rho, X, y, rng, chains, sweeps, burn, free=None, pairs=None, target=None):
    N = len(y)
    n = int(round((1 + math.sqrt(1 + 8 * N)) / 2))
    if n > _GIBBS_MAX_N:
        raise ValueError(f"Gibbs oracle is limited to n <= {_GIBBS_MAX_N}")
    P = np.linalg.inv(_omega(rho, n))
    mu = np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float)
    y = np.asarray(y).astype(bool)
    free = np.zeros(N, bool) if free is None else np.asarray(free, bool)
    sd = 1.0 / np.sqrt(np.diag(P))
    coef = -P / np.diag(P)[:, None]
    np.fill_diagonal(coef, 0.0)

    # start from independent truncated draws
    E = np.empty((chains, N))
    for k in range(N):
        E[:, k] = _draw_coord(rng, np.zeros(chains), 1.0, mu[k], y[k], free[k])
    acc = np.zeros((chains, N))
    pacc = None if pairs is None else np.zeros((chains, len(pairs)))
    tacc = np.zeros(chains)
    for s in range(burn + sweeps):
        for k in range(N):
            m = E @ coef[k]
            E[:, k] = _draw_coord(rng, m, sd[k], mu[k], y[k], free[k])
        if s >= burn:
            acc += E
            if pairs is not None:
                pacc += E[:, pairs[:, 0]] * E[:, pairs[:, 1]]
            if target is not None:
                m = E @ coef[target]
                tacc += special.ndtr((m + mu[target]) / sd[target])
    return acc / sweeps, (None if pacc is None else pacc / sweeps), tacc / sweeps


def _draw_coord(rng, m, s, mu_k, y_k, free_k):
    u = rng.random(m.shape)
    if free_k:
        return m + s * special.ndtri(np.clip(u, 1e-300, 1 - 1e-16))
    # eps > -mu (y = 1) or eps < -mu (y = 0); standardised bound
    b = (-mu_k - m) / s
    if y_k:
        logm = special.log_ndtr(-b)
        return m + s * _trunc_std_normal(logm, True, u)
    logm = special.log_ndtr(b)
    return m + s * _trunc_std_normal(logm, False, u)


def gibbs_conditional(
    beta,
    rho: float,
    y,
    X,
    sweeps: int = 500,
    rng=0,
    *,
    chains: int = 200,
    burn: int = 100,
    pairs=None,
) -> GibbsResult:
    """``E[eps | y]`` by single-site Gibbs sampling of the truncated normal.

    Runs ``chains`` independent chains of ``sweeps`` retained sweeps each;
    standard errors come from the spread of the per-chain means.
    """
    gen, _ = _as_rng(rng)
    pairs = None if pairs is None else np.asarray(pairs, dtype=np.int64)
    cm, pm, _ = _gibbs_chains(beta, rho, X, y, gen, chains, sweeps, burn, pairs=pairs)
    se = cm.std(axis=0, ddof=1) / math.sqrt(chains)
    pse = None if pm is None else pm.std(axis=0, ddof=1) / math.sqrt(chains)
    return GibbsResult(cm.mean(axis=0), se, sweeps * chains, chains,
                       None if pm is None else pm.mean(axis=0), pse)


def gibbs_predictive(beta, rho: float, y, X, target: int, sweeps: int = 500, rng=0, *, chains: int = 200, burn: int = 100):
    """``P(y_target = 1 | y_-target)`` with the target's error left unconstrained.

    Returns ``(estimate, se)`` using the Rao-Blackwellised conditional
    probability at every retained sweep.
    """
    gen, _ = _as_rng(rng)
    free = np.zeros(len(y), bool)
    free[target] = True
    _, _, t = _gibbs_chains(beta, rho, X, y, gen, chains, sweeps, burn, free=free, target=target)
    return float(t.mean()), float(t.std(ddof=1) / math.sqrt(chains))


@dataclass
class MleComparison:
    """Per-replicate estimates and the three mean squared gaps per rho."""

    rows: list
    summary: list

    def write_csv(self, path) -> None:
        import csv

        fields = ["rho", "rep", "seed", "beta_true", "beta_mle", "rho_mle", "beta_bcem", "rho_bcem", "beta_probit0"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: r[k] for k in fields})

    def write_summary_csv(self, path) -> None:
        import csv

        fields = ["rho", "reps", "skipped", "mse_bcem_vs_mle", "mse_mle_vs_truth", "mse_probit0_vs_mle"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for r in self.summary:
                w.writerow({k: r[k] for k in fields})


def run_mle_comparison(
    n: int = 8,
    rhos=(0.1, 0.2, 0.3),
    reps: int = 20,
    draws: int = 2000,
    beta: float = 0.5,
    p_x: float = 0.3,
    seed: int = 0,
    bcem_config=None,
) -> MleComparison:
    """Compare BC-EM and independent probit with the simulated-likelihood MLE.

    One Bernoulli(``p_x``) covariate without intercept is drawn once and
    held fixed. Datasets on which the independent probit fit has no finite
    maximiser are skipped and replaced, so every rho gets ``reps`` usable
    replicates.
    """
    from .bcem import BcemConfig, fit
    from .probit0 import SeparationError, fit_independent
    from .simgen import cell_rng, gen_px

    N = n_relations(n)
    x = cell_rng(seed, 0).binomial(1, p_x, N).astype(float)
    X = x[:, None]
    btrue = np.array([beta])
    rows, summary = [], []
    for ri, rho in enumerate(rhos):
        got, skipped, k = 0, 0, 0
        while got < reps:
            k += 1
            if k > 50 * reps:
                raise RuntimeError("too many degenerate datasets")
            y = gen_px(X, btrue, rho, n, cell_rng(seed, 1, ri, k))
            data = NetworkData(n, y, X, ("x",))
            try:
                pb = fit_independent(X, y).beta
                cfg = bcem_config or BcemConfig()
                cfg = BcemConfig(**{**cfg.__dict__, "seed": k})
                bf = fit(data, cfg)
            except (SeparationError, ArithmeticError, ValueError):
                skipped += 1
                continue
            mle = numeric_mle(data, (btrue, rho), draws, cell_rng(seed, 2, ri, k))
            rows.append(
                dict(rho=rho, rep=got, seed=k, beta_true=beta, beta_mle=float(mle.beta[0]), rho_mle=mle.rho,
                     beta_bcem=float(bf.beta[0]), rho_bcem=bf.rho, beta_probit0=float(pb[0]))
            )
            got += 1
        sel = [r for r in rows if r["rho"] == rho]
        mle_b = np.array([r["beta_mle"] for r in sel])
        summary.append(
            dict(
                rho=rho,
                reps=len(sel),
                skipped=skipped,
                mse_bcem_vs_mle=float(np.mean((np.array([r["beta_bcem"] for r in sel]) - mle_b) ** 2)),
                mse_mle_vs_truth=float(np.mean((mle_b - beta) ** 2)),
                mse_probit0_vs_mle=float(np.mean((np.array([r["beta_probit0"] for r in sel]) - mle_b) ** 2)),
            )
        )
    return MleComparison(rows, summary)
