"""Synthetic network generators and the coefficient-recovery study runner."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bcem import BcemConfig, fit
from .excov import RHO_MAX
from .netdata import NetworkData, build_design_sim
from .probit0 import fit_independent
from .relindex import n_relations, pair_arrays

__all__ = [
    "BETA_SIM",
    "EigenGenConfig",
    "px_errors",
    "gen_px",
    "gen_eigen",
    "gen_sim_covariates",
    "simulate_dataset",
    "StudyConfig",
    "SimStudyResult",
    "run_mse_study",
    "cell_rng",
]

BETA_SIM = np.array([-1.0, 1.0, 1.0, 1.0]) / 2.0


def cell_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator keyed by ``(seed, *keys)``; streams for distinct keys are independent."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def px_errors(n: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Errors with unit variance, shared-actor covariance ``rho``, zero otherwise.

    Built as ``sqrt(rho) (a_i + a_j) + sqrt(1 - 2 rho) xi_ij``.
    """
    if not 0.0 <= rho < 0.5:
        raise ValueError("rho must lie in [0, 1/2)")
    I, J = pair_arrays(n)
    a = rng.standard_normal(n)
    xi = rng.standard_normal(n_relations(n))
    return math.sqrt(rho) * (a[I] + a[J]) + math.sqrt(1.0 - 2.0 * rho) * xi


def gen_px(X, beta, rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    eps = px_errors(n, rho, rng)
    return (np.asarray(X) @ np.asarray(beta, dtype=float) + eps > 0).astype(np.int8)


@dataclass(frozen=True)
class EigenGenConfig:
    """Latent eigenmodel ``a_i + a_j + u_i' Lam u_j + xi_ij``.

    Defaults give each of the three terms variance 1/3 when ``K = 2``.
    """

    K: int = 2
    Lam: tuple | None = None
    sigma_a2: float = 1.0 / 6.0
    sigma_u2: float = 1.0 / math.sqrt(6.0)
    sigma_xi2: float = 1.0 / 3.0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if min(self.sigma_a2, self.sigma_u2, self.sigma_xi2) < 0:
            raise ValueError("variance components must be non-negative")

    def lam(self) -> np.ndarray:
        L = np.eye(self.K) if self.Lam is None else np.asarray(self.Lam, dtype=float)
        if L.shape != (self.K, self.K) or not np.allclose(L, L.T):
            raise ValueError("Lam must be a symmetric K x K matrix")
        return L


def gen_eigen(X, beta, config: EigenGenConfig, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if n is None:
        n = int(round((1 + math.sqrt(1 + 8 * X.shape[0])) / 2))
    I, J = pair_arrays(n)
    a = rng.normal(0.0, math.sqrt(config.sigma_a2), n)
    U = rng.normal(0.0, math.sqrt(config.sigma_u2), (n, config.K))
    xi = rng.normal(0.0, math.sqrt(config.sigma_xi2), len(I))
    uu = np.einsum("dk,kl,dl->d", U[I], config.lam(), U[J])
    z = X @ np.asarray(beta, dtype=float) + a[I] + a[J] + uu + xi
    return (z > 0).astype(np.int8)


def gen_sim_covariates(n: int, rng: np.random.Generator):
    """Nodal ``x1 ~ Bern(1/2)``, ``x2 ~ N(0, 1)``, dyadic ``x3 ~ N(0, 1)`` and their design."""
    if n < 4:
        raise ValueError("need at least four actors")
    x1 = rng.integers(0, 2, n).astype(float)
    x2 = rng.standard_normal(n)
    x3 = rng.standard_normal(n_relations(n))
    X, cols = build_design_sim(x1, x2, x3)
    return x1, x2, x3, X, cols


def simulate_dataset(model: str, n: int, seed: int, rho: float = 0.25, beta=None, eigen: EigenGenConfig | None = None):
    """One simulated network with the study covariates; returns ``(data, x1, x2, x3)``."""
    beta = BETA_SIM if beta is None else np.asarray(beta, dtype=float)
    x1, x2, x3, X, cols = gen_sim_covariates(n, cell_rng(seed, 0))
    rng = cell_rng(seed, 1)
    if model == "px":
        y = gen_px(X, beta, rho, n, rng)
    elif model == "eigen":
        y = gen_eigen(X, beta, eigen or EigenGenConfig(), rng, n)
    else:
        raise ValueError(f"unknown model {model!r}")
    return NetworkData(n, y, X, cols), x1, x2, x3


@dataclass
class StudyConfig:
    generator: str = "px"
    rho: float = 0.25
    ns: tuple = (20, 40, 80)
    designs: int = 5
    reps: int = 20
    estimators: tuple = ("bcem", "probit0")
    beta: tuple = tuple(BETA_SIM)
    seed: int = 0
    threads: int = 1
    bcem: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in ("px", "eigen"):
            raise ValueError("generator must be px or eigen")
        bad = set(self.estimators) - {"bcem", "probit0"}
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}")
        if self.generator == "px" and not 0.0 <= self.rho <= RHO_MAX:
            raise ValueError("rho must lie in [0, 1/2)")
        if self.designs < 1 or self.reps < 1:
            raise ValueError("designs and reps must be positive")


@dataclass
class SimStudyResult:
    """Per-design cells plus medians across designs.

    ``cells`` rows: estimator, generator, n, design, coef, mse, bias2, var,
    reps, failures.
    """

    cells: list
    config: dict

    def summary(self) -> list[dict]:
        groups: dict[tuple, list] = {}
        for c in self.cells:
            if c["reps"] == 0:
                continue
            groups.setdefault((c["estimator"], c["generator"], c["n"], c["coef"]), []).append(c)
        out = []
        for (est, gen, n, coef), rows in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][2], str(kv[0][3]))):
            out.append(
                {
                    "estimator": est,
                    "generator": gen,
                    "n": n,
                    "coef": coef,
                    "median_mse": float(np.median([r["mse"] for r in rows])),
                    "median_bias2": float(np.median([r["bias2"] for r in rows])),
                    "median_var": float(np.median([r["var"] for r in rows])),
                    "designs": len(rows),
                }
            )
        return out

    def median_mse(self, estimator: str, n: int, coef) -> float:
        for row in self.summary():
            if row["estimator"] == estimator and row["n"] == n and row["coef"] == coef:
                return row["median_mse"]
        return math.nan

    def write_csv(self, path) -> None:
        fields = ["estimator", "generator", "n", "design", "coef", "mse", "bias2", "var", "reps", "failures"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for c in self.cells:
                w.writerow({k: c[k] for k in fields})


def _one_rep(args):
    cfg, n, d, r = args
    beta = np.asarray(cfg.beta, dtype=float)
    _, _, _, X, cols = gen_sim_covariates(n, cell_rng(cfg.seed, n, d))
    rng = cell_rng(cfg.seed, n, d, r + 1)
    if cfg.generator == "px":
        y = gen_px(X, beta, cfg.rho, n, rng)
    else:
        y = gen_eigen(X, beta, EigenGenConfig(), rng, n)
    data = NetworkData(n, y, X, cols)
    out = {}
    for est in cfg.estimators:
        try:
            if est == "probit0":
                out[est] = (fit_independent(X, y).beta, None)
            else:
                bc = BcemConfig(**{**cfg.bcem, "seed": int(np.random.SeedSequence([cfg.seed, n, d, r]).generate_state(1)[0])})
                f = fit(data, bc)
                out[est] = (f.beta, f.rho)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            out[est] = None
    return n, d, r, out


def _cell(est, gen, n, d, coef, values, truth, failures):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return dict(estimator=est, generator=gen, n=n, design=d, coef=coef, mse=math.nan,
                    bias2=math.nan, var=math.nan, reps=0, failures=failures)
    err = v - truth
    bias2 = float(err.mean() ** 2)
    var = float(v.var())
    mse = float(np.mean(err**2))
    return dict(estimator=est, generator=gen, n=n, design=d, coef=coef, mse=mse,
                bias2=bias2, var=var, reps=int(v.size), failures=failures)


def run_mse_study(config: StudyConfig) -> SimStudyResult:
    """Fit every estimator on ``designs x reps`` simulated networks per ``n``.

    Designs and error draws are seeded from ``(seed, n, design[, rep])`` so
    results do not depend on execution order or thread count.
    """
    tasks = [(config, n, d, r) for n in config.ns for d in range(config.designs) for r in range(config.reps)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as ex:
            results = list(ex.map(_one_rep, tasks))
    else:
        results = [_one_rep(t) for t in tasks]

    beta = np.asarray(config.beta, dtype=float)
    coef_names = [f"beta{k}" for k in range(len(beta))]
    cells = []
    for n in config.ns:
        for d in range(config.designs):
            reps = [res for (nn, dd, _, res) in results if nn == n and dd == d]
            for est in config.estimators:
                ok = [r[est] for r in reps if r[est] is not None]
                fails = len(reps) - len(ok)
                B = np.array([b for b, _ in ok]) if ok else np.empty((0, len(beta)))
                for k, name in enumerate(coef_names):
                    cells.append(_cell(est, config.generator, n, d, name, B[:, k] if ok else [], beta[k], fails))
                if est == "bcem" and config.generator == "px":
                    cells.append(_cell(est, config.generator, n, d, "rho", [r for _, r in ok], config.rho, fails))
    return SimStudyResult(cells, asdict(config))
