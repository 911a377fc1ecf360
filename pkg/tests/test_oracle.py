import math

import numpy as np
import pytest

from pxnet.excov import dense_matrix
from pxnet.netdata import NetworkData
from pxnet.normal import trunc_moments
from pxnet.oracle import ghk_loglik, gibbs_conditional, numeric_mle, run_mle_comparison
from pxnet.probit0 import is_separated, probit_loglik
from pxnet.relindex import sample_theta2
from pxnet.simgen import BETA_SIM, gen_px, simulate_dataset


def test_ghk_independent_case_exact():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(4, 9))
        N = n * (n - 1) // 2
        X = np.column_stack([np.ones(N), rng.standard_normal(N)])
        beta = rng.normal(0, 0.7, 2)
        y = rng.integers(0, 2, N)
        d = NetworkData(n, y, X, ("a", "b"))
        est = ghk_loglik(beta, 0.0, d, draws=200, rng=1)
        assert abs(est.loglik - probit_loglik(beta, X, y)) <= max(3 * est.se, 1e-10)


def test_ghk_orthant_against_plain_monte_carlo():
    n, rho = 4, 0.3
    N = 6
    d = NetworkData(n, np.ones(N), np.ones((N, 1)), ("intercept",))
    est = ghk_loglik([0.0], rho, d, draws=20000, rng=2)
    L = np.linalg.cholesky(dense_matrix((1, rho, 0), n))
    rng = np.random.default_rng(3)
    hits, total = 0, 0
    for _ in range(10):
        z = rng.standard_normal((1_000_000, N)) @ L.T
        hits += int(np.all(z > 0, axis=1).sum())
        total += 1_000_000
    p = hits / total
    se_mc = math.sqrt(p * (1 - p) / total) / p
    assert abs(est.loglik - math.log(p)) < 3 * math.hypot(est.se, se_mc)


def test_ghk_se_scaling():
    data, *_ = simulate_dataset("px", 8, 1, rho=0.3)
    a = ghk_loglik(BETA_SIM, 0.3, data, draws=4000, rng=5)
    b = ghk_loglik(BETA_SIM, 0.3, data, draws=8000, rng=6)
    assert 0.6 <= b.se / a.se <= 0.85


def test_ghk_size_limit():
    data, *_ = simulate_dataset("px", 17, 0)
    with pytest.raises(ValueError):
        ghk_loglik(BETA_SIM, 0.2, data)


def _small(n, seed, rho):
    rng = np.random.default_rng(seed)
    N = n * (n - 1) // 2
    X = np.column_stack([np.ones(N), rng.standard_normal(N)])
    y = gen_px(X, [0.2, 0.8], rho, n, rng)
    return NetworkData(n, y, X, ("intercept", "z"))


def test_numeric_mle_rho0_data():
    # the single-covariate design of the MLE comparison; separated draws are skipped
    n, N = 8, 28
    rhos, s = [], 0
    while len(rhos) < 10:
        rng = np.random.default_rng(400 + s)
        x = rng.binomial(1, 0.3, N).astype(float)[:, None]
        y = gen_px(x, [0.5], 0.0, n, rng)
        s += 1
        if is_separated(x, y):
            continue
        rhos.append(numeric_mle(NetworkData(n, y, x, ("x",)), draws=1000, rng=s).rho)
    assert np.mean(rhos) < 0.1


def test_numeric_mle_deterministic():
    data = _small(6, 2, 0.2)
    a = numeric_mle(data, draws=300, rng=4)
    b = numeric_mle(data, draws=300, rng=4)
    np.testing.assert_array_equal(a.beta, b.beta)
    assert a.rho == b.rho


def test_gibbs_independent_matches_truncated_means():
    data, *_ = simulate_dataset("px", 6, 4, rho=0.0)
    g = gibbs_conditional(BETA_SIM, 0.0, data.y, data.X, sweeps=200, rng=1)
    m = trunc_moments(data.X @ BETA_SIM, data.y).mean
    assert np.all(np.abs(g.mean - m) < 3 * g.se)


def test_gibbs_chains_agree_across_seeds():
    data, *_ = simulate_dataset("px", 7, 5, rho=0.3)
    a = gibbs_conditional(BETA_SIM, 0.3, data.y, data.X, sweeps=200, rng=10)
    b = gibbs_conditional(BETA_SIM, 0.3, data.y, data.X, sweeps=200, rng=11)
    assert np.all(np.abs(a.mean - b.mean) < 4 * np.hypot(a.se, b.se))


def test_gibbs_pair_products_reported():
    data, *_ = simulate_dataset("px", 6, 6, rho=0.3)
    pairs = sample_theta2(6, 10, np.random.default_rng(0))
    g = gibbs_conditional(BETA_SIM, 0.3, data.y, data.X, sweeps=100, rng=0, pairs=pairs)
    assert g.pair_mean.shape == (10,) and np.all(np.isfinite(g.pair_mean)) and np.all(g.pair_se > 0)


def test_mle_comparison_small_and_deterministic(tmp_path):
    a = run_mle_comparison(n=6, rhos=(0.2,), reps=2, draws=200, seed=3)
    b = run_mle_comparison(n=6, rhos=(0.2,), reps=2, draws=200, seed=3)
    assert a.rows == b.rows
    assert a.summary[0]["reps"] == 2
    a.write_csv(tmp_path / "rows.csv")
    a.write_summary_csv(tmp_path / "summary.csv")
    assert (tmp_path / "summary.csv").read_text().startswith("rho,reps,skipped")
