import math

import numpy as np
import pytest

from pxnet.relindex import pair_arrays, pair_to_index
from pxnet.simgen import (
    BETA_SIM,
    EigenGenConfig,
    StudyConfig,
    cell_rng,
    gen_eigen,
    gen_sim_covariates,
    px_errors,
    run_mse_study,
    simulate_dataset,
)


def _shared_and_disjoint(n):
    return (pair_to_index(0, 1, n), pair_to_index(0, 2, n)), (pair_to_index(0, 1, n), pair_to_index(2, 3, n))


def test_px_errors_rho0_uncorrelated():
    n = 30
    rng = np.random.default_rng(0)
    E = np.array([px_errors(n, 0.0, rng) for _ in range(3000)])
    (a, b), _ = _shared_and_disjoint(n)
    r = np.corrcoef(E[:, a], E[:, b])[0, 1]
    assert abs(r) < 3 / math.sqrt(3000)


def test_px_errors_moments():
    n, reps = 100, 200
    rng = np.random.default_rng(1)
    I, J = pair_arrays(n)
    covs, vars_ = [], []
    for _ in range(reps):
        e = px_errors(n, 0.25, rng)
        vars_.append(np.mean(e**2))
        # all pairs (0,j),(0,k): shared actor 0
        e0 = e[(I == 0) | (J == 0)]
        s = e0.sum()
        covs.append((s * s - np.sum(e0**2)) / (len(e0) * (len(e0) - 1)))
    covs, vars_ = np.array(covs), np.array(vars_)
    assert abs(covs.mean() - 0.25) < 3 * covs.std(ddof=1) / math.sqrt(reps)
    assert abs(vars_.mean() - 1.0) < 3 * vars_.std(ddof=1) / math.sqrt(reps)


def test_px_matches_srm_construction():
    # sqrt(rho)(a_i + a_j) + sqrt(1 - 2 rho) xi  vs  a_i + a_j + xi with var(a) = rho
    rng = np.random.default_rng(2)
    reps, rho = 40000, 0.25
    a = rng.normal(0, math.sqrt(rho), (reps, 3))
    xi = rng.normal(0, math.sqrt(1 - 2 * rho), (reps, 2))
    srm = np.column_stack([a[:, 0] + a[:, 1] + xi[:, 0], a[:, 0] + a[:, 2] + xi[:, 1]])
    px = np.array([px_errors(3, rho, rng)[[0, 1]] for _ in range(reps)])
    for k in range(2):
        se = math.sqrt(2 / reps)
        assert abs(px[:, k].var() - srm[:, k].var()) < 4 * se
    assert abs(np.mean(px[:, 0] * px[:, 1]) - np.mean(srm[:, 0] * srm[:, 1])) < 4 * math.sqrt(2 * 1.2 / reps)


def test_px_rejects_rho():
    with pytest.raises(ValueError):
        px_errors(5, 0.5, np.random.default_rng(0))


def test_eigen_zero_variance_is_probit():
    rng = np.random.default_rng(0)
    n = 60
    _, _, _, X, _ = gen_sim_covariates(n, cell_rng(0, 0))
    cfg = EigenGenConfig(sigma_a2=0.0, sigma_u2=0.0, sigma_xi2=1.0)
    ys = np.array([gen_eigen(X, BETA_SIM, cfg, rng, n) for _ in range(400)])
    from pxnet.normal import std_cdf

    p = std_cdf(X @ BETA_SIM)
    assert np.abs(ys.mean(0) - p).max() < 5 * math.sqrt(0.25 / 400)


def test_eigen_variance_components():
    cfg = EigenGenConfig()
    assert cfg.K * cfg.sigma_u2**2 == pytest.approx(1 / 3)
    assert 2 * cfg.sigma_a2 == pytest.approx(1 / 3)
    rng = np.random.default_rng(3)
    n = 40
    zeros = np.zeros((n * (n - 1) // 2, 1))
    # latent total variance: use beta=0 and read the latent scale via the sign rate
    draws = []
    I, J = pair_arrays(n)
    for _ in range(200):
        a = rng.normal(0, math.sqrt(cfg.sigma_a2), n)
        U = rng.normal(0, math.sqrt(cfg.sigma_u2), (n, cfg.K))
        xi = rng.normal(0, math.sqrt(cfg.sigma_xi2), len(I))
        draws.append(a[I] + a[J] + np.einsum("dk,dk->d", U[I], U[J]) + xi)
    z = np.concatenate(draws)
    assert z.var() == pytest.approx(1.0, abs=0.05)
    assert gen_eigen(zeros, [0.0], cfg, rng, n).dtype == np.int8


def test_eigen_triadic_dependence():
    rng = np.random.default_rng(4)
    n = 30
    zeros = np.zeros((n * (n - 1) // 2, 1))
    d01, d12, d02 = pair_to_index(0, 1, n), pair_to_index(1, 2, n), pair_to_index(0, 2, n)
    Y = np.array([gen_eigen(zeros, [0.0], EigenGenConfig(), rng, n) for _ in range(20000)])
    closed = (Y[:, d01] == 1) & (Y[:, d12] == 1)
    assert Y[closed, d02].mean() > Y[:, d02].mean()


def test_eigen_lam_validation():
    with pytest.raises(ValueError):
        EigenGenConfig(K=2, Lam=((1, 2), (0, 1))).lam()


def test_covariates_reproducible_and_balanced():
    a = gen_sim_covariates(20, cell_rng(9, 0))[3]
    b = gen_sim_covariates(20, cell_rng(9, 0))[3]
    assert a.tobytes() == b.tobytes()
    means = [gen_sim_covariates(200, np.random.default_rng(s))[3][:, 1].mean() for s in range(20)]
    assert np.mean(means) == pytest.approx(0.25, abs=0.02)
    np.testing.assert_array_equal(BETA_SIM, [-0.5, 0.5, 0.5, 0.5])


def test_simulate_dataset():
    d, x1, x2, x3 = simulate_dataset("px", 12, 3)
    assert d.n == 12 and d.columns == ("intercept", "both_x1", "abs_diff_x2", "x3")
    with pytest.raises(ValueError):
        simulate_dataset("ergm", 12, 3)


def test_study_single_cell_is_squared_error(tmp_path):
    cfg = StudyConfig(ns=(15,), designs=1, reps=1, seed=2)
    res = run_mse_study(cfg)
    cells = [c for c in res.cells if c["estimator"] == "probit0"]
    assert all(c["reps"] == 1 and c["var"] == 0.0 for c in cells)
    assert all(c["mse"] == pytest.approx(c["bias2"]) for c in cells)
    assert res.median_mse("bcem", 15, "rho") >= 0
    res.write_csv(tmp_path / "cells.csv")
    assert (tmp_path / "cells.csv").read_text().startswith("estimator,generator,n,design")


def test_study_thread_count_does_not_change_results():
    a = run_mse_study(StudyConfig(ns=(12,), designs=2, reps=2, seed=4, estimators=("probit0",)))
    b = run_mse_study(StudyConfig(ns=(12,), designs=2, reps=2, seed=4, estimators=("probit0",), threads=2))
    assert a.cells == b.cells


def test_study_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(estimators=("ols",))
    with pytest.raises(ValueError):
        StudyConfig(rho=0.6)
