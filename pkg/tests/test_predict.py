import numpy as np
import pytest

from pxnet.bcem import BcemConfig, PxFit, fit
from pxnet.netdata import NetworkData
from pxnet.normal import std_cdf
from pxnet.oracle import gibbs_predictive
from pxnet.predict import mode_value, predict_independent, predict_marginal
from pxnet.simgen import BETA_SIM, simulate_dataset


def _fit(beta, rho, cols=("intercept",)):
    return PxFit(beta=np.asarray(beta, float), rho=rho, converged=True, iterations=1, columns=cols)


def test_mode_value():
    assert mode_value([1, 0, 0]) == 0
    assert mode_value([1, 1, 0]) == 1
    assert mode_value([1, 0]) == 1
    with pytest.raises(ValueError):
        mode_value([])


def test_rho_zero_reduces_to_probit():
    data, *_ = simulate_dataset("px", 15, 3, rho=0.0)
    targets = np.arange(0, data.n_rel, 4)
    pr = predict_marginal(_fit(BETA_SIM, 0.0, data.columns), data, targets)
    np.testing.assert_allclose(pr.p_hat, std_cdf(data.X[targets] @ BETA_SIM), atol=1e-8)
    np.testing.assert_allclose(predict_independent(BETA_SIM, data, targets).p_hat, pr.p_hat, atol=1e-8)


def test_symmetric_data_equal_predictions():
    n = 9
    N = n * (n - 1) // 2
    data = NetworkData(n, np.ones(N), np.ones((N, 1)), ("intercept",))
    pr = predict_marginal(_fit([0.4], 0.3), data, [0, 7, 20, 35])
    assert np.ptp(pr.p_hat) < 1e-12
    assert pr.imputed == 1


def test_default_targets_are_missing_relations():
    data, *_ = simulate_dataset("px", 10, 1)
    held = data.with_missing([3, 11, 30])
    pr = predict_marginal(_fit(BETA_SIM, 0.2, data.columns), held)
    assert pr.index.tolist() == [3, 11, 30]
    assert np.all((pr.p_hat > 0) & (pr.p_hat < 1))


def test_single_holdout_against_gibbs():
    rho = 0.3
    gaps = []
    for seed in range(8):
        data, *_ = simulate_dataset("px", 8, seed, rho=rho)
        for target in (3, 10, 20):
            held = data.with_missing([target])
            p = predict_marginal(_fit(BETA_SIM, rho, data.columns), held, [target]).p_hat[0]
            p_gibbs, _ = gibbs_predictive(BETA_SIM, rho, held.y.astype(float), data.X, target, sweeps=300, rng=seed)
            gaps.append(abs(p - p_gibbs))
    assert max(gaps) < 0.05


def test_all_held_out_rejected():
    data, *_ = simulate_dataset("px", 5, 0)
    with pytest.raises(ValueError):
        predict_marginal(_fit(BETA_SIM, 0.1, data.columns), data, np.arange(data.n_rel))


def test_write_csv(tmp_path):
    data, *_ = simulate_dataset("px", 6, 0)
    pr = predict_marginal(_fit(BETA_SIM, 0.1, data.columns), data, [0, 5])
    pr.write_csv(tmp_path / "s.csv", 6)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "i,j,p_hat" and lines[1].startswith("0,1,") and lines[2].startswith("2,3,")


def test_fitted_prediction_runs_end_to_end():
    data, *_ = simulate_dataset("px", 25, 4)
    held = data.with_missing(np.arange(0, data.n_rel, 10))
    f = fit(held, BcemConfig(seed=1))
    pr = predict_marginal(f, held)
    assert len(pr.index) == held.missing.sum()
