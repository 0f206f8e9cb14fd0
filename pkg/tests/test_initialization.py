import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trgd.data import DistSpec, LogisticData, PcaData, generate_logistic, generate_pca, generate_regression
from trgd.initialization import (
    InitConfig,
    balanced_unfolding_mode,
    init_linear,
    init_logistic,
    init_pca,
    median_of_means,
    nuclear_huber,
    rebalance,
    svt,
    truncate_vector_norm,
)
from trgd.tucker import err_metric, hooi, rank_one_truth, subspace_angle

B_SIM = np.sqrt(10.0)


def test_truncate_vector_norm_examples():
    x = np.array([0.3, -0.4])
    assert np.array_equal(truncate_vector_norm(x, 1.0), x)
    np.testing.assert_allclose(truncate_vector_norm(np.array([3.0, 4.0]), 2.5), [1.5, 2.0], rtol=1e-15)
    assert np.array_equal(truncate_vector_norm(np.zeros(3), 1.0), np.zeros(3))
    with pytest.raises(ValueError):
        truncate_vector_norm(x, 0.0)


@given(arrays(np.float64, (5, 4), elements=st.floats(-1e4, 1e4)), st.floats(1e-3, 1e3))
def test_truncate_vector_norm_properties(x, omega):
    out = truncate_vector_norm(x, omega)
    for row, res in zip(x, out):
        n_in, n_out = np.linalg.norm(row), np.linalg.norm(res)
        assert n_out <= n_in * (1 + 1e-15)
        assert n_out == pytest.approx(min(n_in, omega), rel=1e-12, abs=1e-300)
        if n_in > 0:
            assert float(row @ res) / (n_in * n_out) == pytest.approx(1.0, abs=1e-12)


def test_svt_is_soft_thresholding(rng):
    m = rng.standard_normal((5, 3))
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    np.testing.assert_allclose(np.linalg.svd(svt(m, 0.5), compute_uv=False), np.sort(np.maximum(s - 0.5, 0))[::-1], atol=1e-12)
    assert not np.any(svt(m, s.max() + 1))


def test_nuclear_huber_matches_least_squares(rng):
    xs = rng.standard_normal((200, 6))
    beta = rng.standard_normal(6)
    ys = xs @ beta + 0.5 * rng.standard_normal(200)
    res = nuclear_huber(xs, ys, InitConfig(prox_iters=20_000, prox_tol=1e-15))
    ls = np.linalg.lstsq(xs, ys, rcond=None)[0]
    np.testing.assert_allclose(res.estimate.ravel(), ls, atol=1e-6)
    assert np.all(np.diff(res.objective) <= 1e-15)


def test_nuclear_huber_huge_penalty_gives_zero(rng):
    xs = rng.standard_normal((50, 6))
    ys = rng.standard_normal((50, 3))
    res = nuclear_huber(xs, ys, InitConfig(lambda_nuc=1e6))
    assert not np.any(res.estimate)


@pytest.mark.parametrize("delta,lam", [(np.inf, 0.1), (0.5, 0.05), (2.0, 0.0), (1.0, 1.0)])
def test_nuclear_huber_objective_monotone(rng, delta, lam):
    xs = rng.standard_t(2.5, (80, 12))
    ys = rng.standard_t(1.5, (80, 4))
    res = nuclear_huber(xs, ys, InitConfig(huber_delta=delta, lambda_nuc=lam, prox_iters=300))
    assert np.all(np.diff(res.objective) <= 1e-12 * np.abs(res.objective[:-1]))


def test_nuclear_huber_cap_warns(rng, caplog):
    xs = rng.standard_normal((30, 5))
    res = nuclear_huber(xs, rng.standard_normal(30), InitConfig(prox_iters=2, prox_tol=1e-300))
    assert not res.converged and res.iterations == 2
    assert "iteration cap" in caplog.text


def test_init_linear_noiseless_model_one():
    truth = rank_one_truth(b=B_SIM)
    data = generate_regression(truth, 500, DistSpec.gaussian(), DistSpec.gaussian(0.0), 3, np.random.default_rng(1))
    f, res, a = init_linear(data, (1, 1, 1), B_SIM, return_details=True)
    assert err_metric(f, truth) < 0.25 * B_SIM**2 * truth.sigma_bar ** (2 / 4)
    for u in f.factors:
        assert 0.5 * B_SIM <= np.linalg.norm(u) <= 2 * B_SIM
    np.testing.assert_allclose(f.reconstruct(), hooi(a, (1, 1, 1)).reconstruct(), rtol=1e-10, atol=1e-10)


def test_init_linear_model_two_heavy_tails():
    truth = rank_one_truth(b=B_SIM)
    data = generate_regression(truth, 500, DistSpec.student_t(2.1), DistSpec.student_t(1.2), 2, np.random.default_rng(2))
    f = init_linear(data, (1, 1, 1), B_SIM)
    assert err_metric(f, truth) < 0.25 * B_SIM**2 * truth.sigma_bar ** (2 / 4)
    for u, u_star in zip(f.factors, truth.factors.factors):
        assert subspace_angle(u, u_star) < 0.5


def test_balanced_unfolding_mode():
    assert balanced_unfolding_mode((10, 10, 10)) == 1
    assert balanced_unfolding_mode((2, 30, 4)) == 2
    assert balanced_unfolding_mode((4, 4, 16)) == 3
    assert balanced_unfolding_mode((3, 9, 3)) == 2


def test_init_logistic_null_signal():
    # lambda_nuc ~ sqrt(log(q1 q2) / n) with constant 1 sits below the null
    # gradient's spectral norm, so the estimate shrinks like 1/sqrt(n) rather
    # than vanishing; n = 4000 is the largest desk-scale sample size
    data = generate_logistic(np.zeros((5, 5, 5)), 4000, DistSpec.gaussian(), np.random.default_rng(3))
    _, res, a = init_logistic(data, (1, 1, 1), 1.0, return_details=True)
    assert np.linalg.norm(a) < 0.1


def test_init_logistic_recovers_direction():
    truth = rank_one_truth(shape=(5, 5, 5), scale=3.0 / np.sqrt(125), b=1.0)
    data = generate_logistic(truth, 1000, DistSpec.gaussian(), np.random.default_rng(4))
    f = init_logistic(data, (1, 1, 1), 1.0)
    for u, u_star in zip(f.factors, truth.factors.factors):
        assert subspace_angle(u, u_star) < 0.5


def test_init_pca_noiseless_exact():
    truth = rank_one_truth(b=B_SIM)
    data = generate_pca(truth, 3, DistSpec.gaussian(0.0), np.random.default_rng(0))
    assert err_metric(init_pca(data, (1, 1, 1), B_SIM), truth) < 1e-10


def test_init_pca_gaussian_snr():
    # sigma_min = 20 sqrt(10) for a rank-1 tensor with Frobenius norm 20 sqrt(10)
    truth = rank_one_truth(scale=20 * np.sqrt(10) / np.sqrt(1000), b=1.0)
    assert truth.sigma_min == pytest.approx(20 * np.sqrt(10))
    data = generate_pca(truth, 1, DistSpec.gaussian(), np.random.default_rng(5))
    f = init_pca(data, (1, 1, 1), 1.0)
    for u, u_star in zip(f.factors, truth.factors.factors):
        assert subspace_angle(u, u_star) < 0.3


def test_init_pca_median_beats_mean_under_heavy_tails():
    truth = rank_one_truth(b=1.0)
    wins = 0
    for trial in range(50):
        data = generate_pca(truth, 9, DistSpec.student_t(1.2), np.random.default_rng(1000 + trial))
        med = init_pca(data, (1, 1, 1), 1.0, aggregate="median")
        mean = init_pca(data, (1, 1, 1), 1.0, aggregate="mean")
        u_star = truth.factors.factors[0]
        wins += subspace_angle(med.factors[0], u_star) < subspace_angle(mean.factors[0], u_star)
    assert wins >= 30


def test_rebalance_preserves_tensor(rng):
    f = hooi(rng.standard_normal((4, 3, 5)), (2, 1, 2))
    g = rebalance(f, 2.5)
    np.testing.assert_allclose(g.reconstruct(), f.reconstruct(), rtol=1e-12)
    for u in g.factors:
        np.testing.assert_allclose(u.T @ u, 6.25 * np.eye(u.shape[1]), atol=1e-12)


def test_median_of_means_robust():
    vals = np.concatenate([np.ones(99), [1e12]])
    assert median_of_means(vals) == pytest.approx(1.0)


def test_init_config_validation():
    for bad in (dict(omega=0), dict(huber_delta=-1), dict(lambda_nuc=-1), dict(prox_iters=0), dict(prox_step=0.0), dict(prox_tol=0.0)):
        with pytest.raises(ValueError):
            InitConfig(**bad)
    with pytest.raises(ValueError):
        init_pca(PcaData(np.zeros((2, 3, 3))), (1, 1), 1.0, aggregate="mode")
    with pytest.raises(ValueError):
        nuclear_huber(np.zeros((0, 3)), np.zeros(0), InitConfig())
