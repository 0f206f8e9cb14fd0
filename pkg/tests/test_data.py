import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from trgd.data import (
    DistSpec,
    LogisticData,
    PcaData,
    RegressionData,
    cap_deviation,
    estimate_local_moment,
    generate_logistic,
    generate_pca,
    generate_regression,
    sample_cap_directions,
    sample_student_t,
    sample_tensor,
    sigma_theta,
    spawn_rng,
)
from trgd.tucker import rank_one_truth


def test_student_t_large_dof_is_normal():
    x = sample_student_t(1e9, np.random.default_rng(1), 100_000)
    assert stats.kstest(x, "norm").statistic < 0.01


def test_student_t_median_and_variance():
    assert abs(np.median(sample_student_t(1.5, np.random.default_rng(2), 100_000))) < 0.02
    v = np.var(sample_student_t(3.0, np.random.default_rng(3), 1_000_000))
    assert abs(v - 3.0) < 0.3


def test_student_t_rejects_dof():
    with pytest.raises(ValueError):
        sample_student_t(1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        DistSpec.student_t(0.5)
    with pytest.raises(ValueError):
        DistSpec.correlated(2.0)
    with pytest.raises(ValueError):
        DistSpec("cauchy")


def test_sigma_theta_examples():
    p = 10
    np.testing.assert_allclose(sigma_theta(np.pi / 2, p), 0.5 * np.eye(p) + 0.5 * np.ones((p, p)), atol=1e-15)
    w = np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    np.testing.assert_allclose(sigma_theta(0.0, p), 0.5 * np.eye(p) + 0.5 * np.outer(w, w), atol=1e-15)
    assert w @ np.ones(p) == 0
    for theta in np.linspace(0, np.pi / 2, 7):
        ev = np.sort(np.linalg.eigvalsh(sigma_theta(theta, p)))
        np.testing.assert_allclose(ev[:-1], 0.5, atol=1e-12)
        assert ev[-1] == pytest.approx(0.5 + 0.5 * p, abs=1e-12)
    with pytest.raises(ValueError):
        sigma_theta(0.3, 5)


@pytest.mark.parametrize("theta", [0.0, np.pi / 8, np.pi / 4, np.pi / 2])
def test_correlated_sampler_covariance(theta):
    x = sample_tensor(DistSpec.correlated(theta), (4, 4), 100_000, np.random.default_rng(4))
    # covariance of the first-index-fastest vectorisation is kron(Sigma, Sigma)
    v = x.transpose(0, 2, 1).reshape(len(x), -1)
    emp = v.T @ v / len(v)
    s = sigma_theta(theta, 4)
    assert np.abs(emp - np.kron(s, s)).max() < 0.05


def test_equicorrelated_sampler():
    x = sample_tensor(DistSpec.equicorrelated(0.5), (3, 3), 100_000, np.random.default_rng(5)).reshape(100_000, -1)
    emp = x.T @ x / len(x)
    assert np.abs(emp - (0.5 * np.eye(9) + 0.5)).max() < 0.05


def test_samplers_reproducible():
    for dist in (DistSpec.gaussian(), DistSpec.student_t(2.1), DistSpec.correlated(0.4), DistSpec.equicorrelated(0.3)):
        a = sample_tensor(dist, (2, 4), 50, spawn_rng(9, 1, 2))
        b = sample_tensor(dist, (2, 4), 50, spawn_rng(9, 1, 2))
        c = sample_tensor(dist, (2, 4), 50, spawn_rng(9, 1, 3))
        assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_scale_multiplies_draws():
    a = sample_tensor(DistSpec.student_t(3.0), (2, 2), 10, np.random.default_rng(0))
    b = sample_tensor(DistSpec.student_t(3.0, scale=2.5), (2, 2), 10, np.random.default_rng(0))
    np.testing.assert_allclose(b, 2.5 * a, rtol=1e-15)


def test_regression_shapes_and_noiseless():
    truth = rank_one_truth()
    rng = np.random.default_rng(6)
    d1 = generate_regression(truth, 7, DistSpec.gaussian(), DistSpec.gaussian(0.0), 3, rng)
    assert d1.xs.shape == (7, 10, 10, 10) and d1.ys.shape == (7,)
    np.testing.assert_allclose(d1.ys, [np.sum(x * truth.tensor) for x in d1.xs], rtol=1e-12)
    d2 = generate_regression(truth, 5, DistSpec.gaussian(), DistSpec.gaussian(), 2, rng)
    assert d2.xs.shape == (5, 10, 10) and d2.ys.shape == (5, 10)
    with pytest.raises(ValueError):
        generate_regression(truth, 5, DistSpec.gaussian(), DistSpec.gaussian(), 4, rng)
    with pytest.raises(ValueError):
        RegressionData(2, np.zeros((3, 2, 2)), np.zeros(4))
    assert d2.subset([0, 2]).n == 2


def test_regression_response_formula():
    truth = rank_one_truth(shape=(3, 4, 5), scale=1.3)
    rng = np.random.default_rng(7)
    d = generate_regression(truth, 4, DistSpec.gaussian(), DistSpec.gaussian(0.0), 1, rng)
    expected = np.einsum("ni,ijk->njk", d.xs, truth.tensor)
    np.testing.assert_allclose(d.ys, expected, rtol=1e-12)


def test_logistic_null_and_saturation():
    zero = np.zeros((3, 3, 3))
    d = generate_logistic(zero, 10_000, DistSpec.gaussian(), np.random.default_rng(8))
    assert 0.48 <= d.ys.mean() <= 0.52
    # a coefficient forcing <X, A> = +40 for the all-ones covariate
    a = np.full((2, 2), 10.0)
    rng = np.random.default_rng(9)
    xs = np.ones((1000, 2, 2))
    ys = (rng.random(1000) < expit(xs.reshape(1000, -1) @ a.ravel())).astype(float)
    assert ys.min() == 1.0
    assert 1.0 - expit(40.0) < 1e-17
    with pytest.raises(ValueError):
        LogisticData(np.zeros((2, 2)), np.array([0.0, 0.5]))


def test_logistic_calibration():
    truth = rank_one_truth(shape=(4, 4), scale=0.5)
    d = generate_logistic(truth, 100_000, DistSpec.gaussian(), np.random.default_rng(10))
    scores = d.xs.reshape(d.n, -1) @ truth.tensor.ravel()
    edges = np.quantile(scores, np.linspace(0, 1, 21))
    which = np.clip(np.searchsorted(edges, scores, side="right") - 1, 0, 19)
    dev = max(abs(d.ys[which == b].mean() - expit(scores[which == b]).mean()) for b in range(20))
    assert dev < 0.03


def test_pca_generation():
    truth = rank_one_truth(shape=(4, 4, 4), scale=2.0)
    d0 = generate_pca(truth, 3, DistSpec.gaussian(0.0), np.random.default_rng(0))
    assert all(np.array_equal(y, truth.tensor) for y in d0.ys)
    n = 10_000
    d = generate_pca(truth, n, DistSpec.gaussian(), np.random.default_rng(11))
    assert np.all(np.abs(d.ys.mean(axis=0) - truth.tensor) < 3.0 / np.sqrt(n) * 1.5)
    e = sample_tensor(DistSpec.student_t(2.2), (100_000,), 1, np.random.default_rng(12)).ravel()
    assert stats.kurtosis(e) > 10
    with pytest.raises(ValueError):
        PcaData(np.zeros(3))


def test_cap_directions_within_radius():
    rng = np.random.default_rng(13)
    u = np.linalg.qr(rng.standard_normal((6, 2)))[0]
    inside, outside, s = sample_cap_directions(u, 500, rng)
    for delta in (0.0, 0.2, 0.7, 1.0):
        for a, b, r in zip(inside, outside, s * delta):
            v = np.sqrt(1 - r * r) * a + r * b
            assert abs(np.linalg.norm(v) - 1) < 1e-12
            assert cap_deviation(v, u) <= delta + 1e-10


def test_local_moment_isotropic_gaussian():
    factors = [np.eye(4)[:, :1]] * 3
    for delta in (0.0, 0.3, 1.0):
        est = estimate_local_moment(DistSpec.gaussian(), factors, 2, delta, n_dirs=50, n_samples=40_000,
                                    rng=np.random.default_rng(14))
        assert 0.9 <= est <= 1.1


def test_local_moment_monotone_in_delta():
    factors = [np.eye(4)[:, :1]] * 3
    dist = DistSpec.equicorrelated(0.5)
    values = [estimate_local_moment(dist, factors, 2, delta, n_dirs=60, n_samples=20_000, rng=np.random.default_rng(15))
              for delta in (0.0, 0.1, 0.3, 0.6, 1.0)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    excl = [estimate_local_moment(dist, factors, 2, delta, mode=2, n_dirs=30, n_samples=10_000, rng=np.random.default_rng(16))
            for delta in (0.0, 0.5, 1.0)]
    assert all(b >= a for a, b in zip(excl, excl[1:]))


def test_local_moment_rejects_bad_input():
    factors = [np.eye(3)[:, :1]] * 2
    with pytest.raises(ValueError):
        estimate_local_moment(DistSpec.gaussian(), factors, 2, 1.5)
    with pytest.raises(ValueError):
        estimate_local_moment(DistSpec.gaussian(), factors, 2, 0.1, extra_directions=[(np.ones(3) / np.sqrt(3),) * 2],
                              n_samples=10, rng=np.random.default_rng(0))
