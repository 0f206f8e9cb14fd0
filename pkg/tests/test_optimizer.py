import numpy as np
import pytest

from trgd.data import DistSpec, RegressionData, generate_regression
from trgd.gradients import GradientSet, linear_gradients
from trgd.optimizer import (
    DivergenceError,
    OptimizerConfig,
    convergence_threshold,
    rgd_fit,
    rgd_step,
    tail_std,
)
from trgd.tucker import TuckerFactors, err_metric, rank_one_truth

from oracles import flat_matrix_gd

B_SIM = np.sqrt(10.0)  # balance scale of the simulation truth (entries sqrt(10))


def zero_grads(f):
    return GradientSet(np.zeros_like(f.core), tuple(np.zeros_like(u) for u in f.factors))


def test_config_validation():
    for bad in (dict(a=-1), dict(b=0), dict(eta=-1e-3), dict(tau=0), dict(iters=0), dict(nu=0.0)):
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)
    cfg = OptimizerConfig().with_(tau=3.0)
    assert cfg.tau == 3.0 and cfg.eta == 1e-3


def test_step_fixed_point_of_regulariser():
    truth = rank_one_truth(b=2.0)
    f = truth.factors
    out = rgd_step(f, zero_grads(f), OptimizerConfig(a=5.0, b=2.0, eta=0.1))
    assert np.array_equal(out.core, f.core)
    assert all(np.allclose(u, v, rtol=0, atol=1e-15) for u, v in zip(out.factors, f.factors))


def test_step_with_zero_eta(rng):
    f = TuckerFactors(rng.standard_normal((2, 2)), (rng.standard_normal((3, 2)), rng.standard_normal((4, 2))))
    g = GradientSet(rng.standard_normal((2, 2)), (rng.standard_normal((3, 2)), rng.standard_normal((4, 2))))
    out = rgd_step(f, g, OptimizerConfig(eta=0.0))
    assert np.array_equal(out.core, f.core) and all(np.array_equal(u, v) for u, v in zip(out.factors, f.factors))


def test_step_is_core_gd_with_identity_factors(rng):
    # a = 0, U = I: the core update is classical GD on the flattened 4x4 coefficient
    xs = rng.standard_normal((30, 4, 4))
    ys = rng.standard_normal(30)
    s = rng.standard_normal((4, 4))
    f = TuckerFactors(s, (np.eye(4), np.eye(4)))
    data = RegressionData(2, xs, ys)
    cfg = OptimizerConfig(a=0.0, eta=0.05)
    out = rgd_step(f, linear_gradients(f, data), cfg)
    flat = xs.reshape(30, 16)
    grad = flat.T @ (flat @ s.ravel() - ys) / 30
    np.testing.assert_allclose(out.core.ravel(), s.ravel() - 0.05 * grad, rtol=1e-13, atol=1e-14)


def test_vgd_matches_flat_gd_oracle(rng):
    xs = rng.standard_normal((40, 4, 4))
    a_star = np.outer(rng.standard_normal(4), rng.standard_normal(4))
    ys = np.array([np.sum(x * a_star) for x in xs]) + 0.1 * rng.standard_normal(40)
    s0, u1, u2 = rng.standard_normal((4, 4)), rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    ref = flat_matrix_gd(s0, u1, u2, xs, ys, a=0.5, b=1.2, eta=5e-3, iters=100)
    cfg = OptimizerConfig(a=0.5, b=1.2, eta=5e-3, tau=np.inf)
    f = TuckerFactors(s0, (u1, u2))
    data = RegressionData(2, xs, ys)
    for it in range(100):
        f = rgd_step(f, linear_gradients(f, data, np.inf), cfg)
        s, v1, v2 = ref[it + 1]
        dev = max(np.abs(f.core - s).max(), np.abs(f.factors[0] - v1).max(), np.abs(f.factors[1] - v2).max())
        assert dev < 1e-10


def test_noiseless_fit_stays_at_truth():
    truth = rank_one_truth(b=B_SIM)
    data = generate_regression(truth, 200, DistSpec.gaussian(), DistSpec.gaussian(0.0), 3, np.random.default_rng(1))
    cfg = OptimizerConfig(b=B_SIM, eta=2e-4, tau=np.sqrt(200 / np.log(10)))
    rep = rgd_fit(truth.factors, data, "linear", cfg, truth=truth)
    assert len(rep.traj_err_sq) == cfg.iters + 1
    assert np.all(rep.traj_err_sq < 1e-12)
    assert rep.converged and rep.conv_stat < rep.threshold


def test_rgd_within_factor_four_of_vgd():
    truth = rank_one_truth(b=B_SIM)
    data = generate_regression(truth, 500, DistSpec.gaussian(), DistSpec.gaussian(), 3, np.random.default_rng(2))
    base = OptimizerConfig(b=B_SIM, eta=2e-4)
    rgd = rgd_fit(truth.factors, data, "linear", base.with_(tau=np.sqrt(500 / np.log(10))), truth=truth)
    vgd = rgd_fit(truth.factors, data, "linear", base, truth=truth)
    e_r, e_v = rgd.traj_err_sq[-1], vgd.traj_err_sq[-1]
    assert e_v / 4 <= e_r <= 4 * e_v


def test_large_step_diverges():
    truth = rank_one_truth(b=B_SIM)
    data = generate_regression(truth, 100, DistSpec.gaussian(), DistSpec.gaussian(), 3, np.random.default_rng(3))
    cfg = OptimizerConfig(b=B_SIM, eta=10.0)
    with pytest.raises(DivergenceError) as info:
        rgd_fit(truth.factors, data, "linear", cfg, truth=truth)
    assert info.value.iteration >= 1
    rep = rgd_fit(truth.factors, data, "linear", cfg, truth=truth, raise_on_divergence=False)
    assert rep.diverged and not rep.converged


def test_err_metric_monotone_near_truth():
    truth = rank_one_truth(b=B_SIM)
    rng = np.random.default_rng(4)
    data = generate_regression(truth, 500, DistSpec.gaussian(), DistSpec.gaussian(0.0), 3, rng)
    f0 = truth.factors
    noise = [rng.standard_normal(u.shape) for u in f0.factors]
    scale = np.sqrt(1e-3 / sum(float(np.sum(z * z)) for z in noise))
    f = TuckerFactors(f0.core, tuple(u + scale * z for u, z in zip(f0.factors, noise)))
    assert err_metric(f, truth) == pytest.approx(1e-3, rel=1e-6)
    cfg = OptimizerConfig(b=B_SIM, eta=2e-4, tau=np.sqrt(500 / np.log(10)))
    errs = []
    for _ in range(60):
        f = rgd_step(f, linear_gradients(f, data, cfg.tau), cfg)
        errs.append(err_metric(f, truth))
    tail = errs[10:]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(tail, tail[1:]))
    assert errs[-1] < 1e-3


def test_regulariser_fixed_point_forever():
    # small signal keeps eta * curvature well below 2, so rounding cannot grow
    truth = rank_one_truth(shape=(4, 3, 5), scale=0.2, b=1.5)
    data = generate_regression(truth, 50, DistSpec.gaussian(), DistSpec.gaussian(0.0), 3, np.random.default_rng(5))
    rep = rgd_fit(truth.factors, data, "linear", OptimizerConfig(b=1.5, eta=1e-3, iters=80), truth=truth)
    assert np.all(rep.traj_err_sq < 1e-20)


def test_fit_is_deterministic():
    truth = rank_one_truth(b=B_SIM)
    data = generate_regression(truth, 120, DistSpec.student_t(2.1), DistSpec.student_t(1.2), 2, np.random.default_rng(6))
    cfg = OptimizerConfig(b=B_SIM, eta=2e-4, tau=5.0, iters=60)
    a = rgd_fit(truth.factors, data, "linear", cfg, truth=truth)
    b = rgd_fit(truth.factors, data, "linear", cfg, truth=truth)
    assert a.traj_err_sq.tobytes() == b.traj_err_sq.tobytes()
    assert a.final.core.tobytes() == b.final.core.tobytes()


def test_convergence_rule():
    assert convergence_threshold(10, 80) == pytest.approx(10 * np.log(10) / 8000)
    traj = np.concatenate([np.full(251, 7.0), np.arange(50.0)])
    assert tail_std(traj) == pytest.approx(np.std(np.arange(50.0), ddof=1))
    assert tail_std(np.full(300, 2.0)) == 0.0


def test_sequential_variant_differs_but_shares_fixed_points(rng):
    truth = rank_one_truth(shape=(4, 3, 5), scale=0.2, b=1.0)
    data = generate_regression(truth, 60, DistSpec.gaussian(), DistSpec.gaussian(), 2, rng)
    f0 = TuckerFactors(truth.factors.core * 1.1, tuple(u + 0.05 for u in truth.factors.factors))
    cfg = OptimizerConfig(b=1.0, eta=1e-2, iters=5)
    jac = rgd_fit(f0, data, "linear", cfg)
    seq = rgd_fit(f0, data, "linear", cfg.with_(sequential=True))
    assert not np.allclose(jac.final.factors[1], seq.final.factors[1])
    clean = generate_regression(truth, 60, DistSpec.gaussian(), DistSpec.gaussian(0.0), 2, rng)
    rep = rgd_fit(truth.factors, clean, "linear", cfg.with_(sequential=True), truth=truth)
    assert np.all(rep.traj_err_sq < 1e-20)


def test_huber_config_switches_gradients():
    truth = rank_one_truth(shape=(4, 3, 5), b=1.0)
    data = generate_regression(truth, 60, DistSpec.gaussian(), DistSpec.student_t(1.2), 2, np.random.default_rng(7))
    f0 = TuckerFactors(truth.factors.core * 0.9, truth.factors.factors)
    cfg = OptimizerConfig(b=1.0, eta=1e-2, iters=3)
    plain = rgd_fit(f0, data, "linear", cfg)
    hub = rgd_fit(f0, data, "linear", cfg.with_(nu=0.5))
    assert not np.allclose(plain.final.core, hub.final.core)
