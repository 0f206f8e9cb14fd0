"""Robust gradient descent with the factor-balancing regulariser."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .gradients import model_gradients
from .tucker import TuckerFactors

__all__ = [
    "OptimizerConfig",
    "FitReport",
    "DivergenceError",
    "rgd_step",
    "rgd_fit",
    "convergence_threshold",
    "tail_std",
]

log = logging.getLogger(__name__)

CONVERGENCE_WINDOW = 50


class DivergenceError(ArithmeticError):
    """Raised when an iterate picks up NaN or Inf entries."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"iterate became non-finite at iteration {iteration}")


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of the descent loop.

    ``tau`` is the gradient truncation level (``inf`` for vanilla gradient
    descent). ``nu`` switches the gradients to the Huber comparator with
    residual threshold ``nu``. ``sequential=True`` updates the blocks in turn
    (Gauss-Seidel) instead of all from the same iterate.
    """

    a: float = 1.0
    b: float = 1.0
    eta: float = 1e-3
    tau: float = np.inf
    iters: int = 300
    record_trajectory: bool = True
    nu: float = None
    sequential: bool = False

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("a must be non-negative")
        if self.b <= 0:
            raise ValueError("b must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.nu is not None and not self.nu > 0:
            raise ValueError("nu must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class FitReport:
    final: TuckerFactors
    traj_err_sq: np.ndarray = None
    converged: bool = None
    conv_stat: float = None
    threshold: float = None
    diverged: bool = False
    iterations: int = 0
    extra: dict = field(default_factory=dict)


def convergence_threshold(p_bar, n):
    """Tail-spread threshold ``p log p / (100 n)`` for the convergence flag."""
    return p_bar * np.log(p_bar) / (100.0 * n)


def tail_std(traj, window=CONVERGENCE_WINDOW):
    """Sample standard deviation of the last ``window`` entries (iterations T-49..T)."""
    tail = np.asarray(traj)[-window:]
    return float(np.std(tail, ddof=1))


def _regularizer_step(u, b):
    return u @ (u.T @ u - b * b * np.eye(u.shape[1]))


def rgd_step(f, g, cfg):
    """One simultaneous update of every factor and the core from ``f``."""
    eta, a, b = cfg.eta, cfg.a, cfg.b
    new_factors = tuple(
        u - eta * gk - eta * a * _regularizer_step(u, b) for u, gk in zip(f.factors, g.factor_grads)
    )
    return TuckerFactors(f.core - eta * g.core_grad, new_factors)


def _grad(model, f, data, cfg):
    if cfg.nu is not None:
        return model_gradients("huber", f, data, nu=cfg.nu)
    return model_gradients(model, f, data, cfg.tau)


def _sequential_step(f, data, model, cfg):
    eta, a, b = cfg.eta, cfg.a, cfg.b
    factors = list(f.factors)
    core = f.core
    for k in range(len(factors)):
        g = _grad(model, TuckerFactors(core, tuple(factors)), data, cfg)
        u = factors[k]
        factors[k] = u - eta * g.factor_grads[k] - eta * a * _regularizer_step(u, b)
    g = _grad(model, TuckerFactors(core, tuple(factors)), data, cfg)
    return TuckerFactors(core - eta * g.core_grad, tuple(factors))


def _true_tensor(truth):
    if truth is None:
        return None
    return truth.tensor if hasattr(truth, "tensor") else np.asarray(truth)


def rgd_fit(f0, data, model, cfg, truth=None, raise_on_divergence=True):
    """Run the robust gradient descent loop for ``cfg.iters`` iterations.

    Parameters
    ----------
    f0 : TuckerFactors
        Starting point.
    data : RegressionData, LogisticData or PcaData
    model : {"linear", "logistic", "pca"}
    cfg : OptimizerConfig
    truth : GroundTruth or ndarray, optional
        When given, ``||A^(t) - A*||_F^2`` is recorded for ``t = 0..T`` and the
        convergence flag is computed from the last 50 values.
    raise_on_divergence : bool
        Raise :class:`DivergenceError` on a non-finite iterate; otherwise
        stop and return a report with ``diverged=True``.

    Returns
    -------
    FitReport
    """
    a_star = _true_tensor(truth)
    record = a_star is not None and cfg.record_trajectory
    traj = np.empty(cfg.iters + 1) if record else None
    f = f0

    def track(t, f):
        if record:
            diff = f.reconstruct() - a_star
            traj[t] = float(np.sum(diff * diff))

    # overflow is detected explicitly below, so the FP warnings carry no news
    with np.errstate(over="ignore", invalid="ignore"):
        track(0, f)
        for t in range(cfg.iters):
            if cfg.sequential:
                f = _sequential_step(f, data, model, cfg)
            else:
                f = rgd_step(f, _grad(model, f, data, cfg), cfg)
            if not f.is_finite():
                log.debug("divergence at iteration %d", t + 1)
                if raise_on_divergence:
                    raise DivergenceError(t + 1)
                return FitReport(final=f, traj_err_sq=traj[: t + 1] if record else None,
                                 converged=False, diverged=True, iterations=t + 1)
            track(t + 1, f)
            if record and not np.isfinite(traj[t + 1]):
                if raise_on_divergence:
                    raise DivergenceError(t + 1, "estimation error overflowed")
                return FitReport(final=f, traj_err_sq=traj[: t + 2], converged=False,
                                 diverged=True, iterations=t + 1)

    report = FitReport(final=f, traj_err_sq=traj, iterations=cfg.iters)
    if record and cfg.iters + 1 >= CONVERGENCE_WINDOW:
        n = data.n
        p_bar = max(f.shape)
        report.conv_stat = tail_std(traj)
        report.threshold = convergence_threshold(p_bar, n)
        report.converged = bool(report.conv_stat < report.threshold)
    return report
