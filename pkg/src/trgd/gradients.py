"""Entrywise truncation and robust partial gradients for the three models.

Every estimator forms the per-sample partial gradients with respect to the
core and each factor, clips each sample's contribution entrywise at ``tau``
and only then averages over samples. ``tau = inf`` gives the ordinary
sample-mean (vanilla) gradients.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .tensor import batched_mode_product, multi_mode_product

__all__ = [
    "GradientSet",
    "truncate",
    "linear_gradients",
    "logistic_gradients",
    "pca_gradients",
    "huber_gradients",
    "model_gradients",
    "response_mode_offset",
]


@dataclass(frozen=True)
class GradientSet:
    core_grad: np.ndarray
    factor_grads: tuple

    def is_finite(self):
        return bool(np.all(np.isfinite(self.core_grad)) and all(np.all(np.isfinite(g)) for g in self.factor_grads))


def _check_tau(tau):
    tau = float(tau)
    if not tau > 0:
        raise ValueError(f"truncation level must be positive, got {tau}")
    return tau


def truncate(m, tau):
    """``sgn(m) * min(|m|, tau)`` entrywise; ``tau = inf`` returns ``m`` unchanged."""
    tau = _check_tau(tau)
    m = np.asarray(m, dtype=float)
    if np.isinf(tau):
        return m
    return np.clip(m, -tau, tau)


def _robust_mean(per_sample, tau):
    if np.isinf(tau):
        return per_sample.mean(axis=0)
    clipped = np.clip(per_sample, -tau, tau)
    assert np.all(np.abs(clipped) <= tau)
    return clipped.mean(axis=0)


def response_mode_offset(k, d0):
    """Position of tensor mode ``k`` (1-based) among the response modes.

    Response ``Y_i`` carries modes ``d0+1, ..., d`` of the coefficient; mode
    ``k > d0`` is axis ``k - d0`` (1-based) of a single response.
    """
    if k <= d0:
        raise ValueError(f"mode {k} is a covariate mode for d0={d0}")
    return k - d0


def _leave_one_out(x, items):
    """Project a batch array along several axes, leaving out one axis at a time.

    ``items`` is a list of ``(axis, U)``; projecting an axis means
    ``x x_axis U^T``. Returns ``(loo, full)`` where ``loo[axis]`` has every
    listed axis projected except ``axis`` and ``full`` has all of them.
    Halving the set recursively touches the full-size array only twice.
    """
    if not items:
        return {}, x
    if len(items) == 1:
        axis, u = items[0]
        return {axis: x}, batched_mode_product(x, u, axis)
    mid = len(items) // 2
    left, right = items[:mid], items[mid:]
    x_right = x
    for axis, u in reversed(right):
        x_right = batched_mode_product(x_right, u, axis)
    loo, full = _leave_one_out(x_right, left)
    x_left = x
    for axis, u in reversed(left):
        x_left = batched_mode_product(x_left, u, axis)
    loo_right, _ = _leave_one_out(x_left, right)
    loo.update(loo_right)
    return loo, full


def _contract_except(a, b, axis, batch_b=True):
    """``sum over all non-batch axes but `axis`` of a[n, ...] * b[(n,) ...]``.

    ``a`` has shape ``(n, ..., p, ...)`` with ``p`` at ``axis``; ``b`` has the
    same layout with ``r`` at ``axis`` (and a leading ``n`` when
    ``batch_b``). Returns shape ``(n, p, r)``.
    """
    n = a.shape[0]
    am = np.moveaxis(a, axis, 1).reshape(n, a.shape[axis], -1)
    if batch_b:
        bm = np.moveaxis(b, axis, 1).reshape(n, b.shape[axis], -1)
        return am @ bm.transpose(0, 2, 1)
    bm = np.moveaxis(b, axis - 1, 0).reshape(b.shape[axis - 1], -1)
    return am @ bm.T


def _check_factors(f, xs_shape, d0):
    shape = f.shape
    if tuple(xs_shape) != tuple(shape[:d0]):
        raise ValueError(f"covariate shape {tuple(xs_shape)} does not match factors {shape[:d0]}")


def _linear_family(f, data, tau, residual_full=None):
    """Shared assembly for least squares and Huber gradients.

    With ``residual_full`` (a callable mapping the full-space residual to
    its clipped version) the residual is formed in the response space,
    transformed and then projected; otherwise it is formed directly from
    the projected variables.
    """
    d0 = data.d0
    d = f.order
    xs, ys = data.xs, data.ys
    n = xs.shape[0]
    _check_factors(f, xs.shape[1:], d0)
    if ys.shape[1:] != f.shape[d0:]:
        raise ValueError(f"response shape {ys.shape[1:]} does not match factors {f.shape[d0:]}")
    us = f.factors
    s = f.core
    grams = [u.T @ u for u in us]

    x_loo, xbar = _leave_one_out(xs, [(k + 1, us[k]) for k in range(d0)])
    r_cov = int(np.prod(s.shape[:d0]))
    resp_shape = s.shape[d0:]
    # z_i = <S, Xbar_i> over covariate modes, shape (n, r_{d0+1}, ..., r_d)
    z = (xbar.reshape(n, r_cov) @ s.reshape(r_cov, -1)).reshape((n,) + resp_shape)

    resp_items = [(k - d0 + 1, us[k]) for k in range(d0, d)]
    if residual_full is None:
        y_loo, ybar = _leave_one_out(ys, resp_items)
        resid = z
        for k in range(d0, d):
            resid = batched_mode_product(resid, grams[k], k - d0 + 1)
        resid = resid - ybar
        resid_loo = {}
        for k in range(d0, d):
            t = z
            for j in range(d0, d):
                t = batched_mode_product(t, us[j].T if j == k else grams[j], j - d0 + 1)
            resid_loo[k] = t - y_loo[k - d0 + 1]
    else:
        pred = z
        for k in range(d0, d):
            pred = batched_mode_product(pred, us[k].T, k - d0 + 1)
        clipped = residual_full(pred - ys)
        loo, resid = _leave_one_out(clipped, resp_items)
        resid_loo = {k: loo[k - d0 + 1] for k in range(d0, d)}

    # core: Xbar_i o R_i
    core_ps = (xbar.reshape(n, r_cov, 1) * resid.reshape(n, 1, -1)).reshape((n,) + s.shape)
    core_grad = _robust_mean(core_ps, tau)

    factor_grads = []
    if d0 < d:
        # v_i = <S, R_i> over the response modes, shape (n, r_1, ..., r_{d0})
        v = (resid.reshape(n, 1, -1) * s.reshape(1, r_cov, -1)).sum(axis=2).reshape((n,) + s.shape[:d0])
    else:
        v = resid.reshape((n,) + (1,) * d0) * s[None]
    for k in range(d0):
        per = _contract_except(x_loo[k + 1], v, k + 1)
        factor_grads.append(_robust_mean(per, tau))
    for k in range(d0, d):
        # contract Xbar_i against S over covariate modes gives z_i; pair with the residual
        per = _contract_except(resid_loo[k], z, k - d0 + 1)
        factor_grads.append(_robust_mean(per, tau))
    return GradientSet(core_grad, tuple(factor_grads))


def linear_gradients(f, data, tau=np.inf):
    """Robust partial gradients of ``(1/2)||Y_i - <A, X_i>||^2``.

    Parameters
    ----------
    f : TuckerFactors
        Current estimate; the first ``data.d0`` modes act on the covariate.
    data : RegressionData
    tau : float
        Entrywise truncation level for every per-sample contribution.

    Returns
    -------
    GradientSet
    """
    tau = _check_tau(tau)
    return _linear_family(f, data, tau)


def huber_gradients(f, data, nu):
    """Gradients of the Huber loss: residuals clipped at ``nu``, covariates untouched."""
    nu = _check_tau(nu)
    clip = (lambda r: r) if np.isinf(nu) else (lambda r: np.clip(r, -nu, nu))
    return _linear_family(f, data, np.inf, residual_full=clip)


def logistic_gradients(f, data, tau=np.inf):
    """Robust partial gradients of the logistic negative log-likelihood."""
    tau = _check_tau(tau)
    xs = data.xs
    n = xs.shape[0]
    d = f.order
    _check_factors(f, xs.shape[1:], d)
    ys = np.asarray(data.ys, dtype=float)
    if not np.all((ys == 0) | (ys == 1)):
        raise ValueError("labels must be 0 or 1")
    s = f.core
    x_loo, xbar = _leave_one_out(xs, [(k + 1, f.factors[k]) for k in range(d)])
    score = xbar.reshape(n, -1) @ s.reshape(-1)
    # expit is evaluated stably for scores of either sign
    w = expit(score) - ys
    wb = w.reshape((n,) + (1,) * d)
    core_grad = _robust_mean(wb * xbar, tau)
    factor_grads = []
    for k in range(d):
        per = _contract_except(x_loo[k + 1], s, k + 1, batch_b=False)
        factor_grads.append(_robust_mean(w[:, None, None] * per, tau))
    return GradientSet(core_grad, tuple(factor_grads))


def pca_gradients(f, data, tau=np.inf):
    """Robust partial gradients of ``(1/2)||Y_i - S x_j U_j||_F^2`` over replicates."""
    tau = _check_tau(tau)
    ys = data.ys
    if ys.shape[1:] != f.shape:
        raise ValueError(f"observation shape {ys.shape[1:]} does not match factors {f.shape}")
    d = f.order
    us = f.factors
    s = f.core
    grams = [u.T @ u for u in us]
    y_loo, ybar = _leave_one_out(ys, [(k + 1, us[k]) for k in range(d)])
    core_grad = _robust_mean(multi_mode_product(s, grams)[None] - ybar, tau)
    factor_grads = []
    for k in range(d):
        mats = [us[k] if j == k else grams[j] for j in range(d)]
        fitted = multi_mode_product(s, mats)
        per = _contract_except(fitted[None] - y_loo[k + 1], s, k + 1, batch_b=False)
        factor_grads.append(_robust_mean(per, tau))
    return GradientSet(core_grad, tuple(factor_grads))


def model_gradients(model, f, data, tau=np.inf, nu=None):
    """Dispatch on ``model`` in ``{"linear", "huber", "logistic", "pca"}``.

    ``huber`` on :class:`~trgd.data.PcaData` clips the entrywise residual
    ``S x_j U_j - Y_i`` at ``nu`` (the PCA analogue of Huber regression).
    """
    if model == "linear":
        return linear_gradients(f, data, tau)
    if model == "logistic":
        return logistic_gradients(f, data, tau)
    if model == "pca":
        return pca_gradients(f, data, tau)
    if model == "huber":
        if nu is None:
            raise ValueError("huber gradients need nu")
        if hasattr(data, "d0"):
            return huber_gradients(f, data, nu)
        return pca_huber_gradients(f, data, nu)
    raise ValueError(f"unknown model {model!r}")


def pca_huber_gradients(f, data, nu):
    """Huber-loss gradients for tensor PCA: residual entries clipped at ``nu``."""
    nu = _check_tau(nu)
    ys = data.ys
    if ys.shape[1:] != f.shape:
        raise ValueError(f"observation shape {ys.shape[1:]} does not match factors {f.shape}")
    d = f.order
    us = f.factors
    resid = f.reconstruct()[None] - ys
    if not np.isinf(nu):
        resid = np.clip(resid, -nu, nu)
    loo, full = _leave_one_out(resid, [(k + 1, us[k]) for k in range(d)])
    core_grad = full.mean(axis=0)
    factor_grads = [
        _contract_except(loo[k + 1], f.core, k + 1, batch_b=False).mean(axis=0) for k in range(d)
    ]
    return GradientSet(core_grad, tuple(factor_grads))
