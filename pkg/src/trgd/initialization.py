"""Data-driven starting points for the descent loop.

Linear and logistic models follow the same three steps: shrink each
vectorised covariate to norm at most ``omega``, fit a nuclear-norm penalised
matrix estimator (Huber or logistic loss) by proximal gradient, and turn the
matrix back into a tensor whose Tucker factors are found by HOOI. Tensor PCA
uses HOOI on the entrywise median of the replicates.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .tensor import matricize, dematricize
from .tucker import TuckerFactors, hooi

__all__ = [
    "InitConfig",
    "ProxResult",
    "truncate_vector_norm",
    "svt",
    "nuclear_huber",
    "nuclear_logistic",
    "median_of_means",
    "default_linear_config",
    "default_logistic_config",
    "balanced_unfolding_mode",
    "init_linear",
    "init_logistic",
    "init_pca",
    "rebalance",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InitConfig:
    """Tuning of the penalised matrix estimator.

    ``huber_delta`` is ignored by the logistic solver. ``prox_step=None``
    uses ``1/L`` with ``L`` from power iteration on the design Gram.
    """

    omega: float = np.inf
    huber_delta: float = np.inf
    lambda_nuc: float = 0.0
    prox_iters: int = 2000
    prox_step: float = None
    prox_tol: float = 1e-9
    accelerate: bool = False

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.huber_delta > 0:
            raise ValueError("huber_delta must be positive")
        if self.lambda_nuc < 0:
            raise ValueError("lambda_nuc must be non-negative")
        if self.prox_iters < 1:
            raise ValueError("prox_iters must be >= 1")
        if self.prox_step is not None and not self.prox_step > 0:
            raise ValueError("prox_step must be positive")
        if not self.prox_tol > 0:
            raise ValueError("prox_tol must be positive")

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class ProxResult:
    """Output of a proximal-gradient solve.

    ``objective`` holds the penalised objective at the start and after every
    iteration. ``converged`` is False when the iteration cap was hit first,
    in which case ``estimate`` is the best iterate seen.
    """

    estimate: np.ndarray
    objective: np.ndarray
    converged: bool
    iterations: int


def truncate_vector_norm(x, omega):
    """Scale each row of ``x`` to Euclidean norm ``min(||x_i||, omega)``.

    A 1-d input is treated as a single vector. Zero rows stay zero.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = x.reshape(1, -1) if single else x.reshape(x.shape[0], -1)
    norms = np.sqrt(np.sum(rows * rows, axis=1))
    scale = np.ones_like(norms)
    big = norms > omega
    scale[big] = omega / norms[big]
    out = rows * scale[:, None]
    return out.reshape(x.shape)


def svt(m, threshold):
    """Singular value soft-thresholding, the prox of ``threshold * ||.||_nuc``."""
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    s = np.maximum(s - threshold, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


def _nuclear_norm(m):
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def _gram_norm(x, iters=100, tol=1e-10, seed=0):
    """Largest eigenvalue of ``x^T x / n`` by power iteration."""
    n = x.shape[0]
    v = np.random.default_rng(seed).normal(size=x.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = x.T @ (x @ v) / n
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    # power iteration approaches from below; a small margin keeps 1/L safe
    return lam * 1.01


def _huber(r, delta):
    if np.isinf(delta):
        return 0.5 * r * r
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * a - 0.5 * delta * delta)


def _proximal_gradient(smooth, grad, shape, lipschitz, cfg):
    """ISTA (or FISTA with ``cfg.accelerate``) with an SVT prox step."""
    step = cfg.prox_step if cfg.prox_step is not None else 1.0 / max(lipschitz, np.finfo(float).tiny)
    lam = cfg.lambda_nuc

    def objective(b):
        return smooth(b) + lam * _nuclear_norm(b)

    b = np.zeros(shape)
    obj = objective(b)
    history = [obj]
    best, best_obj = b, obj
    y, t_mom = b, 1.0
    converged = False
    it = 0
    for it in range(1, cfg.prox_iters + 1):
        point = y if cfg.accelerate else b
        new = svt(point - step * grad(point), step * lam)
        new_obj = objective(new)
        if cfg.accelerate:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            y = new + ((t_mom - 1.0) / t_next) * (new - b)
            t_mom = t_next
        elif new_obj > obj + 1e-12 * max(1.0, abs(obj)):
            # a 1/L step cannot increase the objective; if it does, L was underestimated
            raise ArithmeticError("proximal gradient objective increased; step size too large")
        history.append(new_obj)
        change = abs(obj - new_obj) / max(abs(obj), np.finfo(float).tiny)
        b, obj = new, new_obj
        if obj < best_obj:
            best, best_obj = b, obj
        if change < cfg.prox_tol:
            converged = True
            break
    if not converged:
        log.warning("proximal gradient stopped at the iteration cap (%d)", cfg.prox_iters)
    return ProxResult(best, np.asarray(history), converged, it)


def nuclear_huber(xs, ys, cfg):
    """Nuclear-norm penalised Huber regression ``y_i ~ B x_i``.

    Minimises ``(1/n) sum_i sum_j rho_delta(y_ij - (B x_i)_j) + lambda ||B||_nuc``
    over ``B`` of shape ``(q, p)``.

    Parameters
    ----------
    xs : ndarray, shape (n, p)
        (Truncated) flat covariates.
    ys : ndarray, shape (n,) or (n, q)
        Flat responses; a 1-d array is a scalar response (``q = 1``).
    cfg : InitConfig

    Returns
    -------
    ProxResult
        ``estimate`` has shape ``(q, p)``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("xs must be a nonempty (n, p) array")
    if ys.ndim == 1:
        ys = ys[:, None]
    if ys.shape[0] != xs.shape[0]:
        raise ValueError("xs and ys disagree on n")
    n = xs.shape[0]
    delta = cfg.huber_delta

    def smooth(b):
        return float(np.sum(_huber(ys - xs @ b.T, delta))) / n

    def grad(b):
        r = xs @ b.T - ys
        if not np.isinf(delta):
            r = np.clip(r, -delta, delta)
        return r.T @ xs / n

    return _proximal_gradient(smooth, grad, (ys.shape[1], xs.shape[1]), _gram_norm(xs), cfg)


def nuclear_logistic(xs, ys, shape, cfg):
    """Nuclear-norm penalised logistic regression with matrix coefficient.

    ``xs`` holds the (truncated) covariates already arranged as matrices
    of ``shape`` ``(q1, q2)``; the score of sample ``i`` is ``<B, X_i>``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = xs.shape[0]
    if n == 0:
        raise ValueError("empty data")
    flat = xs.reshape(n, -1)
    if flat.shape[1] != shape[0] * shape[1]:
        raise ValueError("covariates do not match the coefficient shape")

    def smooth(b):
        s = flat @ b.reshape(-1)
        return float(np.mean(np.logaddexp(0.0, s) - ys * s))

    def grad(b):
        w = expit(flat @ b.reshape(-1)) - ys
        return (w @ flat / n).reshape(shape)

    return _proximal_gradient(smooth, grad, shape, 0.25 * _gram_norm(flat), cfg)


def median_of_means(values, blocks=10, seed=0):
    """Median of block means after a seeded shuffle; robust to a few huge values."""
    values = np.asarray(values, dtype=float).ravel()
    blocks = int(max(1, min(blocks, values.size)))
    perm = np.random.default_rng(seed).permutation(values.size)
    return float(np.median([chunk.mean() for chunk in np.array_split(values[perm], blocks)]))


def _moment(x, order):
    # per-sample average of |x_ij|^order, aggregated by median-of-means
    flat = np.abs(np.asarray(x, dtype=float).reshape(len(x), -1)) ** order
    return median_of_means(flat.mean(axis=1))


def default_linear_config(xs_flat, ys_flat, lam=1.0, eps=1.0, **kw):
    """Order-formula tuning with all constants set to one.

    ``omega = (p_x^lam M_x n)^{1/(2+2lam)}``,
    ``delta = (n M_e / log(p_x p_y))^{1/(1+eps)}`` and
    ``lambda_nuc = M_e^{1/(1+eps)} (log(p_x p_y)/n)^{eps/(1+eps)}``, with
    ``M_x`` the ``(2+2lam)``-th and ``M_e`` the ``(1+eps)``-th absolute moments
    estimated by median-of-means (the response, centred at its median,
    stands in for the unobserved noise).
    """
    n, px = xs_flat.shape
    ys_flat = ys_flat.reshape(n, -1)
    py = ys_flat.shape[1]
    m_x = _moment(xs_flat, 2 + 2 * lam)
    m_e = _moment(ys_flat - np.median(ys_flat, axis=0), 1 + eps)
    logp = np.log(px * py) if px * py > 1 else 1.0
    return InitConfig(
        omega=(px ** lam * m_x * n) ** (1.0 / (2 + 2 * lam)),
        huber_delta=(n * m_e / logp) ** (1.0 / (1 + eps)),
        lambda_nuc=m_e ** (1.0 / (1 + eps)) * (logp / n) ** (eps / (1 + eps)),
        **kw,
    )


def default_logistic_config(xs_flat, q_shape, lam=1.0, **kw):
    """``omega`` as for the linear model, ``lambda_nuc = sqrt(log(q1 q2)/n)``."""
    n, px = xs_flat.shape
    m_x = _moment(xs_flat, 2 + 2 * lam)
    q = q_shape[0] * q_shape[1]
    return InitConfig(
        omega=(px ** lam * m_x * n) ** (1.0 / (2 + 2 * lam)),
        lambda_nuc=np.sqrt(np.log(max(q, 2)) / n),
        **kw,
    )


def rebalance(f, b):
    """``(b^{-d} G, b U_1, ..., b U_d)`` for orthonormal ``U_k``."""
    d = f.order
    return TuckerFactors(f.core / b ** d, tuple(b * u for u in f.factors))


def balanced_unfolding_mode(shape):
    """1-based mode whose unfolding has the smallest ``|rows - cols|``; ties go to the lowest mode."""
    total = int(np.prod(shape))
    gaps = [abs(p - total // p) for p in shape]
    return int(np.argmin(gaps)) + 1


def init_linear(data, ranks, b, cfg=None, lam=1.0, eps=1.0, return_details=False):
    """Truncated nuclear-Huber estimate, reshaped to a tensor, then HOOI.

    The matrix coefficient is ``B = mat(A)`` with rows indexed by the
    response entries and columns by the covariate entries (both in C order),
    so ``vec(Y_i) = B vec(X_i)``.
    """
    n = data.n
    cov_shape = data.xs.shape[1:]
    resp_shape = data.ys.shape[1:]
    xs = data.xs.reshape(n, -1)
    ys = data.ys.reshape(n, -1)
    if cfg is None:
        cfg = default_linear_config(xs, ys, lam=lam, eps=eps)
    xt = truncate_vector_norm(xs, cfg.omega)
    res = nuclear_huber(xt, ys, cfg)
    a = res.estimate.T.reshape(cov_shape + resp_shape)
    f = rebalance(hooi(a, ranks), b)
    return (f, res, a) if return_details else f


def init_logistic(data, ranks, b, cfg=None, lam=1.0, return_details=False):
    """Truncated nuclear-logistic estimate on the most square unfolding, then HOOI."""
    n = data.n
    shape = data.xs.shape[1:]
    mode = balanced_unfolding_mode(shape)
    mats = np.stack([matricize(x, mode) for x in data.xs])
    q_shape = mats.shape[1:]
    flat = mats.reshape(n, -1)
    if cfg is None:
        cfg = default_logistic_config(flat, q_shape, lam=lam)
    xt = truncate_vector_norm(flat, cfg.omega).reshape(mats.shape)
    res = nuclear_logistic(xt, data.ys, q_shape, cfg)
    a = dematricize(res.estimate, mode, shape)
    f = rebalance(hooi(a, ranks), b)
    return (f, res, a) if return_details else f


def init_pca(data, ranks, b, aggregate="median"):
    """HOOI on the entrywise median (or mean) of the replicates, rebalanced to ``b``."""
    ys = data.ys
    if ys.shape[0] == 1:
        center = ys[0]
    elif aggregate == "median":
        center = np.median(ys, axis=0)
    elif aggregate == "mean":
        center = ys.mean(axis=0)
    else:
        raise ValueError(f"unknown aggregate {aggregate!r}")
    return rebalance(hooi(center, ranks), b)
