"""Random data for the tensor regression, logistic and PCA models.

Samples are stored stacked along a leading axis: covariates of shape
``(n, p_1, ..., p_{d0})``, responses of shape ``(n, p_{d0+1}, ..., p_d)``
(``(n,)`` for scalar responses).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .tensor import batched_mode_product

__all__ = [
    "DistSpec",
    "RegressionData",
    "LogisticData",
    "PcaData",
    "sample_student_t",
    "sigma_theta",
    "sample_tensor",
    "generate_regression",
    "generate_logistic",
    "generate_pca",
    "sample_cap_directions",
    "estimate_local_moment",
    "spawn_rng",
]

FAMILIES = ("gaussian_iid", "student_t", "gaussian_correlated", "gaussian_equicorrelated")


@dataclass(frozen=True)
class DistSpec:
    """Entry distribution for covariates or noise.

    ``gaussian_iid``: iid N(0, 1). ``student_t``: iid t with ``dof`` degrees
    of freedom. ``gaussian_correlated``: Gaussian with covariance
    ``Sigma_theta`` along every mode (Kronecker structure).
    ``gaussian_equicorrelated``: Gaussian with vectorised covariance
    ``(1 - rho) I + rho 1 1^T``. Every draw is multiplied by ``scale``.
    """

    family: str = "gaussian_iid"
    dof: float = None
    theta: float = None
    rho: float = None
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "student_t" and (self.dof is None or self.dof <= 1):
            raise ValueError("student_t needs dof > 1")
        if self.family == "gaussian_correlated" and (
            self.theta is None or not 0.0 <= self.theta <= np.pi / 2 + 1e-12
        ):
            raise ValueError("gaussian_correlated needs theta in [0, pi/2]")
        if self.family == "gaussian_equicorrelated" and (self.rho is None or not 0.0 <= self.rho < 1.0):
            raise ValueError("gaussian_equicorrelated needs rho in [0, 1)")
        if self.scale < 0:
            raise ValueError("scale must be non-negative")

    @classmethod
    def gaussian(cls, scale=1.0):
        return cls("gaussian_iid", scale=scale)

    @classmethod
    def student_t(cls, dof, scale=1.0):
        return cls("student_t", dof=dof, scale=scale)

    @classmethod
    def correlated(cls, theta, scale=1.0):
        return cls("gaussian_correlated", theta=theta, scale=scale)

    @classmethod
    def equicorrelated(cls, rho, scale=1.0):
        return cls("gaussian_equicorrelated", rho=rho, scale=scale)

    def label(self):
        if self.family == "student_t":
            return f"t{self.dof:g}"
        if self.family == "gaussian_correlated":
            return f"corr{self.theta:.4g}"
        if self.family == "gaussian_equicorrelated":
            return f"equi{self.rho:g}"
        return "N"


@dataclass(frozen=True)
class RegressionData:
    """``Y_i = <A, X_i> + E_i`` with the first ``d0`` modes of ``A`` on the covariate."""

    d0: int
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        if self.xs.shape[0] != self.ys.shape[0]:
            raise ValueError("covariates and responses differ in sample count")
        if self.xs.ndim - 1 != self.d0:
            raise ValueError(f"covariates have order {self.xs.ndim - 1}, expected d0={self.d0}")

    @property
    def n(self):
        return self.xs.shape[0]

    def subset(self, idx):
        return RegressionData(self.d0, self.xs[idx], self.ys[idx])


@dataclass(frozen=True)
class LogisticData:
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        ys = np.asarray(self.ys)
        if ys.ndim != 1 or ys.shape[0] != self.xs.shape[0]:
            raise ValueError("labels must be a vector with one entry per covariate")
        if not np.all((ys == 0) | (ys == 1)):
            raise ValueError("labels must be 0 or 1")

    @property
    def n(self):
        return self.xs.shape[0]

    def subset(self, idx):
        return LogisticData(self.xs[idx], self.ys[idx])


@dataclass(frozen=True)
class PcaData:
    """``n`` noisy observations ``Y_i = A + E_i`` of one low-rank tensor."""

    ys: np.ndarray

    def __post_init__(self):
        if self.ys.ndim < 2 or self.ys.shape[0] < 1:
            raise ValueError("PCA data needs shape (n, p_1, ..., p_d) with n >= 1")

    @property
    def n(self):
        return self.ys.shape[0]

    def subset(self, idx):
        return PcaData(self.ys[idx])


def spawn_rng(master_seed, *keys):
    """Independent generator for stream ``keys`` under ``master_seed``.

    Streams are derived with :class:`numpy.random.SeedSequence`, so stream
    ``(seed, i)`` is reproducible and unrelated to ``(seed, j)``.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed)] + [int(k) for k in keys]))


def sample_student_t(dof, rng, size=None):
    """Student-t draws as ``z / sqrt(chi2_dof / dof)``."""
    if dof <= 1:
        raise ValueError("dof must exceed 1")
    z = rng.standard_normal(size)
    c = rng.chisquare(dof, size)
    return z / np.sqrt(c / dof)


def sigma_theta(theta, p=10):
    """``0.5 I + 0.5 v v^T`` with ``v = sin(theta) 1 + cos(theta) w``, ``w = (1, -1, 1, ...)``."""
    if p % 2:
        raise ValueError("p must be even")
    w = np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    v = np.sin(theta) * np.ones(p) + np.cos(theta) * w
    return 0.5 * np.eye(p) + 0.5 * np.outer(v, v)


def sample_tensor(dist, shape, n, rng):
    """Draw ``n`` tensors of ``shape`` from ``dist``; returns shape ``(n, *shape)``."""
    shape = tuple(shape)
    full = (n,) + shape
    if dist.family == "gaussian_iid":
        out = rng.standard_normal(full)
    elif dist.family == "student_t":
        out = sample_student_t(dist.dof, rng, full)
    elif dist.family == "gaussian_equicorrelated":
        common = rng.standard_normal((n,) + (1,) * len(shape))
        out = np.sqrt(1.0 - dist.rho) * rng.standard_normal(full) + np.sqrt(dist.rho) * common
    else:
        out = rng.standard_normal(full)
        # per-mode Cholesky factors give covariance kron(Sigma, ..., Sigma)
        for axis, p in enumerate(shape, start=1):
            chol = np.linalg.cholesky(sigma_theta(dist.theta, p))
            out = batched_mode_product(out, chol.T, axis)
    if dist.scale != 1.0:
        out = out * dist.scale
    return out


def generate_regression(truth, n, x_dist, e_dist, d0, rng):
    """Covariates, noise and responses for the tensor linear model."""
    a = truth.tensor if hasattr(truth, "tensor") else np.asarray(truth)
    if not 1 <= d0 <= a.ndim:
        raise ValueError(f"d0={d0} incompatible with order-{a.ndim} coefficient")
    xshape, yshape = a.shape[:d0], a.shape[d0:]
    xs = sample_tensor(x_dist, xshape, n, rng)
    signal = xs.reshape(n, -1) @ a.reshape(int(np.prod(xshape)), -1)
    signal = signal.reshape((n,) + yshape)
    if e_dist.scale == 0.0:
        return RegressionData(d0, xs, signal)
    es = sample_tensor(e_dist, yshape, n, rng)
    return RegressionData(d0, xs, signal + es)


def generate_logistic(truth, n, x_dist, rng):
    """Binary labels with ``P(y = 1 | X) = sigmoid(<X, A>)``."""
    a = truth.tensor if hasattr(truth, "tensor") else np.asarray(truth)
    xs = sample_tensor(x_dist, a.shape, n, rng)
    scores = xs.reshape(n, -1) @ a.reshape(-1)
    ys = (rng.random(n) < expit(scores)).astype(float)
    return LogisticData(xs, ys)


def generate_pca(truth, n, e_dist, rng):
    a = truth.tensor if hasattr(truth, "tensor") else np.asarray(truth)
    if e_dist.scale == 0.0:
        return PcaData(np.broadcast_to(a, (n,) + a.shape).copy())
    return PcaData(a + sample_tensor(e_dist, a.shape, n, rng))


def _orthonormal_basis(u):
    q, _ = np.linalg.qr(np.asarray(u, dtype=float))
    return q


def cap_deviation(v, u_star):
    """``sin arccos ||P v||`` for a unit vector ``v`` and subspace ``col(u_star)``."""
    q = _orthonormal_basis(u_star)
    v = np.asarray(v, dtype=float)
    # the residual norm is accurate near 0, unlike sqrt(1 - cos^2)
    return float(np.linalg.norm(v - q @ (q.T @ v)) / np.linalg.norm(v))


def sample_cap_directions(u_star, n_dirs, rng):
    """Raw draws for directions around ``col(u_star)``.

    Returns ``(inside, outside, s)``: unit vectors uniform on the sphere of
    the subspace, unit vectors uniform on the sphere of its complement, and
    mixing radii uniform on ``[0, 1]``. A direction at radius ``s`` is
    ``sqrt(1 - s^2) inside + s outside``.
    """
    q = _orthonormal_basis(u_star)
    p, r = q.shape
    g = rng.standard_normal((n_dirs, r))
    inside = (g / np.linalg.norm(g, axis=1, keepdims=True)) @ q.T
    h = rng.standard_normal((n_dirs, p))
    h = h - (h @ q) @ q.T
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    outside = np.where(norms > 0, h / np.where(norms > 0, norms, 1.0), 0.0)
    s = rng.random(n_dirs)
    return inside, outside, s


def _kron_rows(vectors):
    # vectors: list over modes of (m, p_j); returns (m, prod p_j) in C order
    out = vectors[0]
    for v in vectors[1:]:
        out = (out[:, :, None] * v[:, None, :]).reshape(out.shape[0], -1)
    return out


def estimate_local_moment(
    dist,
    factors,
    eta,
    delta,
    mode=0,
    n_dirs=200,
    n_samples=100_000,
    rng=None,
    extra_directions=(),
    chunk=4096,
):
    """Monte Carlo lower bound on a local moment of tensors drawn from ``dist``.

    Parameters
    ----------
    dist : DistSpec
        Distribution of the random tensor.
    factors : sequence of ndarray
        True factor matrices ``U_j^*`` (their column spaces define the caps).
    eta : float
        Moment order.
    delta : float
        Cap radius in ``[0, 1]``.
    mode : int
        0 for the all-mode moment, ``k`` for the mode-k-excluded moment.
    n_dirs : int
        Number of candidate direction tuples.
    n_samples : int
        Tensor draws, shared by all directions.
    rng : numpy.random.Generator
    extra_directions : sequence of tuples of vectors
        Direction tuples forced into the search; each must lie in the caps.

    Notes
    -----
    Every candidate tuple contributes its in-subspace version (radius 0)
    and, when all its mixing radii are at most ``delta``, its mixed version.
    The candidate sets are therefore nested in ``delta`` for a fixed ``rng``
    state and the estimate is non-decreasing in ``delta``.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if rng is None:
        rng = np.random.default_rng()
    shape = tuple(u.shape[0] for u in factors)
    d = len(shape)
    if not 0 <= mode <= d:
        raise ValueError(f"mode {mode} out of range")
    modes = [j for j in range(d) if j != mode - 1]

    draws = [sample_cap_directions(factors[j], n_dirs, rng) for j in modes]
    keep = np.max(np.stack([s for _, _, s in draws]), axis=0) <= delta
    per_mode = []
    for inside, outside, s in draws:
        mixed = np.sqrt(1.0 - s[keep, None] ** 2) * inside[keep] + s[keep, None] * outside[keep]
        per_mode.append(np.vstack([inside, mixed]))
    for tup in extra_directions:
        tup = [np.asarray(v, dtype=float) for v in tup]
        if len(tup) != len(modes):
            raise ValueError("forced direction tuple has the wrong number of modes")
        for i, (j, v) in enumerate(zip(modes, tup)):
            if abs(np.linalg.norm(v) - 1.0) > 1e-10 or cap_deviation(v, factors[j]) > delta + 1e-10:
                raise ValueError("forced direction lies outside the cap")
            per_mode[i] = np.vstack([per_mode[i], v[None, :]])
    for i, j in enumerate(modes):
        q = _orthonormal_basis(factors[j])
        vs = per_mode[i]
        sines = np.linalg.norm(vs - (vs @ q) @ q.T, axis=1) / np.linalg.norm(vs, axis=1)
        assert np.all(sines <= delta + 1e-10)

    if mode == 0:
        weights = _kron_rows(per_mode)
    else:
        # coordinate vector on the excluded mode: every l at once
        p_k = shape[mode - 1]
        eye = np.eye(p_k)
        blocks = []
        for l in range(p_k):
            vecs = list(per_mode)
            vecs.insert(mode - 1, np.repeat(eye[l : l + 1], per_mode[0].shape[0], axis=0))
            blocks.append(_kron_rows(vecs))
        weights = np.vstack(blocks)

    acc = np.zeros(weights.shape[0])
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        t = sample_tensor(dist, shape, m, rng).reshape(m, -1)
        acc += np.sum(np.abs(t @ weights.T) ** eta, axis=0)
        done += m
    return float(np.max(acc / n_samples))
