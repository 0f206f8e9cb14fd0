"""Tucker factor containers, HOSVD/HOOI and the rotation-invariant error."""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .tensor import as_tensor, matricize, multi_mode_product

__all__ = [
    "TuckerFactors",
    "GroundTruth",
    "reconstruct",
    "hosvd",
    "hooi",
    "err_metric",
    "subspace_angle",
    "leading_left_singular_vectors",
    "make_ground_truth",
    "rank_one_truth",
]


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor ``core`` (r_1 x ... x r_d) with factor matrices ``U_k`` (p_k x r_k)."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = np.asarray(self.core, dtype=float)
        factors = tuple(np.asarray(u, dtype=float) for u in self.factors)
        if core.ndim != len(factors):
            raise ValueError(f"core of order {core.ndim} needs {core.ndim} factors, got {len(factors)}")
        for k, u in enumerate(factors):
            if u.ndim != 2 or u.shape[1] != core.shape[k]:
                raise ValueError(f"factor {k + 1} has shape {u.shape}, core mode size {core.shape[k]}")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def order(self):
        return self.core.ndim

    @property
    def ranks(self):
        return self.core.shape

    @property
    def shape(self):
        return tuple(u.shape[0] for u in self.factors)

    def reconstruct(self):
        return reconstruct(self)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.core)) and all(np.all(np.isfinite(u)) for u in self.factors))

    def copy(self):
        return TuckerFactors(self.core.copy(), tuple(u.copy() for u in self.factors))


@dataclass(frozen=True)
class GroundTruth:
    """True Tucker model with b-balanced factors (``U_k^T U_k = b^2 I``).

    ``sigma_bar`` and ``sigma_min`` are the largest and smallest nonzero
    mode-k singular values of the reconstructed tensor over all modes.
    """

    factors: TuckerFactors
    b: float
    sigma_bar: float
    sigma_min: float

    @property
    def kappa(self):
        return self.sigma_bar / self.sigma_min

    @property
    def tensor(self):
        return self.factors.reconstruct()

    @property
    def shape(self):
        return self.factors.shape

    @property
    def ranks(self):
        return self.factors.ranks


def reconstruct(f):
    """Full tensor ``S x_1 U_1 x_2 ... x_d U_d``."""
    return multi_mode_product(f.core, f.factors)


def _fix_signs(u):
    # deterministic SVD output: largest-magnitude entry of every column is positive
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def leading_left_singular_vectors(m, r):
    """Top-``r`` left singular vectors of ``m`` with the sign convention applied."""
    u, _, _ = np.linalg.svd(m, full_matrices=False)
    return _fix_signs(u[:, :r])


def _check_ranks(shape, ranks):
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(shape):
        raise ValueError(f"{len(ranks)} ranks given for an order-{len(shape)} tensor")
    for k, (p, r) in enumerate(zip(shape, ranks)):
        if not 1 <= r <= p:
            raise ValueError(f"rank {r} invalid for mode {k + 1} of size {p}")
    return ranks


def hosvd(t, ranks):
    """Truncated higher-order SVD."""
    t = as_tensor(t)
    ranks = _check_ranks(t.shape, ranks)
    us = [leading_left_singular_vectors(matricize(t, k + 1), r) for k, r in enumerate(ranks)]
    core = multi_mode_product(t, us, transpose=True)
    return TuckerFactors(core, tuple(us))


def hooi(t, ranks, iters=50, tol=1e-10, full_output=False):
    """Higher-order orthogonal iteration started from :func:`hosvd`.

    Parameters
    ----------
    t : ndarray
        Tensor to approximate.
    ranks : sequence of int
        Tucker ranks.
    iters : int
        Maximum number of sweeps over all modes.
    tol : float
        Stop once the relative decrease of the residual over a sweep is
        below ``tol``.
    full_output : bool
        Also return the residual ``||t - reconstruct||_F`` after the HOSVD
        start and after every sweep.

    Returns
    -------
    TuckerFactors, or ``(TuckerFactors, residuals)`` when ``full_output``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    t = as_tensor(t)
    ranks = _check_ranks(t.shape, ranks)
    f = hosvd(t, ranks)
    us = list(f.factors)

    def residual(factors, core):
        # explicit difference; ||t||^2 - ||S||^2 cancels badly near convergence
        return float(np.linalg.norm(t - multi_mode_product(core, factors)))

    # a residual at rounding level means the input has exactly these ranks
    exact = 1e-13 * max(float(np.linalg.norm(t)), np.finfo(float).tiny)
    history = [residual(us, f.core)]
    core = f.core
    for _ in range(iters):
        for k in range(t.ndim):
            others = [None if j == k else u for j, u in enumerate(us)]
            proj = multi_mode_product(t, others, transpose=True)
            us[k] = leading_left_singular_vectors(matricize(proj, k + 1), ranks[k])
        core = multi_mode_product(t, us, transpose=True)
        history.append(residual(us, core))
        prev, cur = history[-2], history[-1]
        if cur <= exact or prev - cur <= tol * max(prev, np.finfo(float).tiny):
            break
    out = TuckerFactors(core, tuple(us))
    return (out, history) if full_output else out


def err_metric(f, truth):
    """Rotation-aligned estimation error of ``f`` against ``truth``.

    Each factor is first aligned to its true counterpart by orthogonal
    Procrustes, ``O_k = argmin ||U_k - U_k^* O||_F``. The per-mode choices
    ignore the core term, so the signs of the rotations on rank-1 modes
    (where the orthogonal group is just ``{+1, -1}``) are then searched
    jointly. The result is
    ``sum_k ||U_k - U_k^* O_k||_F^2 + ||S - S^* x_k O_k^T||_F^2``: the exact
    joint minimum when every rank is 1 and an upper bound on it otherwise.
    """
    star = truth.factors if isinstance(truth, GroundTruth) else truth
    if f.ranks != star.ranks or f.shape != star.shape:
        raise ValueError(f"estimate ranks/shape {f.ranks}/{f.shape} do not match truth {star.ranks}/{star.shape}")
    rotations = [orthogonal_procrustes(u_star, u)[0] for u, u_star in zip(f.factors, star.factors)]
    flippable = [k for k, r in enumerate(f.ranks) if r == 1]
    best = np.inf
    for signs in itertools.product((1.0, -1.0), repeat=len(flippable)):
        rots = list(rotations)
        for k, s in zip(flippable, signs):
            rots[k] = s * rots[k]
        total = sum(float(np.sum((u - u_star @ o) ** 2)) for u, u_star, o in zip(f.factors, star.factors, rots))
        rotated_core = multi_mode_product(star.core, [o.T for o in rots])
        total += float(np.sum((f.core - rotated_core) ** 2))
        best = min(best, total)
    return best


def subspace_angle(u, u_star):
    """Sine of the largest principal angle between ``col(u)`` and ``col(u_star)``."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    u_star = np.atleast_2d(np.asarray(u_star, dtype=float))
    if u.shape != u_star.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {u_star.shape}")
    bases = []
    for m in (u, u_star):
        q, s, _ = np.linalg.svd(m, full_matrices=False)
        if s[-1] <= s[0] * 1e-12 or s[0] == 0.0:
            raise ValueError("rank-deficient basis")
        bases.append(q)
    q, q_star = bases
    resid = q - q_star @ (q_star.T @ q)
    return float(min(np.linalg.norm(resid, 2), 1.0))


def _mode_singular_values(t):
    values = [np.linalg.svd(matricize(t, k + 1), compute_uv=False) for k in range(t.ndim)]
    return values


def make_ground_truth(core, factors, b=1.0):
    """Build a b-balanced :class:`GroundTruth` from any Tucker representation.

    Factors are orthonormalised by QR (the triangular parts are folded into
    the core), then scaled by ``b`` with ``b^{-d}`` moved into the core, so the
    reconstructed tensor is unchanged.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    core = as_tensor(core, "core")
    qs, rs = [], []
    for u in factors:
        q, r = np.linalg.qr(np.asarray(u, dtype=float))
        # positive diagonal keeps the representation deterministic
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        qs.append(q * signs)
        rs.append(signs[:, None] * r)
    core = multi_mode_product(core, rs) / b ** core.ndim
    f = TuckerFactors(core, tuple(b * q for q in qs))
    full = f.reconstruct()
    svals = _mode_singular_values(full)
    sigma_bar = max(float(s[0]) for s in svals)
    sigma_min = min(float(s[r - 1]) for s, r in zip(svals, f.ranks))
    if sigma_min <= 0:
        raise ValueError("true tensor has a rank-deficient unfolding")
    return GroundTruth(f, float(b), sigma_bar, sigma_min)


def rank_one_truth(shape=(10, 10, 10), scale=np.sqrt(10.0), b=1.0):
    """``scale * 1 o 1 o ... o 1`` as a b-balanced ground truth."""
    ones = [np.ones((p, 1)) for p in shape]
    core = np.full((1,) * len(shape), float(scale))
    return make_ground_truth(core, ones, b=b)
