"""K-fold selection of the truncation level (or Huber threshold)."""

import numpy as np

from ..data import LogisticData, PcaData, RegressionData
from ..optimizer import rgd_fit

__all__ = ["theory_tau", "fold_indices", "holdout_score", "cross_validate_tau"]


def theory_tau(n, p_bar, eps_eff=1.0):
    """``(n / log p_bar)^{1/(1+eps_eff)}``."""
    return (n / np.log(p_bar)) ** (1.0 / (1.0 + eps_eff))


def fold_indices(n, folds, rng):
    """Seeded random partition of ``range(n)`` into ``folds`` near-equal parts."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if n < folds:
        raise ValueError(f"{n} samples cannot fill {folds} folds")
    return [np.sort(part) for part in np.array_split(rng.permutation(n), folds)]


def holdout_score(model, f, data):
    """Held-out loss: mean absolute error (linear), mean negative
    log-likelihood (logistic) or median absolute residual (PCA)."""
    a = f.reconstruct()
    n = data.n
    if isinstance(data, RegressionData):
        p0 = int(np.prod(a.shape[: data.d0]))
        pred = data.xs.reshape(n, p0) @ a.reshape(p0, -1)
        return float(np.mean(np.abs(pred - data.ys.reshape(n, -1))))
    if isinstance(data, LogisticData):
        s = data.xs.reshape(n, -1) @ a.reshape(-1)
        return float(np.mean(np.logaddexp(0.0, s) - data.ys * s))
    if isinstance(data, PcaData):
        return float(np.median(np.abs(data.ys - a[None])))
    raise TypeError(f"unsupported data {type(data).__name__}")


def cross_validate_tau(
    data,
    model,
    cfg,
    init,
    folds=5,
    grid=(0.25, 0.5, 1.0, 2.0, 4.0),
    tau0=None,
    rng=None,
    huber=False,
    fold_inits=None,
    return_scores=False,
):
    """Pick the truncation level with the best average held-out score.

    Parameters
    ----------
    data : RegressionData, LogisticData or PcaData
    model : {"linear", "logistic", "pca"}
    cfg : OptimizerConfig
        Settings of every fit; its ``tau``/``nu`` are replaced by candidates.
    init : callable
        ``init(train_data) -> TuckerFactors`` starting point for each fold.
    folds : int
    grid : sequence of float
        Multipliers of ``tau0``; ``inf`` is allowed.
    tau0 : float, optional
        Base level; defaults to ``sqrt(n_train / log 10)``.
    rng : numpy.random.Generator
        Drives the fold assignment.
    huber : bool
        Tune the Huber residual threshold instead of the gradient truncation.
    fold_inits : dict, optional
        Cache of per-fold starting points, filled on first use so several
        calls on the same folds share them.
    return_scores : bool
        Also return the candidate levels and their mean scores.

    Returns
    -------
    float, or ``(tau, taus, scores)``
        Ties go to the smallest level. Diverged fits score ``inf``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    parts = fold_indices(data.n, folds, rng)
    n_train = data.n - max(len(p) for p in parts)
    if tau0 is None:
        tau0 = theory_tau(n_train, 10)
    taus = np.sort(np.asarray([g * tau0 for g in grid], dtype=float))
    scores = np.zeros(len(taus))
    cache = fold_inits if fold_inits is not None else {}
    everything = np.arange(data.n)
    for k, held in enumerate(parts):
        train = data.subset(np.setdiff1d(everything, held))
        test = data.subset(held)
        if k not in cache:
            cache[k] = init(train)
        for j, tau in enumerate(taus):
            run_cfg = cfg.with_(nu=tau, tau=np.inf) if huber else cfg.with_(tau=tau, nu=None)
            rep = rgd_fit(cache[k], train, model, run_cfg, raise_on_divergence=False)
            scores[j] += np.inf if rep.diverged else holdout_score(model, rep.final, test)
    scores /= folds
    best = float(taus[int(np.argmin(scores))])
    return (best, taus, scores) if return_scores else best
