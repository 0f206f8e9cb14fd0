"""Command-line entry point: ``trgd run`` and ``trgd cv``.

Settings come from three layers, highest priority first: command-line
flags, a TOML config file (``--config``), and built-in defaults. The config
file may hold the sections ``[model]``, ``[optimizer]``, ``[distribution]``
and ``[experiment]``.

Exit codes: 0 on success, 2 for a configuration error, 3 when a required
(robust) fit diverged.
"""

import argparse
import json
import logging
import math
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import generate_logistic, generate_pca, generate_regression
from .experiments import emit_outputs, make_plan, run_experiment
from .experiments.cv import cross_validate_tau
from .experiments.plan import PRESETS, SHAPE, Settings, parse_dist
from .experiments.runner import make_truth
from .initialization import init_linear, init_logistic, init_pca
from .optimizer import OptimizerConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

SECTIONS = ("model", "optimizer", "distribution", "experiment")
_GRID_KEYS = ("lambdas", "epsilons", "theta0s", "ms", "ns", "models", "cases", "cv_grid")
_PLAN_KEYS = ("reps", "comparison_n", "n_cap", "cv_folds") + _GRID_KEYS

log = logging.getLogger("trgd")


class ConfigError(ValueError):
    """Invalid command-line or config-file input."""


def load_config(path):
    """Parse a TOML config; unknown top-level sections are rejected."""
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    extra = set(cfg) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown config sections {sorted(extra)}; allowed {list(SECTIONS)}")
    for name, sec in cfg.items():
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
    return cfg


def _pick(cli_value, section, key, default=None):
    """CLI value if given, else config value, else ``default``."""
    if cli_value is not None:
        return cli_value
    return section.get(key, default)


def _threads(cli_value, section):
    value = _pick(cli_value, section, "threads")
    if value is None:
        env = os.environ.get("TRGD_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise ConfigError(f"TRGD_THREADS must be an integer, got {env!r}") from exc
    return 1 if value is None else int(value)


def _settings(opt):
    known = {"a", "b", "eta", "iters"}
    extra = set(opt) - known
    if extra:
        raise ConfigError(f"unknown [optimizer] keys {sorted(extra)}")
    try:
        return Settings(**opt)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[optimizer]: {exc}") from exc


def build_plan(args, cfg):
    """Merge CLI flags and config sections into an :class:`ExperimentPlan`."""
    exp_sec = dict(cfg.get("experiment", {}))
    exp = _pick(args.exp, exp_sec, "exp")
    if exp is None:
        raise ConfigError("experiment id is required (--exp or [experiment] exp)")
    preset = _pick(args.preset, exp_sec, "preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    overrides = {}
    for key in _PLAN_KEYS:
        if key in exp_sec:
            val = exp_sec[key]
            overrides[key] = tuple(val) if key in _GRID_KEYS else val
    if args.reps is not None:
        overrides["reps"] = args.reps
    overrides["seed"] = int(_pick(args.seed, exp_sec, "seed", 0))
    overrides["threads"] = _threads(args.threads, exp_sec)
    overrides["timing"] = bool(_pick(args.timing, exp_sec, "timing", False))
    overrides["settings"] = _settings(cfg.get("optimizer", {}))
    known = set(_PLAN_KEYS) | {"exp", "preset", "seed", "threads", "timing", "out", "plots"}
    extra = set(exp_sec) - known
    if extra:
        raise ConfigError(f"unknown [experiment] keys {sorted(extra)}")
    try:
        return make_plan(int(exp), preset, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args):
    cfg = load_config(args.config)
    plan = build_plan(args, cfg)
    exp_sec = cfg.get("experiment", {})
    out = _pick(args.out, exp_sec, "out")
    if out is None:
        raise ConfigError("output directory is required (--out or [experiment] out)")
    plots = bool(_pick(args.plots, exp_sec, "plots", False))

    def progress(done, total):
        if not args.quiet and sys.stderr.isatty():
            print(f"\r[exp {plan.exp}] {done}/{total} tasks", end="", file=sys.stderr, flush=True)

    t0 = time.perf_counter()
    result = run_experiment(plan, progress=progress)
    if not args.quiet and sys.stderr.isatty():
        print(file=sys.stderr)
    files = emit_outputs(result.rows, plan.exp, out, plots=plots)
    if not args.quiet:
        print(f"wrote {', '.join(str(f) for f in files)} in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    if result.required_divergences:
        log.error("%d required RGD fits diverged", result.required_divergences)
        return EXIT_DIVERGED
    return EXIT_OK


_CV_MODELS = {"linear", "logistic", "pca"}


def cmd_cv(args):
    """Generate one dataset from the config and select tau by K-fold CV."""
    cfg = load_config(args.config)
    model_sec = cfg.get("model", {})
    dist_sec = cfg.get("distribution", {})
    exp_sec = cfg.get("experiment", {})
    kind = _pick(args.model, model_sec, "kind")
    if kind not in _CV_MODELS:
        raise ConfigError(f"model must be one of {sorted(_CV_MODELS)}, got {kind!r}")
    settings = _settings(cfg.get("optimizer", {}))
    truth = make_truth(settings)
    b = truth.b
    n = int(dist_sec.get("n", 500))
    seed = int(_pick(args.seed, exp_sec, "seed", 0))
    folds = int(exp_sec.get("cv_folds", 5))
    grid = tuple(float(g) for g in exp_sec.get("cv_grid", (0.25, 0.5, 1.0, 2.0, 4.0)))
    huber = bool(model_sec.get("huber", False))
    rng = np.random.default_rng(seed)
    try:
        x = parse_dist(dist_sec.get("covariate", "N"))
        e = parse_dist(dist_sec.get("noise", "N"))
        if kind == "linear":
            d0 = int(model_sec.get("d0", len(SHAPE)))
            if not 1 <= d0 <= len(SHAPE):
                raise ConfigError(f"d0 must be in 1..{len(SHAPE)}")
            data = generate_regression(truth, n, x, e, d0, rng)
            init = lambda tr: init_linear(tr, (1,) * len(SHAPE), b)  # noqa: E731
        elif kind == "logistic":
            data = generate_logistic(truth, n, x, rng)
            init = lambda tr: init_logistic(tr, (1,) * len(SHAPE), b)  # noqa: E731
        else:
            data = generate_pca(truth, n, e, rng)
            init = lambda tr: init_pca(tr, (1,) * len(SHAPE), b)  # noqa: E731
        base = OptimizerConfig(a=settings.a, b=b, eta=settings.eta, iters=settings.iters)
        tau, taus, scores = cross_validate_tau(
            data, kind, base, init, folds=folds, grid=grid, rng=np.random.default_rng([seed, 1]),
            huber=huber, return_scores=True,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = {
        "model": kind,
        "n": n,
        "parameter": "nu" if huber else "tau",
        "selected": tau,
        "candidates": [float(t) for t in taus],
        "scores": [float(s) if math.isfinite(s) else None for s in scores],
    }
    print(json.dumps(report, indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="trgd", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one simulation experiment and write CSV outputs")
    run.add_argument("--exp", type=int, choices=range(1, 11), metavar="{1..10}")
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--reps", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--plots", action="store_true", default=None)
    run.add_argument("--timing", action="store_true", default=None,
                     help="record wall-clock milliseconds (makes results.csv run-dependent)")
    run.add_argument("--config")
    run.add_argument("-q", "--quiet", action="store_true")
    run.set_defaults(func=cmd_run)

    cv = sub.add_parser("cv", help="select the truncation level on one simulated dataset")
    cv.add_argument("--model", choices=sorted(_CV_MODELS))
    cv.add_argument("--config")
    cv.add_argument("--seed", type=int)
    cv.set_defaults(func=cmd_cv)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage, which matches the config-error code
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"trgd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
