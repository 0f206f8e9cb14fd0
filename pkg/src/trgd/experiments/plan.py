"""Experiment plans: grids, presets and the per-model data recipes."""

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from ..data import DistSpec

__all__ = [
    "ModelSpec",
    "MODELS",
    "Settings",
    "Cell",
    "ExperimentPlan",
    "make_plan",
    "plan_cells",
    "task_seed",
    "PRESETS",
    "P_BAR",
]

P_BAR = 10
SHAPE = (10, 10, 10)
RANKS = (1, 1, 1)
TRUTH_SCALE = np.sqrt(10.0)


@dataclass(frozen=True)
class ModelSpec:
    """One of the four simulation models.

    ``kind`` is ``linear``, ``logistic`` or ``pca``; ``d0`` is the number of
    covariate modes (linear models only).
    """

    name: str
    kind: str
    d0: int = None


MODELS = {
    "I": ModelSpec("I", "linear", 3),
    "II": ModelSpec("II", "linear", 2),
    "III": ModelSpec("III", "logistic"),
    "IV": ModelSpec("IV", "pca"),
}

EXPERIMENT_MODELS = {
    1: ("I", "II"),
    2: ("I", "II"),
    3: ("I", "II"),
    4: ("I", "II"),
    5: ("III",),
    6: ("III",),
    7: ("III",),
    8: ("IV",),
    9: ("IV",),
    10: ("IV",),
}

# distribution cases of the comparison experiments, as (covariate, noise)
COMPARISON_CASES = {
    4: {"N/N": ("N", "N"), "N/t1.2": ("N", "t1.2"), "t2.1/N": ("t2.1", "N"), "t2.1/t1.2": ("t2.1", "t1.2")},
    7: {"N": ("N", None), "t2.1": ("t2.1", None)},
    10: {"N": (None, "N"), "t1.2": (None, "t1.2")},
}

DEFAULT_GRIDS = {
    "lambdas": (0.1, 0.4, 0.7, 1.0, 1.3, 1.6),
    "epsilons": (0.1, 0.4, 0.7, 1.0, 1.3, 1.6),
    "theta0s": (0, 1, 2, 3, 4),
    "ms": (1, 2, 3, 4, 5),
    "ns": (300, 400, 500, 600, 700),
}

PRESETS = {
    "paper": {"reps": 200, "n_cap": None},
    "desk": {"reps": 25, "n_cap": 4000},
}


def parse_dist(label):
    """``"N"`` for standard Gaussian, ``"t<dof>"`` for Student-t."""
    if label == "N":
        return DistSpec.gaussian()
    if label.startswith("t"):
        return DistSpec.student_t(float(label[1:]))
    raise ValueError(f"unknown distribution label {label!r}")


@dataclass(frozen=True)
class Settings:
    """Optimizer settings shared by every fit of an experiment.

    ``b=None`` selects ``sigma_bar^{1/(d+1)}`` of the true tensor, the
    balance scale at which the true factors are exactly b-balanced.
    """

    a: float = 1.0
    b: float = None
    eta: float = 2e-4
    iters: int = 300

    def __post_init__(self):
        if self.a < 0 or not self.eta > 0 or self.iters < 1 or (self.b is not None and not self.b > 0):
            raise ValueError("invalid optimizer settings")


@dataclass(frozen=True)
class Cell:
    """Grid coordinates of one simulation setting (``None`` when not applicable)."""

    model: str
    case: str
    lam: float = None
    eps: float = None
    theta0: int = None
    m: int = None
    n: int = None

    def key(self, exp):
        return f"{exp}|{self.model}|{self.case}|{self.lam}|{self.eps}|{self.theta0}|{self.m}|{self.n}"


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to run one experiment reproducibly.

    Grid axes that an experiment does not use are ignored. ``cases`` selects
    the distribution cases (covariate cases for Exps 2 and 8 are ``"N"`` and
    ``"t3"``; for comparison experiments the case labels of
    ``COMPARISON_CASES``).
    """

    exp: int
    preset: str = "desk"
    reps: int = 25
    seed: int = 0
    models: tuple = None
    lambdas: tuple = DEFAULT_GRIDS["lambdas"]
    epsilons: tuple = DEFAULT_GRIDS["epsilons"]
    theta0s: tuple = DEFAULT_GRIDS["theta0s"]
    ms: tuple = DEFAULT_GRIDS["ms"]
    ns: tuple = DEFAULT_GRIDS["ns"]
    cases: tuple = None
    comparison_n: int = 500
    n_cap: int = 4000
    settings: Settings = field(default_factory=Settings)
    cv_folds: int = 5
    cv_grid: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    threads: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.exp not in EXPERIMENT_MODELS:
            raise ValueError(f"experiment id must be 1..10, got {self.exp}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if not self.cv_grid or any(not g > 0 for g in self.cv_grid):
            raise ValueError("cv_grid must be nonempty and positive")
        models = self.models if self.models is not None else EXPERIMENT_MODELS[self.exp]
        for mdl in models:
            if mdl not in EXPERIMENT_MODELS[self.exp]:
                raise ValueError(f"model {mdl!r} is not part of experiment {self.exp}")
        object.__setattr__(self, "models", tuple(models))
        cases = self.cases if self.cases is not None else default_cases(self.exp)
        valid = default_cases(self.exp)
        for c in cases:
            if c not in valid:
                raise ValueError(f"case {c!r} not available for experiment {self.exp}; choose from {valid}")
        object.__setattr__(self, "cases", tuple(cases))
        if self.n_cap is not None and self.n_cap < 1:
            raise ValueError("n_cap must be positive")
        for name in ("lambdas", "epsilons", "theta0s", "ms", "ns"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"grid axis {name} is empty")

    def with_(self, **kw):
        return replace(self, **kw)

    def cap(self, n):
        return n if self.n_cap is None else min(n, self.n_cap)


def default_cases(exp):
    if exp in COMPARISON_CASES:
        return tuple(COMPARISON_CASES[exp])
    if exp in (2, 8):
        return ("N", "t3") if exp == 2 else ("-",)
    return ("-",)


def make_plan(exp, preset="desk", **overrides):
    """Plan for experiment ``exp`` with the given preset and overrides."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    base = dict(PRESETS[preset])
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentPlan(exp=exp, preset=preset, **base)


def plan_cells(plan):
    """Grid cells of ``plan`` in canonical (model, case, axis...) order."""
    exp = plan.exp
    cells = []
    for model in plan.models:
        for case in plan.cases:
            if exp in (1, 5):
                for lam in plan.lambdas:
                    for m in plan.ms:
                        cells.append(Cell(model, case, lam=lam, m=m, n=plan.cap(10 * 2**m)))
            elif exp in (2, 8):
                for eps in plan.epsilons:
                    for m in plan.ms:
                        cells.append(Cell(model, case, eps=eps, m=m, n=plan.cap(200 * 2**m)))
            elif exp in (3, 6, 9):
                for theta0 in plan.theta0s:
                    for n in plan.ns:
                        cells.append(Cell(model, case, theta0=theta0, n=plan.cap(n)))
            else:
                cells.append(Cell(model, case, n=plan.cap(plan.comparison_n)))
    return cells


def task_seed(master_seed, exp, cell, rep):
    """64-bit seed of one replication, derived from the cell's coordinates.

    The seed depends on grid values rather than positions, so a cell
    produces the same data whatever else is in the grid.
    """
    digest = hashlib.sha256(cell.key(exp).encode()).digest()
    key = int.from_bytes(digest[:4], "little")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(exp, key, rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
