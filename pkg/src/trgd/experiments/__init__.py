"""Simulation harness for Experiments 1-10."""

from .cv import cross_validate_tau, fold_indices, holdout_score, theory_tau
from .output import HEADER, METRICS, ResultRow, emit_outputs, fit_slope, read_results, slopes, summarize, write_results
from .plan import MODELS, Cell, ExperimentPlan, Settings, make_plan, plan_cells, task_seed
from .runner import (
    ExperimentResult,
    balance_scale,
    make_truth,
    run_experiment,
    run_experiment_1,
    run_experiment_2,
    run_experiment_3,
    run_experiment_4,
    run_experiments_5_to_10,
    run_task,
)
