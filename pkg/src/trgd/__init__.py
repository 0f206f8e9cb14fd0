"""Robust gradient descent for low-rank Tucker models with heavy-tailed data."""

from .tensor import (
    matricize,
    dematricize,
    mode_product,
    multi_mode_product,
    inner,
    inner_generalized,
    outer,
    kronecker,
)
from .tucker import (
    TuckerFactors,
    GroundTruth,
    hosvd,
    hooi,
    err_metric,
    subspace_angle,
    make_ground_truth,
    rank_one_truth,
)
from .data import (
    DistSpec,
    RegressionData,
    LogisticData,
    PcaData,
    sample_tensor,
    generate_regression,
    generate_logistic,
    generate_pca,
    estimate_local_moment,
)
from .gradients import (
    GradientSet,
    truncate,
    linear_gradients,
    logistic_gradients,
    pca_gradients,
    huber_gradients,
)
from .optimizer import OptimizerConfig, FitReport, DivergenceError, rgd_fit, rgd_step

__version__ = "0.1.0"
