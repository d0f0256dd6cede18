"""Differentiable regression forests.

Soft-routed binary trees over a learned feature backbone, with Gaussian
leaf densities. Split routing and the backbone train by gradient descent
on the forest negative log likelihood; leaf distributions train by a
step-size-free iterative bound minimization. Includes CSV data handling,
synthetic benchmark tasks, evaluation metrics, model serialization and a
command-line interface (``drforest``).
"""

from .backbone import Backbone, SgdSchedule, sgd_step
from .data import (
    ColumnStats,
    Dataset,
    DatasetStats,
    SynthSpec,
    generate_synthetic,
    load_csv,
    save_csv,
    standardize,
)
from .forest import (
    ACTIVATION_CLIP,
    LOG_DENSITY_FLOOR,
    EventCounters,
    ForestModel,
    IndexFunction,
    Tree,
    TreeTopology,
    forest_predict,
    forest_predict_batch,
    gamma_bottom_up,
    grad_loss_wrt_f,
    loss_nll,
    route,
    tree_conditional_density,
    tree_predict,
)
from .gaussian import LeafGaussian, floor_covariance, gaussian_log_density, logsumexp
from .leaves import compute_zeta, kmeans_init, tree_nll, update_leaves
from .metrics import MetricsRecord, compute_metrics, cumulative_score, mae
from .model_io import load_model, save_model
from .training import TrainConfig, TrainReport, evaluate, predict_targets, train

__version__ = "0.1.0"

__all__ = [
    "ACTIVATION_CLIP",
    "Backbone",
    "ColumnStats",
    "Dataset",
    "DatasetStats",
    "EventCounters",
    "ForestModel",
    "IndexFunction",
    "LOG_DENSITY_FLOOR",
    "LeafGaussian",
    "MetricsRecord",
    "SgdSchedule",
    "SynthSpec",
    "TrainConfig",
    "TrainReport",
    "Tree",
    "TreeTopology",
    "compute_metrics",
    "compute_zeta",
    "cumulative_score",
    "evaluate",
    "floor_covariance",
    "forest_predict",
    "forest_predict_batch",
    "gamma_bottom_up",
    "gaussian_log_density",
    "generate_synthetic",
    "grad_loss_wrt_f",
    "kmeans_init",
    "load_csv",
    "load_model",
    "logsumexp",
    "loss_nll",
    "mae",
    "predict_targets",
    "route",
    "save_csv",
    "save_model",
    "sgd_step",
    "standardize",
    "train",
    "tree_conditional_density",
    "tree_nll",
    "tree_predict",
    "update_leaves",
]
