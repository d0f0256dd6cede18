"""Alternating training: gradient steps on the backbone, bound-based leaf refits.

Training interleaves two phases. A window of ``batch_window`` mini-batches
is drawn; each batch gets one SGD step on the backbone with the leaf
tables frozen. The window's samples are then pooled and every tree's
leaves are refit on the pool (routing recomputed under the updated
backbone) while the backbone stays fixed. Targets are standardized
internally so the covariance floor is scale-free; the stats ride along on
the model and predictions are mapped back to original units.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .backbone import Backbone, SgdSchedule, sgd_step
from .data import ColumnStats
from .forest import (
    EventCounters,
    ForestModel,
    IndexFunction,
    Tree,
    TreeTopology,
    forest_predict_outputs,
    loss_and_grad_from_outputs,
    routing_batch,
)
from .leaves import DEFAULT_COV_EPSILON, kmeans_init, update_leaves
from .metrics import compute_metrics
from .parallel import run_chunked


@dataclass
class TrainConfig:
    """Hyper-parameters for one training run."""

    trees: int = 5
    depth: int = 6
    units: int = 128
    hidden: tuple = ()
    leaf_update_iterations: int = 20
    batch_window: int = 50
    batch_size: int = 16
    max_iterations: int = 30000
    learning_rate: float = 0.05
    lr_decay: float = 0.5
    lr_decay_interval: int = 10000
    cov_epsilon: float = DEFAULT_COV_EPSILON
    seed: int = 0
    leaf_init_permute: bool = True
    early_stop: bool = False
    early_stop_tol: float = 1e-6
    early_stop_patience: int = 10
    final_leaf_refit: bool = False

    # fields that must appear in a config file; the rest have sane defaults
    REQUIRED = ("trees", "depth", "units")

    def validate(self):
        for name in ("trees", "depth", "units", "leaf_update_iterations", "batch_window",
                     "batch_size", "max_iterations", "lr_decay_interval",
                     "early_stop_patience"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"config field \"{name}\" must be a positive integer")
        for name in ("learning_rate", "lr_decay", "cov_epsilon"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"config field \"{name}\" must be positive")
        if self.early_stop_tol < 0:
            raise ValueError('config field "early_stop_tol" must be non-negative')
        if any((not isinstance(h, int)) or h < 1 for h in self.hidden):
            raise ValueError('config field "hidden" must list positive integer widths')

    @classmethod
    def from_mapping(cls, mapping):
        """Build a config from a parsed config file, naming every bad field."""
        if not isinstance(mapping, dict):
            raise ValueError("config must be a mapping of field names to values")
        known = {f.name for f in cls.__dataclass_fields__.values()}
        for key in mapping:
            if key not in known:
                raise ValueError(f"unknown config field \"{key}\"")
        for key in cls.REQUIRED:
            if key not in mapping:
                raise ValueError(f"missing config field \"{key}\"")
        values = dict(mapping)
        if "hidden" in values:
            hidden = values["hidden"]
            if not isinstance(hidden, (list, tuple)):
                raise ValueError('config field "hidden" must be a list of widths')
            values["hidden"] = tuple(int(h) for h in hidden)
        if "seed" in values:
            values["seed"] = int(values["seed"])
        config = cls(**values)
        config.validate()
        return config


@dataclass
class TrainReport:
    """Bookkeeping from one training run."""

    batch_losses: list = field(default_factory=list)
    window_losses: list = field(default_factory=list)
    leaf_nll_before: list = field(default_factory=list)
    leaf_nll_after: list = field(default_factory=list)
    gradient_steps: int = 0
    leaf_updates: int = 0
    skipped_steps: int = 0
    density_floor_events: int = 0
    cov_floor_events: int = 0
    starved_leaves: int = 0
    stopped_early: bool = False
    wall_clock_seconds: float = 0.0
    final_train_mae: float = float("nan")

    def to_dict(self):
        return {
            "batch_losses": self.batch_losses,
            "window_losses": self.window_losses,
            "leaf_nll_before": self.leaf_nll_before,
            "leaf_nll_after": self.leaf_nll_after,
            "gradient_steps": self.gradient_steps,
            "leaf_updates": self.leaf_updates,
            "skipped_steps": self.skipped_steps,
            "density_floor_events": self.density_floor_events,
            "cov_floor_events": self.cov_floor_events,
            "starved_leaves": self.starved_leaves,
            "stopped_early": self.stopped_early,
            "wall_clock_seconds": self.wall_clock_seconds,
            "final_train_mae": self.final_train_mae,
        }


def _refit_tree_leaves(tree, outputs, targets_std, config, counters):
    _, _, p_leaf = routing_batch(tree.topology, tree.index_fn, outputs)
    leaves, trace = update_leaves(
        tree.leaves, p_leaf, targets_std,
        iterations=config.leaf_update_iterations,
        cov_epsilon=config.cov_epsilon,
        counters=counters,
    )
    tree.leaves = leaves
    return trace


def train(dataset, config, on_event=None):
    """Run the alternating optimization and return ``(model, report)``.

    ``on_event`` is an optional callback invoked as
    ``on_event(kind, info)`` with kind ``"gradient_step"`` after each SGD
    step and ``"leaf_update"`` after each per-window leaf refit; tests use
    it to audit the schedule.
    """
    config.validate()
    topology = TreeTopology(config.depth)
    if dataset.n_samples < topology.leaf_count:
        raise ValueError(
            f"insufficient samples for initialization: {dataset.n_samples} samples "
            f"for {topology.leaf_count} leaves"
        )
    start = time.perf_counter()
    report = TrainReport()
    counters = EventCounters()

    root_seq = np.random.SeedSequence(config.seed)
    init_seq, index_seq, kmeans_seq, perm_seq, batch_seq = root_seq.spawn(5)

    target_stats = ColumnStats.fit(dataset.targets)
    targets_std = target_stats.transform(dataset.targets)
    features = dataset.features

    backbone = Backbone(dataset.d_x, config.units, hidden=config.hidden,
                        rng=np.random.default_rng(init_seq))
    clusters = kmeans_init(targets_std, topology.leaf_count, kmeans_seq,
                           cov_epsilon=config.cov_epsilon)
    index_rng = np.random.default_rng(index_seq)
    perm_rng = np.random.default_rng(perm_seq)
    trees = []
    for _ in range(config.trees):
        index_fn = IndexFunction.random(topology, config.units, index_rng)
        if config.leaf_init_permute:
            order = perm_rng.permutation(topology.leaf_count)
        else:
            order = np.arange(topology.leaf_count)
        leaves = [clusters[j].copy() for j in order]
        trees.append(Tree(topology=topology, index_fn=index_fn, leaves=leaves))
    model = ForestModel(trees=trees, backbone=backbone, d_y=dataset.d_y,
                        target_mean=target_stats.mean, target_std=target_stats.std)

    schedule = SgdSchedule(learning_rate=config.learning_rate, decay=config.lr_decay,
                           decay_interval=config.lr_decay_interval)
    batch_rng = np.random.default_rng(batch_seq)

    iteration = 0
    stall = 0
    prev_window_loss = None
    while iteration < config.max_iterations:
        window_idx = []
        while len(window_idx) < config.batch_window and iteration < config.max_iterations:
            idx = batch_rng.integers(0, dataset.n_samples, size=config.batch_size)
            x_batch = features[idx]
            y_batch = targets_std[idx]
            outputs, cache = backbone.forward(x_batch)
            loss, grad_f = loss_and_grad_from_outputs(model, outputs, y_batch, counters)
            grad_theta, _ = backbone.backward(cache, grad_f)
            if not sgd_step(backbone, grad_theta, schedule):
                report.skipped_steps += 1
            report.batch_losses.append(loss)
            report.gradient_steps += 1
            iteration += 1
            window_idx.append(idx)
            if on_event is not None:
                on_event("gradient_step", {"iteration": iteration, "loss": loss})
        if not window_idx:
            break
        pool = np.concatenate(window_idx)
        pool_outputs, _ = backbone.forward(features[pool])
        pool_targets = targets_std[pool]
        nll_before = 0.0
        nll_after = 0.0
        for tree in model.trees:
            trace = _refit_tree_leaves(tree, pool_outputs, pool_targets, config, counters)
            nll_before += trace[0]
            nll_after += trace[-1]
        report.leaf_nll_before.append(nll_before / model.n_trees)
        report.leaf_nll_after.append(nll_after / model.n_trees)
        report.leaf_updates += 1
        if on_event is not None:
            on_event("leaf_update", {"iteration": iteration,
                                     "nll_before": nll_before / model.n_trees,
                                     "nll_after": nll_after / model.n_trees})
        window_loss = float(np.mean(report.batch_losses[-len(window_idx):]))
        report.window_losses.append(window_loss)
        if config.early_stop:
            if prev_window_loss is not None and prev_window_loss - window_loss < config.early_stop_tol:
                stall += 1
                if stall >= config.early_stop_patience:
                    report.stopped_early = True
                    break
            else:
                stall = 0
            prev_window_loss = window_loss

    if config.final_leaf_refit:
        all_outputs, _ = backbone.forward(features)
        for tree in model.trees:
            _refit_tree_leaves(tree, all_outputs, targets_std, config, counters)

    report.density_floor_events = counters.density_floor
    report.cov_floor_events = counters.cov_floor
    report.starved_leaves = counters.starved_leaves
    report.final_train_mae = evaluate(model, dataset).mae
    report.wall_clock_seconds = time.perf_counter() - start
    return model, report


def predict_targets(model, x):
    """Forest predictions in original target units, chunked over threads."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.d_x:
        raise ValueError(f"input dimension mismatch: expected {model.d_x}, got {x.shape[1]}")
    out = np.empty((x.shape[0], model.d_y))

    def work(start, stop):
        outputs, _ = model.backbone.forward(x[start:stop])
        pred = forest_predict_outputs(model, np.atleast_2d(outputs))
        out[start:stop] = pred * model.target_std + model.target_mean

    run_chunked(work, x.shape[0])
    return out[0] if single else out


def evaluate(model, dataset, cs_level=5.0):
    """MAE and cumulative score of the model on a dataset."""
    if dataset.n_samples == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    predictions = predict_targets(model, dataset.features)
    return compute_metrics(predictions, dataset.targets, level=cs_level)
