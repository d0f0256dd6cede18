"""Soft-routed regression trees and forests.

A tree is a complete binary structure laid out as an implicit heap: split
nodes occupy slots ``0 .. 2^depth - 2`` with children of node ``n`` at
``2n + 1`` and ``2n + 2``; the ``2^depth`` leaves occupy the remaining
slots. Each split node reads one backbone output unit through its index
function and turns it into the probability of taking the left branch.
Every leaf carries a Gaussian density over targets, so a tree defines a
routing-weighted Gaussian mixture conditioned on the input.

Evaluation (routing, prediction, loss, gradients) never mutates model
state and is safe to call from multiple threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import (
    LeafGaussian,
    as_target_matrix,
    leaf_log_densities,
    log_probabilities,
    logsumexp,
)

# activations are clipped here before the sigmoid so no routing factor
# can reach exactly zero
ACTIVATION_CLIP = 40.0

# per-sample, per-tree log densities never drop below this value; anything
# clamped is counted as an underflow event
LOG_DENSITY_FLOOR = -300.0


@dataclass
class EventCounters:
    """Tallies of the numeric fallbacks that fired during a computation."""

    density_floor: int = 0
    cov_floor: int = 0
    starved_leaves: int = 0

    def merge(self, other):
        self.density_floor += other.density_floor
        self.cov_floor += other.cov_floor
        self.starved_leaves += other.starved_leaves


@dataclass(frozen=True)
class TreeTopology:
    """Complete binary tree with ``depth`` split levels."""

    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be a positive integer")

    @property
    def split_count(self):
        return 2 ** self.depth - 1

    @property
    def leaf_count(self):
        return 2 ** self.depth

    @property
    def node_count(self):
        return 2 ** (self.depth + 1) - 1

    def left(self, n):
        return 2 * n + 1

    def right(self, n):
        return 2 * n + 2

    def is_split(self, n):
        return n < self.split_count

    def leaf_slot(self, leaf_index):
        """Heap slot of the ``leaf_index``-th leaf."""
        return self.split_count + leaf_index

    def descendant_leaves(self, n):
        """Half-open range of leaf indices under node ``n``."""
        lo = n
        while self.is_split(lo):
            lo = self.left(lo)
        hi = n
        while self.is_split(hi):
            hi = self.right(hi)
        return lo - self.split_count, hi - self.split_count + 1


@dataclass(frozen=True)
class IndexFunction:
    """Maps each split node to one backbone output unit.

    Units may repeat, both within a tree and across trees sharing a
    backbone.
    """

    unit_of_node: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "unit_of_node", np.asarray(self.unit_of_node, dtype=np.intp).copy()
        )
        if self.unit_of_node.ndim != 1:
            raise ValueError("unit_of_node must be one-dimensional")
        if np.any(self.unit_of_node < 0):
            raise ValueError("unit indices must be non-negative")

    @classmethod
    def random(cls, topology, n_units, rng):
        rng = np.random.default_rng(rng)
        return cls(rng.integers(0, n_units, size=topology.split_count))

    def validate_units(self, n_units):
        if np.any(self.unit_of_node >= n_units):
            raise ValueError(f"index function references units beyond {n_units - 1}")


@dataclass
class Tree:
    """One soft regression tree: structure, unit wiring, leaf table."""

    topology: TreeTopology
    index_fn: IndexFunction
    leaves: list

    def __post_init__(self):
        if len(self.index_fn.unit_of_node) != self.topology.split_count:
            raise ValueError("index function length does not match split count")
        if len(self.leaves) != self.topology.leaf_count:
            raise ValueError("leaf table length does not match leaf count")

    @property
    def d_y(self):
        return self.leaves[0].dim

    def leaf_means(self):
        return np.stack([leaf.mean for leaf in self.leaves], axis=0)


@dataclass
class ForestModel:
    """An ensemble of trees over one shared backbone.

    ``target_mean``/``target_std`` record the standardization applied to
    targets during training; predictions in original units go through
    :func:`drforest.training.predict_targets`.
    """

    trees: list
    backbone: object
    d_y: int
    target_mean: np.ndarray = None
    target_std: np.ndarray = None

    def __post_init__(self):
        if not self.trees:
            raise ValueError("forest needs at least one tree")
        if self.target_mean is None:
            self.target_mean = np.zeros(self.d_y)
        if self.target_std is None:
            self.target_std = np.ones(self.d_y)
        self.target_mean = np.asarray(self.target_mean, dtype=np.float64)
        self.target_std = np.asarray(self.target_std, dtype=np.float64)
        for tree in self.trees:
            tree.index_fn.validate_units(self.backbone.out_dim)

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def d_x(self):
        return self.backbone.in_dim


def _sigmoid(a):
    # evaluated on clipped inputs, so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def split_activations(index_fn, outputs):
    """Left/right branch probabilities for each split node.

    Both factors are computed from their own sigmoid so each stays
    strictly positive even where float64 rounds the other to 1.0.
    """
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    a = np.clip(outputs[:, index_fn.unit_of_node], -ACTIVATION_CLIP, ACTIVATION_CLIP)
    return _sigmoid(a), _sigmoid(-a)


def routing_batch(topology, index_fn, outputs):
    """Soft routing for a batch of backbone outputs.

    Returns ``(s_left, s_right, p_leaf)`` where ``p_leaf[i, j]`` is the
    probability of sample ``i`` reaching leaf ``j``, computed in one
    top-down pass (child mass = parent mass times branch factor).
    """
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    s_left, s_right = split_activations(index_fn, outputs)
    n = outputs.shape[0]
    mass = np.empty((n, topology.node_count))
    mass[:, 0] = 1.0
    for node in range(topology.split_count):
        mass[:, topology.left(node)] = mass[:, node] * s_left[:, node]
        mass[:, topology.right(node)] = mass[:, node] * s_right[:, node]
    return s_left, s_right, mass[:, topology.split_count:]


def route(topology, index_fn, f_out):
    """Single-sample routing: activations and leaf distribution."""
    f_out = np.asarray(f_out, dtype=np.float64)
    if not np.all(np.isfinite(f_out)):
        raise ValueError("backbone outputs must be finite")
    s_left, _, p_leaf = routing_batch(topology, index_fn, f_out.reshape(1, -1))
    return s_left[0], p_leaf[0]


def tree_conditional_density(p_leaf, leaves, y):
    """Mixture density of one tree at target ``y``.

    Combined in the log domain; returns ``(density, log_density)``.
    """
    p_leaf = np.asarray(p_leaf, dtype=np.float64)
    log_pdf = np.array([leaf.log_density(y) for leaf in leaves])
    log_density = logsumexp(log_probabilities(p_leaf) + log_pdf)
    return float(np.exp(log_density)), float(log_density)


def tree_predict(p_leaf, leaves):
    """Routing-weighted average of the leaf means."""
    p_leaf = np.asarray(p_leaf, dtype=np.float64)
    means = np.stack([leaf.mean for leaf in leaves], axis=0)
    return p_leaf @ means


def forest_predict_outputs(model, outputs):
    """Forest predictions (standardized target space) from backbone outputs."""
    outputs = np.atleast_2d(outputs)
    total = np.zeros((outputs.shape[0], model.d_y))
    for tree in model.trees:
        _, _, p_leaf = routing_batch(tree.topology, tree.index_fn, outputs)
        total += p_leaf @ tree.leaf_means()
    return total / model.n_trees


def forest_predict_batch(model, x):
    """Average of per-tree predictions over one shared backbone pass."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.d_x:
        raise ValueError(f"input dimension mismatch: expected {model.d_x}, got {x.shape[1]}")
    outputs, _ = model.backbone.forward(x)
    pred = forest_predict_outputs(model, np.atleast_2d(outputs))
    return pred[0] if single else pred


def forest_predict(model, x):
    """Single-sample forest prediction in standardized target space."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forest_predict takes one sample; use forest_predict_batch")
    return forest_predict_batch(model, x)


def tree_log_density_batch(tree, outputs, targets, counters=None):
    """Per-sample log mixture density of one tree, clamped at the floor."""
    _, _, p_leaf = routing_batch(tree.topology, tree.index_fn, outputs)
    log_pdf = leaf_log_densities(tree.leaves, targets)
    raw = logsumexp(log_probabilities(p_leaf) + log_pdf, axis=1)
    below = raw < LOG_DENSITY_FLOOR
    if counters is not None and np.any(below):
        counters.density_floor += int(np.count_nonzero(below))
    return np.maximum(raw, LOG_DENSITY_FLOOR)


def loss_from_outputs(model, outputs, targets, counters=None):
    """Forest negative log likelihood given backbone outputs."""
    outputs = np.atleast_2d(outputs)
    targets = as_target_matrix(targets, model.d_y)
    if outputs.shape[0] != targets.shape[0]:
        raise ValueError("outputs and targets disagree on sample count")
    if outputs.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    total = 0.0
    for tree in model.trees:
        total += -float(np.mean(tree_log_density_batch(tree, outputs, targets, counters)))
    return total / model.n_trees


def loss_nll(model, x, targets, counters=None):
    """Forest negative log likelihood: mean over trees of per-tree NLL."""
    outputs, _ = model.backbone.forward(np.atleast_2d(x))
    return loss_from_outputs(model, outputs, targets, counters)


def gamma_batch(topology, p_leaf, log_pdf, counters=None):
    """Subtree density ratios for every node, one bottom-up pass.

    Leaf entries are ``P(leaf) * density / mixture density``; each split
    node is the sum of its children. Samples whose mixture density fell
    below the floor get a uniform distribution over leaves (recorded).
    """
    p_leaf = np.atleast_2d(p_leaf)
    log_mix = log_probabilities(p_leaf) + log_pdf
    log_p = logsumexp(log_mix, axis=1)
    below = log_p < LOG_DENSITY_FLOOR
    n, leaf_count = p_leaf.shape
    gamma_leaf = np.exp(log_mix - np.where(below, 0.0, log_p)[:, None])
    if np.any(below):
        gamma_leaf[below] = 1.0 / leaf_count
        if counters is not None:
            counters.density_floor += int(np.count_nonzero(below))
    gammas = np.empty((n, topology.node_count))
    gammas[:, topology.split_count:] = gamma_leaf
    for node in range(topology.split_count - 1, -1, -1):
        gammas[:, node] = gammas[:, topology.left(node)] + gammas[:, topology.right(node)]
    return gammas, below


def gamma_bottom_up(topology, p_leaf, leaves, y, counters=None):
    """Single-sample node ratios over the whole heap array."""
    p_leaf = np.asarray(p_leaf, dtype=np.float64)
    log_pdf = leaf_log_densities(leaves, as_target_matrix(y, leaves[0].dim))
    gammas, _ = gamma_batch(topology, p_leaf.reshape(1, -1), log_pdf, counters)
    return gammas[0]


def loss_and_grad_from_outputs(model, outputs, targets, counters=None):
    """Forest NLL and its exact gradient with respect to backbone outputs.

    Per sample and split node the contribution is
    ``s_left * gamma(right child) - s_right * gamma(left child)``,
    accumulated into the unit that node reads (units shared by several
    nodes sum their contributions) and scaled by 1/(N * n_trees).
    Samples clamped at the density floor sit on a flat stretch of the
    loss, so they contribute zero gradient.
    """
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    targets = as_target_matrix(targets, model.d_y)
    n = outputs.shape[0]
    if n == 0:
        raise ValueError("batch must be non-empty")
    grad = np.zeros_like(outputs)
    total_loss = 0.0
    for tree in model.trees:
        topology = tree.topology
        s_left, s_right, p_leaf = routing_batch(topology, tree.index_fn, outputs)
        log_pdf = leaf_log_densities(tree.leaves, targets)
        raw = logsumexp(log_probabilities(p_leaf) + log_pdf, axis=1)
        total_loss += -float(np.mean(np.maximum(raw, LOG_DENSITY_FLOOR)))
        if counters is not None:
            counters.density_floor += int(np.count_nonzero(raw < LOG_DENSITY_FLOOR))
        gammas, floored = gamma_batch(topology, p_leaf, log_pdf)
        left = 2 * np.arange(topology.split_count) + 1
        contrib = s_left * gammas[:, left + 1] - s_right * gammas[:, left]
        if np.any(floored):
            contrib[floored] = 0.0
        for node, unit in enumerate(tree.index_fn.unit_of_node):
            grad[:, unit] += contrib[:, node]
    scale = 1.0 / (n * model.n_trees)
    return total_loss / model.n_trees, grad * scale


def grad_loss_wrt_f(model, x, targets, counters=None):
    """(N, M) gradient of the forest NLL at the backbone output interface."""
    outputs, _ = model.backbone.forward(np.atleast_2d(x))
    _, grad = loss_and_grad_from_outputs(model, outputs, targets, counters)
    return grad
