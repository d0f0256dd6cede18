"""Leaf distribution estimation.

Leaves are initialized by k-means over the targets and then refit, with
routing frozen, by an iterative reweighting scheme: each pass computes
per-sample leaf responsibilities from the current densities, then replaces
every leaf's mean with the responsibility-weighted target mean and its
covariance with the responsibility-weighted scatter about that new mean.
Each pass minimizes a Jensen upper bound that is tight at the current
iterate, so the tree NLL cannot increase (except through the covariance
floor, which is counted when it fires).
"""

from __future__ import annotations

import numpy as np

from .forest import LOG_DENSITY_FLOOR, EventCounters
from .gaussian import (
    LeafGaussian,
    as_target_matrix,
    floor_covariance,
    leaf_log_densities,
    log_probabilities,
    logsumexp,
)

DEFAULT_COV_EPSILON = 1e-4

# a leaf whose total responsibility mass falls below this is left untouched
STARVATION_THRESHOLD = 1e-12

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-8


def _kmeans_plusplus(targets, k, rng):
    n = targets.shape[0]
    centers = np.empty((k, targets.shape[1]))
    centers[0] = targets[rng.integers(0, n)]
    closest = np.sum((targets - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[j] = targets[rng.integers(0, n)]
        else:
            centers[j] = targets[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, np.sum((targets - centers[j]) ** 2, axis=1))
    return centers


def _assign(targets, centers):
    # argmin breaks ties toward the lowest cluster index
    d2 = np.sum((targets[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1), d2


def kmeans_init(targets, leaf_count, seed, cov_epsilon=DEFAULT_COV_EPSILON):
    """Cluster targets and build one Gaussian per cluster.

    Lloyd iterations with seeded k-means++ starts; empty clusters are
    reseeded from the point farthest from its nearest center. The
    returned leaves are sorted by the first mean coordinate so the
    clustering itself is assignment-order free; callers permute them onto
    tree leaves.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    n = targets.shape[0]
    if n < leaf_count:
        raise ValueError(
            f"insufficient samples for initialization: {n} samples for {leaf_count} leaves"
        )
    rng = np.random.default_rng(seed)
    centers = _kmeans_plusplus(targets, leaf_count, rng)
    labels, d2 = _assign(targets, centers)
    for _ in range(KMEANS_MAX_ITER):
        new_centers = centers.copy()
        for j in range(leaf_count):
            members = labels == j
            if np.any(members):
                new_centers[j] = targets[members].mean(axis=0)
            else:
                nearest = np.min(d2, axis=1)
                new_centers[j] = targets[np.argmax(nearest)]
        move = float(np.max(np.abs(new_centers - centers)))
        centers = new_centers
        labels, d2 = _assign(targets, centers)
        if move < KMEANS_TOL:
            break
    # final fix-up: no cluster may end up empty (n >= leaf_count)
    for j in range(leaf_count):
        if not np.any(labels == j):
            nearest = np.min(d2, axis=1)
            candidates = np.argsort(-nearest, kind="stable")
            for idx in candidates:
                if np.count_nonzero(labels == labels[idx]) > 1:
                    labels[idx] = j
                    centers[j] = targets[idx]
                    break
    leaves = []
    for j in range(leaf_count):
        members = targets[labels == j]
        mean = members.mean(axis=0)
        diff = members - mean
        cov = diff.T @ diff / members.shape[0]
        cov, _ = floor_covariance(cov, cov_epsilon)
        leaves.append(LeafGaussian(mean, cov))
    order = np.argsort([leaf.mean[0] for leaf in leaves], kind="stable")
    return [leaves[j] for j in order]


def zeta_batch(p_leaf, leaves, targets, counters=None):
    """(N, L) leaf responsibilities: routing mass times density, normalized.

    Rows whose mixture density underflows the floor fall back to the
    uniform distribution (recorded). Rows always sum to one.
    """
    p_leaf = np.atleast_2d(np.asarray(p_leaf, dtype=np.float64))
    targets = as_target_matrix(targets, leaves[0].dim)
    log_mix = log_probabilities(p_leaf) + leaf_log_densities(leaves, targets)
    log_p = logsumexp(log_mix, axis=1)
    below = log_p < LOG_DENSITY_FLOOR
    zeta = np.exp(log_mix - np.where(below, 0.0, log_p)[:, None])
    if np.any(below):
        zeta[below] = 1.0 / p_leaf.shape[1]
        if counters is not None:
            counters.density_floor += int(np.count_nonzero(below))
    return zeta


def compute_zeta(p_leaf, leaves, y):
    """Single-sample responsibilities; equals the leaf part of the node ratios."""
    p_leaf = np.asarray(p_leaf, dtype=np.float64)
    return zeta_batch(p_leaf.reshape(1, -1), leaves, y)[0]


def tree_nll(p_leaf, leaves, targets):
    """Mean clamped negative log mixture density under fixed routing."""
    p_leaf = np.atleast_2d(np.asarray(p_leaf, dtype=np.float64))
    log_mix = log_probabilities(p_leaf) + leaf_log_densities(leaves, targets)
    raw = logsumexp(log_mix, axis=1)
    return -float(np.mean(np.maximum(raw, LOG_DENSITY_FLOOR)))


def update_leaves(leaves, p_leaf, targets, iterations=20, cov_epsilon=DEFAULT_COV_EPSILON,
                  counters=None):
    """Refit leaf Gaussians with routing frozen.

    Returns ``(new_leaves, nll_trace)`` where the trace holds the tree
    NLL before the first pass and after each of the ``iterations``
    passes; absent covariance-floor events it is non-increasing.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    p_leaf = np.atleast_2d(np.asarray(p_leaf, dtype=np.float64))
    targets = as_target_matrix(targets, leaves[0].dim)
    if p_leaf.shape[0] != targets.shape[0]:
        raise ValueError("routing and targets disagree on sample count")
    if counters is None:
        counters = EventCounters()
    leaves = list(leaves)
    trace = [tree_nll(p_leaf, leaves, targets)]
    for _ in range(iterations):
        zeta = zeta_batch(p_leaf, leaves, targets, counters)
        new_leaves = []
        for j, leaf in enumerate(leaves):
            w = zeta[:, j]
            mass = float(w.sum())
            if mass < STARVATION_THRESHOLD:
                counters.starved_leaves += 1
                new_leaves.append(leaf)
                continue
            mean = (w @ targets) / mass
            diff = targets - mean
            cov = (diff * w[:, None]).T @ diff / mass
            cov, floored = floor_covariance(cov, cov_epsilon)
            if floored:
                counters.cov_floor += 1
            new_leaves.append(LeafGaussian(mean, cov))
        leaves = new_leaves
        trace.append(tree_nll(p_leaf, leaves, targets))
    return leaves, trace
