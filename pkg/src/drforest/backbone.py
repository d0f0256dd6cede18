"""Feature backbone: a linear map or small MLP with hand-rolled gradients.

Hidden layers use rectifier activations, the output layer is linear.
All parameters live in one flat, order-stable vector so optimizer steps,
gradient checks and serialization agree on layout: for each layer the
weight matrix (row-major) followed by its bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Backbone:
    """Maps inputs of width ``in_dim`` to ``out_dim`` activation units."""

    def __init__(self, in_dim, out_dim, hidden=(), rng=None):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("layer widths must be positive")
        self.widths = [int(in_dim), *[int(h) for h in hidden], int(out_dim)]
        if any(w < 1 for w in self.widths):
            raise ValueError("layer widths must be positive")
        rng = np.random.default_rng(rng)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-scale, scale, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))
        # bumped on every parameter write; caches from an older version
        # are refused by backward()
        self._version = 0

    @property
    def in_dim(self):
        return self.widths[0]

    @property
    def out_dim(self):
        return self.widths[-1]

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self):
        """Flat copy of all parameters."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        offset = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = theta[offset:offset + w.size].reshape(w.shape).copy()
            offset += w.size
            self.biases[i] = theta[offset:offset + b.size].copy()
            offset += b.size
        self._version += 1

    def forward(self, x):
        """Forward pass; returns ``(outputs, cache)`` for backward()."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input dimension mismatch: expected {self.in_dim}, got {x.shape[1]}")
        activations = [x]
        pre = []
        h = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            pre.append(z)
            h = z if i == last else np.maximum(z, 0.0)
            activations.append(h)
        cache = (self._version, activations, pre)
        out = h[0] if single else h
        return out, cache

    def backward(self, cache, d_out):
        """Exact reverse-mode gradients.

        ``d_out`` is the loss gradient at the output units, shaped like
        the forward output. Returns ``(d_theta, d_x)`` with ``d_theta``
        flat in parameter order and gradients summed over the batch.
        """
        version, activations, pre = cache
        if version != self._version:
            raise ValueError("stale forward cache: parameters changed since forward()")
        d_out = np.atleast_2d(np.asarray(d_out, dtype=np.float64))
        if d_out.shape != pre[-1].shape:
            raise ValueError(f"gradient shape {d_out.shape} does not match output {pre[-1].shape}")
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        dz = d_out
        for i in range(self.n_layers - 1, -1, -1):
            grads_w[i] = dz.T @ activations[i]
            grads_b[i] = dz.sum(axis=0)
            if i > 0:
                da = dz @ self.weights[i]
                dz = da * (pre[i - 1] > 0.0)
            else:
                dz = dz @ self.weights[0]
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts), dz


@dataclass
class SgdSchedule:
    """Step-decayed learning rate: halve (by ``decay``) every ``decay_interval`` steps."""

    learning_rate: float = 0.05
    decay: float = 0.5
    decay_interval: int = 10000
    iteration: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.decay_interval < 1:
            raise ValueError("decay interval must be positive")

    def rate_at(self, iteration):
        return self.learning_rate * self.decay ** (iteration // self.decay_interval)

    def current_rate(self):
        return self.rate_at(self.iteration)


def sgd_step(backbone, grads, schedule):
    """One plain SGD step; skips (and reports False) on non-finite gradients.

    The schedule's iteration counter advances either way, so the decay
    clock tracks training steps, not applied steps.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != (backbone.n_params,):
        raise ValueError(f"gradient length {grads.shape} does not match {backbone.n_params} parameters")
    applied = bool(np.all(np.isfinite(grads)))
    if applied:
        rate = schedule.current_rate()
        backbone.set_params(backbone.get_params() - rate * grads)
    schedule.iteration += 1
    return applied
