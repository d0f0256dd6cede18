"""Gaussian leaf densities and numerically stable log-domain helpers."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

LOG_2PI = float(np.log(2.0 * np.pi))


def log_probabilities(p):
    """Elementwise log of probabilities; exact zeros map to -inf silently."""
    with np.errstate(divide="ignore"):
        return np.log(p)


def logsumexp(a, axis=None):
    """log(sum(exp(a))) with the usual max shift.

    Rows that are uniformly -inf come back as -inf instead of nan.
    """
    a = np.asarray(a, dtype=np.float64)
    amax = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - shift), axis=axis))
    if axis is None:
        return float(out + shift.reshape(()))
    return out + np.squeeze(shift, axis=axis)


def floor_covariance(cov, epsilon):
    """Clamp the eigenvalues of a covariance matrix at ``epsilon``.

    Returns ``(floored, activated)``. When no eigenvalue is below the
    floor the symmetrized input is returned unchanged, so well-conditioned
    matrices pass through bit-exactly.
    """
    cov = np.asarray(cov, dtype=np.float64)
    sym = 0.5 * (cov + cov.T)
    eigvals = np.linalg.eigvalsh(sym)
    if eigvals[0] >= epsilon:
        return sym, False
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, epsilon)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T), True


class LeafGaussian:
    """A single leaf's Gaussian density over targets.

    Stores the mean and covariance together with the cached Cholesky
    factor and log-normalizer needed for evaluation; instances are
    immutable in practice (updates build new leaves), so evaluation is
    safe from concurrent threads.
    """

    __slots__ = ("mean", "cov", "_chol", "_log_norm", "_inv_var")

    def __init__(self, mean, cov):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("non-finite leaf parameters")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        self.mean = mean
        self.cov = 0.5 * (cov + cov.T)
        try:
            self._chol = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as err:
            raise ValueError("covariance is not positive definite") from err
        log_det = 2.0 * float(np.sum(np.log(np.diag(self._chol))))
        self._log_norm = -0.5 * (d * LOG_2PI + log_det)
        # scalar fast path for one-dimensional targets
        self._inv_var = 1.0 / self.cov[0, 0] if d == 1 else None

    @property
    def dim(self):
        return self.mean.shape[0]

    def copy(self):
        return LeafGaussian(self.mean.copy(), self.cov.copy())

    def _check_targets(self, y):
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim <= 1
        y = np.atleast_2d(y)
        if y.shape[1] != self.dim:
            raise ValueError(f"invalid target: expected dimension {self.dim}, got {y.shape[1]}")
        if not np.all(np.isfinite(y)):
            raise ValueError("invalid target: non-finite value")
        return y, single

    def log_density(self, y):
        """Log of the Gaussian density at ``y`` (one row or a batch)."""
        y, single = self._check_targets(y)
        if self._inv_var is not None:
            diff = y[:, 0] - self.mean[0]
            out = self._log_norm - 0.5 * diff * diff * self._inv_var
        else:
            out = self._log_density_full(y)
        return float(out[0]) if single else out

    def _log_density_full(self, y):
        # general matrix path; the d=1 fast path must agree with this
        diff = (np.atleast_2d(y) - self.mean).T
        u = solve_triangular(self._chol, diff, lower=True)
        return self._log_norm - 0.5 * np.sum(u * u, axis=0)

    def density(self, y):
        return np.exp(self.log_density(y))

    def __repr__(self):
        return f"LeafGaussian(mean={self.mean!r}, cov={self.cov!r})"


def gaussian_log_density(leaf, y):
    """Functional alias for :meth:`LeafGaussian.log_density`."""
    return leaf.log_density(y)


def as_target_matrix(targets, dim):
    """Coerce targets to an (N, dim) float matrix.

    A 1-D array is read as N scalar targets when dim is 1, otherwise as a
    single sample.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1) if dim == 1 else targets.reshape(1, -1)
    if targets.ndim != 2 or targets.shape[1] != dim:
        raise ValueError(f"invalid target: expected shape (N, {dim}), got {targets.shape}")
    return targets


def leaf_log_densities(leaves, targets):
    """(N, L) matrix of per-leaf log densities for a batch of targets."""
    targets = as_target_matrix(targets, leaves[0].dim)
    return np.stack([leaf.log_density(targets) for leaf in leaves], axis=1)
