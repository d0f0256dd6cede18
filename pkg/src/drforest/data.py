"""Tabular dataset handling: CSV load/save, standardization, synthetic tasks.

The CSV dialect is fixed: comma separated, '.' decimal point, UTF-8, with a
mandatory header. Feature columns are named ``x0..x{d_x-1}`` and target
columns ``y0..y{d_y-1}``. Numbers are written with 17 significant digits so
a save/load round trip preserves float64 values exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

FLOAT_FORMAT = ".17g"


@dataclass
class Dataset:
    """Immutable N-sample tabular regression dataset."""

    features: np.ndarray
    targets: np.ndarray
    feature_names: list
    target_names: list

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("features and targets must be 2-d arrays")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets disagree on sample count")
        if self.features.shape[0] == 0:
            raise ValueError("dataset must contain at least one sample")
        if not np.all(np.isfinite(self.features)) or not np.all(np.isfinite(self.targets)):
            raise ValueError("dataset contains non-finite values")

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def d_x(self):
        return self.features.shape[1]

    @property
    def d_y(self):
        return self.targets.shape[1]


@dataclass
class ColumnStats:
    """Per-column mean/std for standardization; constant columns get std 1."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        mean = matrix.mean(axis=0)
        std = matrix.std(axis=0)
        constant = std == 0.0
        std = np.where(constant, 1.0, std)
        return cls(mean=mean, std=std, constant=constant)

    def transform(self, matrix):
        return (np.asarray(matrix, dtype=np.float64) - self.mean) / self.std

    def inverse(self, matrix):
        return np.asarray(matrix, dtype=np.float64) * self.std + self.mean


@dataclass
class DatasetStats:
    features: ColumnStats
    targets: ColumnStats


def standardize(dataset):
    """Zero-mean unit-std copy of the dataset plus the stats to invert it."""
    stats = DatasetStats(
        features=ColumnStats.fit(dataset.features),
        targets=ColumnStats.fit(dataset.targets),
    )
    out = Dataset(
        features=stats.features.transform(dataset.features),
        targets=stats.targets.transform(dataset.targets),
        feature_names=list(dataset.feature_names),
        target_names=list(dataset.target_names),
    )
    return out, stats


def _column_group(header, prefix):
    """Indices of prefix0..prefixk-1 columns, enforcing dense numbering."""
    numbered = {}
    for pos, name in enumerate(header):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            numbered[int(name[len(prefix):])] = pos
    count = len(numbered)
    for i in range(count):
        if i not in numbered:
            raise ValueError(f"missing column \"{prefix}{i}\"")
    return [numbered[i] for i in range(count)]


def load_csv(path, require_targets=True):
    """Load a dataset CSV; targets may be absent for prediction inputs."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty file: {path}") from None
        header = [name.strip() for name in header]
        x_cols = _column_group(header, "x")
        y_cols = _column_group(header, "y")
        if not x_cols:
            raise ValueError('missing column "x0"')
        if require_targets and not y_cols:
            raise ValueError('missing column "y0"')
        features = []
        targets = []
        for row_idx, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"row {row_idx} has {len(row)} cells, expected {len(header)}")
            try:
                features.append([float(row[c]) for c in x_cols])
            except ValueError:
                bad = next(c for c in x_cols if not _parses(row[c]))
                raise ValueError(
                    f"non-numeric cell {row[bad]!r} at row {row_idx}, column \"{header[bad]}\""
                ) from None
            try:
                targets.append([float(row[c]) for c in y_cols])
            except ValueError:
                bad = next(c for c in y_cols if not _parses(row[c]))
                raise ValueError(
                    f"non-numeric cell {row[bad]!r} at row {row_idx}, column \"{header[bad]}\""
                ) from None
    if not features:
        raise ValueError(f"no data rows in {path}")
    return Dataset(
        features=np.array(features, dtype=np.float64),
        targets=np.array(targets, dtype=np.float64).reshape(len(features), len(y_cols)),
        feature_names=[f"x{i}" for i in range(len(x_cols))],
        target_names=[f"y{i}" for i in range(len(y_cols))],
    )


def _parses(cell):
    try:
        float(cell)
        return True
    except ValueError:
        return False


def write_matrix_csv(path, matrix, names):
    """Write a float matrix with the given column names at full precision."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.shape[1] != len(names):
        raise ValueError("column name count does not match matrix width")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(names)
        for row in matrix:
            writer.writerow([format(v, FLOAT_FORMAT) for v in row])


def save_csv(dataset, path):
    matrix = np.hstack([dataset.features, dataset.targets])
    write_matrix_csv(path, matrix, dataset.feature_names + dataset.target_names)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic regression task."""

    task: str
    n: int
    noise: float
    seed: int


def _gen_piecewise(spec, rng):
    # two linear regimes with a jump at zero: y = 3x + 1 left, -2x + 5 right
    x = rng.uniform(-3.0, 3.0, size=spec.n)
    y = np.where(x < 0.0, 3.0 * x + 1.0, -2.0 * x + 5.0)
    y = y + rng.normal(0.0, spec.noise, size=spec.n) if spec.noise > 0 else y
    return x.reshape(-1, 1), y.reshape(-1, 1)


def _gen_bimodal(spec, rng):
    # two input clusters, each with its own nonlinear map:
    # cluster 0 at x ~ N(-2, 0.5^2): y = sin(2x) + 1
    # cluster 1 at x ~ N(+2, 0.5^2): y = 0.5 x^2 - 3
    cluster = rng.integers(0, 2, size=spec.n)
    x = rng.normal(np.where(cluster == 0, -2.0, 2.0), 0.5)
    y = np.where(cluster == 0, np.sin(2.0 * x) + 1.0, 0.5 * x * x - 3.0)
    y = y + rng.normal(0.0, spec.noise, size=spec.n) if spec.noise > 0 else y
    return x.reshape(-1, 1), y.reshape(-1, 1)


def _gen_hetero_noise(spec, rng):
    # y = sin(3x) with input-dependent noise scale noise * (0.1 + |x|)
    x = rng.uniform(-2.0, 2.0, size=spec.n)
    y = np.sin(3.0 * x)
    if spec.noise > 0:
        y = y + rng.normal(0.0, 1.0, size=spec.n) * spec.noise * (0.1 + np.abs(x))
    return x.reshape(-1, 1), y.reshape(-1, 1)


SYNTH_TASKS = {
    "piecewise": _gen_piecewise,
    "bimodal": _gen_bimodal,
    "hetero-noise": _gen_hetero_noise,
}


def generate_synthetic(spec):
    """Deterministic synthetic dataset for a named task."""
    if spec.task not in SYNTH_TASKS:
        known = ", ".join(sorted(SYNTH_TASKS))
        raise ValueError(f"unknown task {spec.task!r}; valid tasks: {known}")
    if spec.n < 1:
        raise ValueError("sample count must be positive")
    if spec.noise < 0:
        raise ValueError("noise level must be non-negative")
    rng = np.random.default_rng(spec.seed)
    features, targets = SYNTH_TASKS[spec.task](spec, rng)
    return Dataset(
        features=features,
        targets=targets,
        feature_names=[f"x{i}" for i in range(features.shape[1])],
        target_names=[f"y{i}" for i in range(targets.shape[1])],
    )
