"""Datasets, CSV I/O, standardization, seeded splits and shift generators."""

from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._seeding import derive_seed
from .errors import DataError

LABEL_COLUMN = "label"
SHIFT_LEVELS = ("none", "small", "large")


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(self.feature_names))
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} feature rows")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        if y.size and not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
        y = y.astype(np.int64)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)

    def equals(self, other):
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


# -- CSV -------------------------------------------------------------------

def load_csv(path):
    """Read a header-first CSV with a ``label`` column and numeric features."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if LABEL_COLUMN not in header:
            raise DataError(f"{path}: line 1: missing '{LABEL_COLUMN}' column")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: line 1: duplicate column names")
        li = header.index(LABEL_COLUMN)
        names = [h for i, h in enumerate(header) if i != li]
        rows, labels = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            values = []
            for i, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: line {line}: non-numeric value {cell!r} in column '{header[i]}'") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: line {line}: non-finite value {cell!r} in column '{header[i]}'")
                values.append(v)
            label = values.pop(li)
            if label not in (0.0, 1.0):
                raise DataError(f"{path}: line {line}: label must be 0 or 1, got {row[li]!r}")
            rows.append(values)
            labels.append(int(label))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels), tuple(names))


def save_csv(ds, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*ds.feature_names, LABEL_COLUMN])
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([*(format(float(v), ".17g") for v in x), int(y)])


# -- standardization -------------------------------------------------------

@dataclass(frozen=True)
class StandardizerParams:
    """Per-feature z-score parameters fitted on training data.

    Only features in ``kept`` (by name) survive; zero-variance features are
    listed in ``dropped``.
    """

    feature_names: tuple
    kept: tuple
    mean: tuple
    std: tuple
    dropped: tuple = ()

    def to_dict(self):
        return {k: list(v) for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) for k, v in d.items()})


def standardize_fit(train):
    if len(train) == 0:
        raise DataError("cannot fit a standardizer on an empty dataset")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    const = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    dropped = tuple(n for n, c in zip(train.feature_names, const) if c)
    if dropped:
        warnings.warn(f"dropping zero-variance features: {', '.join(dropped)}", stacklevel=2)
    keep = ~const
    return StandardizerParams(
        feature_names=train.feature_names,
        kept=tuple(n for n, k in zip(train.feature_names, keep) if k),
        mean=tuple(float(v) for v in mean[keep]),
        std=tuple(float(v) for v in std[keep]),
        dropped=dropped,
    )


def standardize_apply(params, ds):
    if tuple(ds.feature_names) != tuple(params.feature_names):
        raise DataError(
            f"feature columns {list(ds.feature_names)} do not match the fitted {list(params.feature_names)}"
        )
    idx = [ds.feature_names.index(n) for n in params.kept]
    Z = (ds.features[:, idx] - np.array(params.mean)) / np.array(params.std)
    return Dataset(Z, ds.labels, params.kept)


# -- splitting -------------------------------------------------------------

def split(ds, fraction, seed):
    """Seeded shuffle, then cut: the first part holds ``floor(fraction * n)`` rows."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"split fraction must lie in (0, 1), got {fraction}")
    n = len(ds)
    k = int(math.floor(fraction * n + 1e-9))
    if k == 0 or k == n:
        raise DataError(f"fraction {fraction} of {n} rows leaves an empty side")
    perm = np.random.default_rng(derive_seed(seed, 0x5B117)).permutation(n)
    return ds.subset(np.sort(perm[:k])), ds.subset(np.sort(perm[k:]))


# -- synthetic generators --------------------------------------------------

@dataclass(frozen=True)
class TwoRegionSpec:
    """Two truncated Gaussian class clusters in the plane.

    Cluster centres sit at ``(-separation, 0)`` (class 0) and
    ``(+separation, 0)`` (class 1) with isotropic ``cluster_std``. Points
    further than ``truncate`` standard deviations from their centre are
    redrawn, so the training mass stays in a bounded box and far-away space
    stays empty.
    """

    separation: float = 1.2
    cluster_std: float = 1.0
    class_prior: float = 0.56
    truncate: float = 3.0

    def centers(self):
        return np.array([[-self.separation, 0.0], [self.separation, 0.0]])


@dataclass(frozen=True)
class ShiftSpec:
    """Covariate and prior shift applied on top of a :class:`TwoRegionSpec`.

    ``mean_shift`` is in units of ``cluster_std``; rotation is about the
    origin and is applied before the translation.
    """

    level: str = "none"
    mean_shift: tuple = (0.0, 0.0)
    rotation_degrees: float = 0.0
    label_flip_rate: float = 0.0
    class_prior: float = 0.56

    def __post_init__(self):
        object.__setattr__(self, "mean_shift", tuple(float(v) for v in self.mean_shift))
        if len(self.mean_shift) != 2:
            raise DataError("mean_shift must have two components")
        if not 0.0 <= self.label_flip_rate <= 0.5:
            raise DataError("label_flip_rate must lie in [0, 0.5]")
        if not 0.0 < self.class_prior < 1.0:
            raise DataError("class_prior must lie in (0, 1)")

    @classmethod
    def preset(cls, level, base=None, direction=(0.0, 1.0), small_shift=1.0, large_shift=4.0,
               large_rotation=45.0):
        base = base or TwoRegionSpec()
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        if level == "none":
            return cls("none", (0.0, 0.0), 0.0, 0.0, base.class_prior)
        if level == "small":
            return cls("small", tuple(small_shift * d), 0.0, 0.0, 0.46)
        if level == "large":
            return cls("large", tuple(large_shift * d), large_rotation, 0.0, 0.28)
        raise DataError(f"unknown shift level {level!r}; expected one of {SHIFT_LEVELS}")


FEATURE_NAMES = ("x0", "x1")


def gen_shifted(base_spec, shift, n, seed):
    rng = np.random.default_rng(derive_seed(seed, 0x6E4))
    labels = (rng.random(n) < shift.class_prior).astype(np.int64)
    centers = base_spec.centers()[labels]
    z = rng.standard_normal((n, 2))
    bad = np.linalg.norm(z, axis=1) > base_spec.truncate
    while bad.any():
        z[bad] = rng.standard_normal((int(bad.sum()), 2))
        bad = np.linalg.norm(z, axis=1) > base_spec.truncate
    X = centers + base_spec.cluster_std * z

    theta = math.radians(shift.rotation_degrees)
    if theta:
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        X = X @ rot.T
    X = X + base_spec.cluster_std * np.asarray(shift.mean_shift)

    flips = rng.random(n) < shift.label_flip_rate
    labels = np.where(flips, 1 - labels, labels)
    return Dataset(X, labels, FEATURE_NAMES)


def gen_two_region(n, seed, spec=None):
    """Unshifted training distribution; identical to ``gen_shifted`` at level none."""
    if n < 4:
        raise DataError("gen_two_region needs n >= 4")
    spec = spec or TwoRegionSpec()
    return gen_shifted(spec, ShiftSpec.preset("none", spec), n, seed)
