"""Predictive sampling and entropy-based uncertainty decomposition.

A prediction is summarised by a matrix of class-probability rows, one per
stochastic forward pass (MC Dropout) or ensemble member. Total uncertainty
is the entropy of the mean row, data uncertainty the mean of the row
entropies, and model uncertainty their difference. Entropies are in bits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._seeding import derive_seed
from .errors import DataError, InputShapeError, InvariantError
from .nn_core import draw_masks, forward_batch

METHODS = ("standard", "mc_dropout", "deep_ensemble")
ROW_SUM_TOL = 1e-9
CLAMP_TOL = 1e-9
UNCERTAINTY_COLUMNS = ("obs_id", "p_class1", "pred_label", "true_label", "u_total", "u_data", "u_model")

_CHUNK_ROWS = 8192


@dataclass(frozen=True, eq=False)
class PredictiveMatrix:
    """``S x K`` class-probability samples for one input."""

    probs: np.ndarray
    source: str = "standard"

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 2:
            raise ValueError(f"probs must be S x K with S >= 1 and K >= 2, got shape {p.shape}")
        if self.source not in METHODS:
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "standard" and p.shape[0] != 1:
            raise ValueError("a standard prediction has exactly one row")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError("every row must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_class1(cls, p1, source):
        p1 = np.asarray(p1, dtype=np.float64).reshape(-1)
        return cls(_binary_rows(p1), source)

    @property
    def n_samples(self):
        return self.probs.shape[0]


def _binary_rows(p1):
    """Materialise class-1 probabilities as ``(p_class0, p_class1)`` rows."""
    return np.stack([1.0 - p1, p1], axis=-1)


class UncertaintyTriple(NamedTuple):
    total: float
    data: float
    model: float


# -- samplers --------------------------------------------------------------

def _as_vector(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputShapeError(f"expected a single feature vector, got shape {x.shape}")
    return x


def predict_standard(model, x):
    p1 = forward_batch(model, _as_vector(x)[None, :])
    return PredictiveMatrix(_binary_rows(p1), "standard")


def predict_mc_dropout(model, x, T, seed):
    """``T`` forward passes with fresh dropout masks drawn from ``default_rng(seed)``."""
    if T < 1:
        raise ValueError("MC Dropout needs T >= 1 forward passes")
    x = _as_vector(x)
    masks = draw_masks(np.random.default_rng(seed), T, model.config)
    p1 = forward_batch(model, np.repeat(x[None, :], T, axis=0), dropout_active=True, masks=masks)
    return PredictiveMatrix(_binary_rows(p1), "mc_dropout")


def _check_ensemble(models):
    if len(models) < 1:
        raise ValueError("an ensemble needs at least one model")
    dims = {m.input_dim for m in models}
    if len(dims) != 1:
        raise InputShapeError(f"ensemble members disagree on input_dim: {sorted(dims)}")


def predict_deep_ensemble(models, x):
    _check_ensemble(models)
    x = _as_vector(x)[None, :]
    p1 = np.array([forward_batch(m, x)[0] for m in models])
    return PredictiveMatrix(_binary_rows(p1), "deep_ensemble")


# -- decomposition ---------------------------------------------------------

def mean_prediction(pm):
    return pm.probs.mean(axis=0)


def predicted_label(mean_probs):
    """Class 1 iff its mean probability is strictly above 0.5."""
    mean_probs = np.asarray(mean_probs)
    return (mean_probs[..., 1] > 0.5).astype(np.int64)


def _entropy_rows(p):
    safe = np.where(p > 0, p, 1.0)
    return -np.sum(np.where(p > 0, p * np.log2(safe), 0.0), axis=-1)


def entropy_bits(p):
    """Shannon entropy in bits with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > ROW_SUM_TOL:
        raise ValueError(f"not a probability vector: {p}")
    return float(_entropy_rows(p))


def decompose_arrays(probs):
    """Vectorised decomposition of ``(N, S, K)`` samples.

    Returns ``(mean, total, data, model, model_raw)`` where ``model_raw`` is
    the unclamped difference. ``model`` is adjusted so that
    ``data + model == total`` holds exactly in floating point.
    """
    probs = np.asarray(probs, dtype=np.float64)
    mean = probs.mean(axis=1)
    total = _entropy_rows(mean)
    data = _entropy_rows(probs).mean(axis=1)
    raw = total - data
    if np.any(raw < -CLAMP_TOL):
        i = int(np.argmin(raw))
        raise InvariantError(f"negative model uncertainty {raw[i]:.3e} at row {i}")
    neg = raw < 0
    # tiny round-off below zero: model is 0 and data absorbs the gap
    data = np.where(neg, total, data)
    model = np.where(neg, 0.0, raw)
    data, model = _make_additive(total, data, model)
    return mean, total, data, model, raw


def _make_additive(total, data, model):
    """Move ``data``/``model`` by at most one ulp each so their sum is ``total``.

    ``total - data`` rounded is not always exactly recoverable by adding
    ``data`` back; a one-ulp adjustment always is.
    """
    bad = data + model != total
    for d_dir in (None, np.inf, -np.inf):
        for m_dir in (None, np.inf, -np.inf):
            if not bad.any():
                return data, model
            d = data if d_dir is None else np.nextafter(data, d_dir)
            m = total - d
            if m_dir is not None:
                m = np.nextafter(m, m_dir)
            fix = bad & (d + m == total) & (m >= 0) & (d >= 0)
            data = np.where(fix, d, data)
            model = np.where(fix, m, model)
            bad &= ~fix
    if bad.any():
        raise InvariantError("could not make total == data + model exactly")
    return data, model


def decompose(pm, clamp=True):
    """Split predictive entropy into ``(total, data, model)`` bits."""
    _, total, data, model, raw = decompose_arrays(pm.probs[None])
    if not clamp:
        data_raw = float(_entropy_rows(pm.probs).mean())
        return UncertaintyTriple(float(total[0]), data_raw, float(raw[0]))
    return UncertaintyTriple(float(total[0]), float(data[0]), float(model[0]))


# -- batch pipeline --------------------------------------------------------

def sample_matrix(method, models, X, seed=0, T=128):
    """Class-probability samples of shape ``(N, S, 2)`` for every row of ``X``.

    ``models`` is one :class:`Mlp` for ``standard`` / ``mc_dropout`` and a
    sequence for ``deep_ensemble``. Input ``i`` under MC Dropout uses the
    stream ``derive_seed(seed, i)``, so results do not depend on batch order.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    members = list(models) if method == "deep_ensemble" else [models]
    if method == "deep_ensemble":
        _check_ensemble(members)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != members[0].input_dim:
        raise InputShapeError(f"model expects {members[0].input_dim} features, got shape {X.shape}")
    bad = ~np.all(np.isfinite(X), axis=1)
    if bad.any():
        raise InputShapeError(f"input {int(np.argmax(bad))} has non-finite features")
    n = X.shape[0]
    if n == 0:
        return np.zeros((0, 1 if method == "standard" else (T if method == "mc_dropout" else len(members)), 2))

    if method == "standard":
        p1 = forward_batch(members[0], X)[:, None]
    elif method == "deep_ensemble":
        p1 = np.stack([forward_batch(m, X) for m in members], axis=1)
    else:
        if T < 1:
            raise ValueError("MC Dropout needs T >= 1 forward passes")
        model = members[0]
        p1 = np.empty((n, T))
        per_chunk = max(1, _CHUNK_ROWS // T)
        for start in range(0, n, per_chunk):
            stop = min(n, start + per_chunk)
            mask_sets = [draw_masks(np.random.default_rng(derive_seed(seed, i)), T, model.config)
                         for i in range(start, stop)]
            masks = [np.concatenate(layer) for layer in zip(*mask_sets)]
            Xr = np.repeat(X[start:stop], T, axis=0)
            p1[start:stop] = forward_batch(model, Xr, dropout_active=True, masks=masks).reshape(-1, T)
    return _binary_rows(p1)


@dataclass(frozen=True, eq=False)
class BatchUncertainty:
    """Per-input mean predictions and uncertainty components."""

    mean: np.ndarray
    total: np.ndarray
    data: np.ndarray
    model: np.ndarray

    def __len__(self):
        return self.mean.shape[0]

    def __getitem__(self, i):
        return self.mean[i], UncertaintyTriple(float(self.total[i]), float(self.data[i]), float(self.model[i]))

    @property
    def p_class1(self):
        return self.mean[:, 1]

    @property
    def pred_label(self):
        return predicted_label(self.mean)

    def component(self, name):
        if name not in ("total", "data", "model"):
            raise ValueError(f"unknown uncertainty component {name!r}")
        return getattr(self, name)


def batch_uncertainty(method, models, X, seed=0, T=128):
    mean, total, data, model, _ = decompose_arrays(sample_matrix(method, models, X, seed, T))
    return BatchUncertainty(mean, total, data, model)


# -- CSV -------------------------------------------------------------------

def _g9(v):
    return format(float(v), ".9g")


def write_uncertainty_csv(path, result, true_labels, obs_ids=None):
    n = len(result)
    obs_ids = range(n) if obs_ids is None else obs_ids
    true_labels = np.asarray(true_labels)
    if true_labels.shape != (n,):
        raise ValueError(f"{true_labels.shape} true labels for {n} predictions")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(UNCERTAINTY_COLUMNS)
        for i, oid in enumerate(obs_ids):
            w.writerow([
                oid, _g9(result.mean[i, 1]), int(result.pred_label[i]), int(true_labels[i]),
                _g9(result.total[i]), _g9(result.data[i]), _g9(result.model[i]),
            ])


@dataclass(frozen=True, eq=False)
class UncertaintyTable:
    obs_id: list
    p_class1: np.ndarray
    pred_label: np.ndarray
    true_label: np.ndarray
    total: np.ndarray
    data: np.ndarray
    model: np.ndarray

    def __len__(self):
        return len(self.obs_id)

    @property
    def correct(self):
        return self.pred_label == self.true_label

    def component(self, name):
        if name not in ("total", "data", "model"):
            raise ValueError(f"unknown uncertainty component {name!r}")
        return getattr(self, name)


def read_uncertainty_csv(path):
    """Parse an uncertainty CSV; raises :class:`DataError` on schema problems."""
    cols = {c: [] for c in UNCERTAINTY_COLUMNS}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in UNCERTAINTY_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: line 1: missing columns {missing}")
        pos = {c: header.index(c) for c in UNCERTAINTY_COLUMNS}
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            cols["obs_id"].append(row[pos["obs_id"]])
            for c in UNCERTAINTY_COLUMNS[1:]:
                try:
                    v = float(row[pos[c]])
                except ValueError:
                    raise DataError(f"{path}: line {line}: bad {c} value {row[pos[c]]!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: line {line}: non-finite {c}")
                cols[c].append(v)
    if len(set(cols["obs_id"])) != len(cols["obs_id"]):
        raise DataError(f"{path}: duplicate obs_id values")
    for c in ("pred_label", "true_label"):
        if not all(v in (0.0, 1.0) for v in cols[c]):
            raise DataError(f"{path}: {c} must be 0 or 1")
    return UncertaintyTable(
        obs_id=cols["obs_id"],
        p_class1=np.array(cols["p_class1"]),
        pred_label=np.array(cols["pred_label"], dtype=np.int64),
        true_label=np.array(cols["true_label"], dtype=np.int64),
        total=np.array(cols["u_total"]),
        data=np.array(cols["u_data"]),
        model=np.array(cols["u_model"]),
    )
