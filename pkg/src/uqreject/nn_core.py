"""Dropout MLP binary classifier written directly in numpy.

The network is a stack of ReLU hidden layers with inverted dropout followed
by a single sigmoid output unit. Weights use Glorot-uniform initialization,
biases start at zero, and training minimises mean binary cross-entropy with
Adam and validation-loss early stopping. Every random draw comes from a
seeded ``numpy.random.Generator`` so training is bit-reproducible.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from ._seeding import derive_seed, offset_seed
from .errors import ConfigError, InputShapeError, DataError

logger = logging.getLogger(__name__)

LOSS_CLIP = 1e-7

_UINT64_MAX = (1 << 64) - 1


@dataclass(frozen=True)
class MlpConfig:
    """Architecture and full training recipe of one network.

    ``split_seed`` seeds the train/validation split separately from
    ``seed`` (initialization, batch order, dropout masks). ``None`` means
    reuse ``seed``. Ensemble members share a split seed and differ in
    ``seed``.
    """

    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    dropout_rates: tuple[float, ...] = (0.4, 0.5)
    learning_rate: float = 5e-4
    epochs: int = 50
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    early_stop_patience: int = 5
    validation_fraction: float = 0.1
    seed: int = 0
    split_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "dropout_rates", tuple(float(r) for r in self.dropout_rates))
        self._validate()

    def _validate(self):
        def check(ok, msg):
            if not ok:
                raise ConfigError(msg)

        check(_is_int(self.input_dim) and self.input_dim >= 1, "input_dim must be a positive integer")
        check(all(h >= 1 for h in self.hidden_dims), "hidden_dims must be positive integers")
        check(
            len(self.dropout_rates) == len(self.hidden_dims),
            f"dropout_rates has {len(self.dropout_rates)} entries but hidden_dims has {len(self.hidden_dims)}",
        )
        check(all(0.0 <= r < 1.0 for r in self.dropout_rates), "dropout rates must lie in [0, 1)")
        check(self.learning_rate > 0 and math.isfinite(self.learning_rate), "learning_rate must be positive")
        check(_is_int(self.epochs) and self.epochs >= 1, "epochs must be a positive integer")
        check(_is_int(self.batch_size) and self.batch_size >= 1, "batch_size must be a positive integer")
        check(0.0 < self.adam_beta1 < 1.0, "adam_beta1 must lie in (0, 1)")
        check(0.0 < self.adam_beta2 < 1.0, "adam_beta2 must lie in (0, 1)")
        check(self.adam_epsilon > 0, "adam_epsilon must be positive")
        check(
            _is_int(self.early_stop_patience) and self.early_stop_patience >= 0,
            "early_stop_patience must be a nonnegative integer",
        )
        check(0.0 <= self.validation_fraction < 1.0, "validation_fraction must lie in [0, 1)")
        check(_is_int(self.seed) and 0 <= self.seed <= _UINT64_MAX, "seed must be an unsigned 64-bit integer")
        check(
            self.split_seed is None or (_is_int(self.split_seed) and 0 <= self.split_seed <= _UINT64_MAX),
            "split_seed must be an unsigned 64-bit integer or null",
        )

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_dims, 1)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["dropout_rates"] = list(self.dropout_rates)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown MlpConfig fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


@dataclass(frozen=True, eq=False)
class Mlp:
    """Trained (or freshly initialised) network parameters.

    ``weights[l]`` has shape ``(fan_in, fan_out)``; arrays are stored
    read-only so a model can be shared freely.
    """

    weights: tuple
    biases: tuple
    config: MlpConfig

    def __post_init__(self):
        ws = tuple(_frozen_array(w, 2) for w in self.weights)
        bs = tuple(_frozen_array(b, 1) for b in self.biases)
        sizes = self.config.layer_sizes
        if len(ws) != len(sizes) - 1 or len(bs) != len(ws):
            raise ConfigError(f"expected {len(sizes) - 1} weight/bias pairs, got {len(ws)}/{len(bs)}")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ConfigError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} do not chain as "
                    f"{sizes[i]}->{sizes[i + 1]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigError(f"layer {i} has non-finite parameters")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def input_dim(self):
        return self.config.input_dim

    @property
    def params(self):
        """Flat parameter list ``[W0, ..., WL, b0, ..., bL]``."""
        return [*self.weights, *self.biases]

    def with_params(self, params):
        n = len(self.weights)
        return Mlp(tuple(params[:n]), tuple(params[n:]), self.config)


def _frozen_array(a, ndim):
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ConfigError(f"expected a {ndim}-d parameter array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class TrainReport(NamedTuple):
    train_loss_per_epoch: list
    val_loss_per_epoch: list
    stopped_epoch: int
    best_epoch: int

    def to_dict(self):
        return self._asdict()


class AdamState(NamedTuple):
    m: list
    v: list
    t: int


# -- initialisation --------------------------------------------------------

def glorot_init(fan_in, fan_out, rng):
    """Glorot/Xavier uniform matrix on ``[-L, L]``, ``L = sqrt(6 / (fan_in + fan_out))``."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_mlp(config, rng):
    sizes = config.layer_sizes
    weights = [glorot_init(sizes[i], sizes[i + 1], rng) for i in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
    return Mlp(tuple(weights), tuple(biases), config)


# -- forward pass ----------------------------------------------------------

def draw_masks(rng, n_rows, config):
    """Inverted-dropout masks for ``n_rows`` forward passes.

    One ``rng.random((n_rows, sum(hidden_dims)))`` draw is split by layer,
    so row ``i`` consumes exactly the numbers a single-row call would. Kept
    units carry the ``1 / (1 - rate)`` scale, dropped ones are 0.
    """
    total = sum(config.hidden_dims)
    u = rng.random((n_rows, total))
    masks = []
    start = 0
    for h, rate in zip(config.hidden_dims, config.dropout_rates):
        block = u[:, start:start + h]
        masks.append(np.where(block >= rate, 1.0 / (1.0 - rate), 0.0))
        start += h
    return masks


def _check_features(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise InputShapeError(f"model expects {model.input_dim} features, got array of shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputShapeError("features contain non-finite values")
    return X


def _forward(weights, biases, X, masks):
    """Return output logits and per-layer activations for backprop."""
    acts = [X]
    a = X
    for i in range(len(weights) - 1):
        a = np.maximum(a @ weights[i] + biases[i], 0.0)
        if masks is not None:
            a = a * masks[i]
        acts.append(a)
    logits = (a @ weights[-1] + biases[-1])[:, 0]
    return logits, acts


def forward_batch(model, X, dropout_active=False, rng=None, masks=None):
    """Class-1 probabilities for every row of ``X``.

    With ``dropout_active`` the masks are drawn from ``rng`` (one
    independent mask set per row) unless given explicitly.
    """
    X = _check_features(model, X)
    if dropout_active and masks is None:
        if rng is None:
            raise ValueError("dropout_active requires an rng")
        masks = draw_masks(rng, X.shape[0], model.config)
    elif not dropout_active:
        masks = None
    logits, _ = _forward(model.weights, model.biases, X, masks)
    return expit(logits)


def forward(model, x, dropout_active=False, rng=None):
    """Probability of class 1 for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputShapeError(f"expected a feature vector, got shape {x.shape}")
    return float(forward_batch(model, x[None, :], dropout_active, rng)[0])


# -- loss and gradients ----------------------------------------------------

def bce_loss(p, y):
    """Binary cross-entropy in nats, with ``p`` clamped to ``[1e-7, 1 - 1e-7]``."""
    p = np.clip(np.asarray(p, dtype=np.float64), LOSS_CLIP, 1.0 - LOSS_CLIP)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(loss) if loss.ndim == 0 else loss


def batch_loss(model, X, y, masks=None):
    logits, _ = _forward(model.weights, model.biases, np.asarray(X, dtype=np.float64), masks)
    return float(np.mean(bce_loss(expit(logits), y)))


def gradients(model, X, y, masks=None):
    """Exact gradient of mean batch BCE for fixed dropout masks.

    Returns ``(weight_grads, bias_grads)`` shaped like the parameters.
    """
    X = _check_features(model, X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise InputShapeError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
    n_hidden = len(model.weights) - 1
    if masks is not None:
        if len(masks) != n_hidden or any(
            m.shape != (X.shape[0], h) for m, h in zip(masks, model.config.hidden_dims)
        ):
            raise InputShapeError("dropout masks do not match batch and hidden layer shapes")

    else:
        masks = [np.ones((X.shape[0], h)) for h in model.config.hidden_dims]
    logits, acts = _forward(model.weights, model.biases, X, masks)
    return _backward(model.weights, logits, acts, y, masks)


# -- optimiser -------------------------------------------------------------

def init_adam_state(params):
    return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state, config):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_epsilon, config.learning_rate
    t = state.t + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_params.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


# -- training --------------------------------------------------------------

def _streams(config):
    seq = np.random.SeedSequence(config.seed)
    init_ss, shuffle_ss, dropout_ss = seq.spawn(3)
    split_seed = config.seed if config.split_seed is None else config.split_seed
    return (
        np.random.default_rng(init_ss),
        np.random.default_rng(shuffle_ss),
        np.random.default_rng(dropout_ss),
        np.random.default_rng(derive_seed(split_seed, 0x5B117)),
    )


def train(config, data):
    """Fit a network on ``data`` (anything with ``features`` and ``labels``).

    Returns the model restored to its best validation epoch (when early
    stopping is on) and a :class:`TrainReport`.
    """
    X = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.float64)
    n = X.shape[0] if X.ndim == 2 else 0
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    if X.shape[1] != config.input_dim:
        raise InputShapeError(f"config.input_dim={config.input_dim} but data has {X.shape[1]} features")
    if y.shape != (n,) or not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be a vector of 0/1 values matching the feature rows")

    n_val = int(math.floor(config.validation_fraction * n))
    patience = config.early_stop_patience
    if patience > 0 and n_val == 0:
        raise ConfigError(
            f"early stopping (patience={patience}) needs a validation split, but "
            f"validation_fraction={config.validation_fraction} of {n} rows is empty"
        )
    if n_val >= n:
        raise ConfigError("validation split leaves no training rows")

    init_rng, shuffle_rng, dropout_rng, split_rng = _streams(config)
    model = init_mlp(config, init_rng)

    order = split_rng.permutation(n)
    val_idx, tr_idx = order[:n_val], order[n_val:]
    X_tr, y_tr = X[tr_idx], y[tr_idx]
    X_val, y_val = X[val_idx], y[val_idx]
    n_tr = X_tr.shape[0]

    params = model.params
    n_w = len(model.weights)
    state = init_adam_state(params)
    train_losses, val_losses = [], []
    best_loss, best_epoch, best_params = math.inf, 0, params
    wait = 0
    epoch = 0
    for epoch in range(1, config.epochs + 1):
        perm = shuffle_rng.permutation(n_tr)
        total = 0.0
        for start in range(0, n_tr, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb, yb = X_tr[idx], y_tr[idx]
            masks = draw_masks(dropout_rng, len(idx), config)
            weights, biases = params[:n_w], params[n_w:]
            logits, acts = _forward(weights, biases, xb, masks)
            total += float(np.sum(bce_loss(expit(logits), yb)))
            gw, gb = _backward(weights, logits, acts, yb, masks)
            params, state = adam_step(params, gw + gb, state, config)
        train_losses.append(total / n_tr)

        if n_val:
            logits, _ = _forward(params[:n_w], params[n_w:], X_val, None)
            val_loss = float(np.mean(bce_loss(expit(logits), y_val)))
            val_losses.append(val_loss)
            if val_loss < best_loss:
                best_loss, best_epoch, best_params, wait = val_loss, epoch, params, 0
            else:
                wait += 1
            if patience and wait >= patience:
                logger.debug("early stop at epoch %d (best %d)", epoch, best_epoch)
                break

    if patience:
        final = best_params
    else:
        final, best_epoch = params, (best_epoch if n_val else epoch)
    trained = model.with_params(final)
    return trained, TrainReport(train_losses, val_losses, epoch, best_epoch)


def _backward(weights, logits, acts, y, masks):
    # same recurrence as gradients(), on raw parameter lists in the hot loop
    delta = ((expit(logits) - y) / y.shape[0])[:, None]
    n = len(weights)
    gw, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * masks[i - 1] * (acts[i] > 0)
    return gw, gb


# -- serialization ---------------------------------------------------------

def _fmt_array(a):
    if a.ndim == 1:
        return "[" + ",".join(format(float(v), ".17g") for v in a) + "]"
    return "[" + ",".join(_fmt_array(row) for row in a) + "]"


def dumps_model(model):
    """JSON document ``{config, weights, biases}`` with 17 significant digits."""
    config = json.dumps(model.config.to_dict(), sort_keys=True)
    weights = "[" + ",".join(_fmt_array(w) for w in model.weights) + "]"
    biases = "[" + ",".join(_fmt_array(b) for b in model.biases) + "]"
    return f'{{"config":{config},"weights":{weights},"biases":{biases}}}\n'


def loads_model(text):
    try:
        doc = json.loads(text)
        config = MlpConfig.from_dict(doc["config"])
        weights = tuple(np.array(w, dtype=np.float64).reshape(len(w), -1) for w in doc["weights"])
        biases = tuple(np.array(b, dtype=np.float64) for b in doc["biases"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed model document: {exc}") from None
    return Mlp(weights, biases, config)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def train_ensemble(config, data, n_members, first=None):
    """Train ``n_members`` networks; member ``m`` uses seed ``config.seed + m``.

    All members share the validation split seeded by ``config.split_seed``
    (or ``config.seed``). ``first`` may pass an already trained member 0,
    which is identical to training it again.
    """
    if n_members < 1:
        raise ConfigError("an ensemble needs at least one member")
    split_seed = config.seed if config.split_seed is None else config.split_seed
    out = [] if first is None else [first]
    for m in range(len(out), n_members):
        out.append(train(config.replace(seed=offset_seed(config.seed, m), split_seed=split_seed), data))
    return out
