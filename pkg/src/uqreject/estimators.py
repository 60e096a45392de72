"""scikit-learn compatible wrappers around the numpy core.

These follow the usual estimator contract (constructor stores
hyperparameters verbatim, ``fit`` returns ``self``, learned state ends in an
underscore) so they drop into pipelines, ``clone`` and grid searches.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import Dataset, standardize_apply, standardize_fit
from .nn_core import MlpConfig, forward_batch, train, train_ensemble
from .uncertainty import batch_uncertainty, sample_matrix


def _resolve_seed(random_state):
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    if isinstance(random_state, (int, np.integer)):
        return int(random_state)
    raise ValueError("random_state must be an int or None")


class _MlpParamsMixin:
    def _mlp_config(self, n_features, seed):
        return MlpConfig(
            input_dim=n_features,
            hidden_dims=tuple(self.hidden_dims),
            dropout_rates=tuple(self.dropout_rates),
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_epsilon=self.adam_epsilon,
            early_stop_patience=self.early_stop_patience,
            validation_fraction=self.validation_fraction,
            seed=seed,
        )

    def _validate_fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"binary classifier needs exactly 2 classes, got {len(self.classes_)}")
        return X, (y == self.classes_[1]).astype(np.int64)


class DropoutMLPClassifier(_MlpParamsMixin, ClassifierMixin, BaseEstimator):
    """Two-class MLP with dropout; ``predict_proba`` runs without dropout.

    The same fitted weights serve MC Dropout through
    ``predict_uncertainty(X, method="mc_dropout")``.

    Parameters mirror :class:`uqreject.nn_core.MlpConfig`;
    ``random_state`` becomes its ``seed``.
    """

    def __init__(self, hidden_dims=(64, 64), dropout_rates=(0.4, 0.5), learning_rate=5e-4,
                 epochs=50, batch_size=32, adam_beta1=0.9, adam_beta2=0.999, adam_epsilon=1e-8,
                 early_stop_patience=5, validation_fraction=0.1, random_state=0):
        self.hidden_dims = hidden_dims
        self.dropout_rates = dropout_rates
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_epsilon = adam_epsilon
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        X, y01 = self._validate_fit(X, y)
        config = self._mlp_config(X.shape[1], _resolve_seed(self.random_state))
        self.model_, self.train_report_ = train(config, Dataset(X, y01))
        return self

    def _class1_proba(self, X):
        check_is_fitted(self, "model_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return forward_batch(self.model_, X)

    def predict_proba(self, X):
        p1 = self._class1_proba(X)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        p1 = self.predict_proba(X)[:, 1]
        return self.classes_[(p1 > 0.5).astype(int)]

    def sample_proba(self, X, method="mc_dropout", n_samples=128, random_state=0):
        """Per-input probability samples, shape ``(n, S, 2)``."""
        check_is_fitted(self, "model_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return sample_matrix(method, self.model_, X, _resolve_seed(random_state), n_samples)

    def predict_uncertainty(self, X, method="mc_dropout", n_samples=128, random_state=0):
        if method not in ("standard", "mc_dropout"):
            raise ValueError("DropoutMLPClassifier supports method='standard' or 'mc_dropout'")
        check_is_fitted(self, "model_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return batch_uncertainty(method, self.model_, X, _resolve_seed(random_state), n_samples)


class MCDropoutClassifier(DropoutMLPClassifier):
    """Same network, but ``predict_proba`` averages ``n_samples`` dropout passes."""

    def __init__(self, hidden_dims=(64, 64), dropout_rates=(0.4, 0.5), learning_rate=5e-4,
                 epochs=50, batch_size=32, adam_beta1=0.9, adam_beta2=0.999, adam_epsilon=1e-8,
                 early_stop_patience=5, validation_fraction=0.1, random_state=0,
                 n_samples=128, mc_random_state=0):
        super().__init__(hidden_dims, dropout_rates, learning_rate, epochs, batch_size, adam_beta1,
                         adam_beta2, adam_epsilon, early_stop_patience, validation_fraction, random_state)
        self.n_samples = n_samples
        self.mc_random_state = mc_random_state

    def predict_proba(self, X):
        return self.sample_proba(X, "mc_dropout", self.n_samples, self.mc_random_state).mean(axis=1)

    def predict_uncertainty(self, X, method="mc_dropout", n_samples=None, random_state=None):
        n_samples = self.n_samples if n_samples is None else n_samples
        random_state = self.mc_random_state if random_state is None else random_state
        return super().predict_uncertainty(X, method, n_samples, random_state)


class DeepEnsembleClassifier(_MlpParamsMixin, ClassifierMixin, BaseEstimator):
    """``n_members`` independently initialised networks averaged at prediction time.

    Member ``m`` trains with seed ``random_state + m``; all members share the
    validation split.
    """

    def __init__(self, n_members=10, hidden_dims=(64, 64), dropout_rates=(0.4, 0.5),
                 learning_rate=5e-4, epochs=50, batch_size=32, adam_beta1=0.9, adam_beta2=0.999,
                 adam_epsilon=1e-8, early_stop_patience=5, validation_fraction=0.1, random_state=0):
        self.n_members = n_members
        self.hidden_dims = hidden_dims
        self.dropout_rates = dropout_rates
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_epsilon = adam_epsilon
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        X, y01 = self._validate_fit(X, y)
        config = self._mlp_config(X.shape[1], _resolve_seed(self.random_state))
        fitted = train_ensemble(config, Dataset(X, y01), self.n_members)
        self.members_ = [m for m, _ in fitted]
        self.train_reports_ = [r for _, r in fitted]
        return self

    def sample_proba(self, X):
        check_is_fitted(self, "members_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return sample_matrix("deep_ensemble", self.members_, X)

    def predict_proba(self, X):
        return self.sample_proba(X).mean(axis=1)

    def predict(self, X):
        p1 = self.predict_proba(X)[:, 1]
        return self.classes_[(p1 > 0.5).astype(int)]

    def predict_uncertainty(self, X):
        check_is_fitted(self, "members_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return batch_uncertainty("deep_ensemble", self.members_, X)


class Standardizer(TransformerMixin, BaseEstimator):
    """Z-score scaling fitted on training data; zero-variance columns are dropped."""

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        ds = Dataset(X, np.zeros(X.shape[0], dtype=np.int64))
        self.params_ = standardize_fit(ds)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        ds = Dataset(X, np.zeros(X.shape[0], dtype=np.int64), self.params_.feature_names)
        return standardize_apply(self.params_, ds).features.copy()
