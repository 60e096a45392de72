import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from uqreject.estimators import (
    DeepEnsembleClassifier,
    DropoutMLPClassifier,
    MCDropoutClassifier,
    Standardizer,
)

FAST = dict(hidden_dims=(16,), dropout_rates=(0.2,), epochs=20)


@pytest.fixture(scope="module")
def blobs():
    rng = np.random.default_rng(0)
    y = np.where(rng.random(300) < 0.5, "cat", "dog")
    X = rng.normal(size=(300, 2)) * 0.6 + np.where(y[:, None] == "dog", 1.5, -1.5)
    return X, y


class TestDropoutMLP:
    def test_get_params_and_clone(self):
        est = DropoutMLPClassifier(learning_rate=1e-3, random_state=5)
        params = est.get_params()
        assert params["learning_rate"] == 1e-3 and params["random_state"] == 5
        twin = clone(est)
        assert twin.get_params() == params and twin is not est

    def test_fit_predict_string_labels(self, blobs):
        X, y = blobs
        est = DropoutMLPClassifier(**FAST).fit(X, y)
        assert list(est.classes_) == ["cat", "dog"]
        assert est.n_features_in_ == 2
        assert est.score(X, y) > 0.9
        proba = est.predict_proba(X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)

    def test_seeded_fits_are_identical(self, blobs):
        X, y = blobs
        a = DropoutMLPClassifier(**FAST, random_state=3).fit(X, y).predict_proba(X)
        b = DropoutMLPClassifier(**FAST, random_state=3).fit(X, y).predict_proba(X)
        np.testing.assert_array_equal(a, b)

    def test_uncertainty(self, blobs):
        X, y = blobs
        est = DropoutMLPClassifier(**FAST).fit(X, y)
        mc = est.predict_uncertainty(X[:20], "mc_dropout", n_samples=16)
        assert len(mc) == 20 and np.all(mc.model >= 0)
        std = est.predict_uncertainty(X[:20], "standard")
        assert np.all(std.model == 0)
        assert est.sample_proba(X[:5], n_samples=4).shape == (5, 4, 2)
        with pytest.raises(ValueError):
            est.predict_uncertainty(X, "deep_ensemble")

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            DropoutMLPClassifier().predict(np.zeros((1, 2)))

    def test_multiclass_rejected(self):
        with pytest.raises(ValueError, match="2 classes"):
            DropoutMLPClassifier(**FAST).fit(np.zeros((3, 2)), [0, 1, 2])

    def test_feature_count_checked(self, blobs):
        X, y = blobs
        est = DropoutMLPClassifier(**FAST).fit(X, y)
        with pytest.raises(ValueError):
            est.predict(np.zeros((2, 3)))


class TestMCDropout:
    def test_proba_is_mc_mean(self, blobs):
        X, y = blobs
        est = MCDropoutClassifier(**FAST, n_samples=8).fit(X, y)
        samples = est.sample_proba(X[:10], "mc_dropout", 8, est.mc_random_state)
        np.testing.assert_array_equal(est.predict_proba(X[:10]), samples.mean(axis=1))
        assert "n_samples" in clone(est).get_params()


class TestDeepEnsemble:
    def test_members_and_uncertainty(self, blobs):
        X, y = blobs
        est = DeepEnsembleClassifier(n_members=3, **FAST, random_state=10).fit(X, y)
        assert len(est.members_) == 3
        assert [m.config.seed for m in est.members_] == [10, 11, 12]
        assert est.score(X, y) > 0.9
        res = est.predict_uncertainty(X)
        np.testing.assert_array_equal(res.data + res.model, res.total)
        np.testing.assert_allclose(est.predict_proba(X)[:, 1], res.p_class1)


class TestStandardizer:
    def test_in_pipeline(self, blobs):
        X, y = blobs
        pipe = make_pipeline(Standardizer(), DropoutMLPClassifier(**FAST)).fit(X * 100 + 7, y)
        assert pipe.score(X * 100 + 7, y) > 0.9

    def test_transform(self):
        X = np.array([[1.0, 5.0], [3.0, 5.0]])
        with pytest.warns(UserWarning):
            Z = Standardizer().fit_transform(X)
        np.testing.assert_array_equal(Z, [[-1.0], [1.0]])
