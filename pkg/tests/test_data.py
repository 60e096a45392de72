import math
import warnings

import numpy as np
import pytest

from uqreject.data import (
    Dataset,
    ShiftSpec,
    StandardizerParams,
    TwoRegionSpec,
    gen_shifted,
    gen_two_region,
    load_csv,
    save_csv,
    split,
    standardize_apply,
    standardize_fit,
)
from uqreject.errors import DataError


class TestDataset:
    def test_defaults_and_immutability(self):
        ds = Dataset(np.zeros((3, 2)), [0, 1, 1])
        assert ds.feature_names == ("x0", "x1")
        assert len(ds) == 3 and ds.n_features == 2
        with pytest.raises(ValueError):
            ds.features[0, 0] = 1

    @pytest.mark.parametrize("X,y", [
        (np.zeros((3, 2)), [0, 1]),
        (np.zeros((2, 2)), [0, 2]),
        (np.array([[np.inf, 0.0]]), [0]),
        (np.zeros(3), [0, 0, 0]),
    ])
    def test_invalid(self, X, y):
        with pytest.raises(DataError):
            Dataset(X, y)


class TestCsv:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(20, 3)) * 1e3, rng.integers(0, 2, 20), ("a", "b", "c"))
        save_csv(ds, tmp_path / "d.csv")
        assert load_csv(tmp_path / "d.csv").equals(ds)

    def test_label_column_anywhere(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("label,f\n1,0.5\n0,-2\n")
        ds = load_csv(p)
        assert ds.feature_names == ("f",)
        np.testing.assert_array_equal(ds.labels, [1, 0])
        np.testing.assert_array_equal(ds.features[:, 0], [0.5, -2])

    @pytest.mark.parametrize("text,needle", [
        ("", "empty"),
        ("a,b\n1,2\n", "label"),
        ("a,label\nx,1\n", "line 2"),
        ("a,label\n1,1\nnan,0\n", "line 3"),
        ("a,label\n1,3\n", "label"),
        ("a,label\n1,1,4\n", "line 2"),
        ("a,label\n", "no data"),
    ])
    def test_errors_name_the_problem(self, tmp_path, text, needle):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(DataError, match=needle):
            load_csv(p)


class TestStandardize:
    def test_zero_mean_unit_std(self):
        rng = np.random.default_rng(1)
        ds = Dataset(rng.normal(5, 3, size=(500, 2)), np.zeros(500))
        z = standardize_apply(standardize_fit(ds), ds).features
        np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1, atol=1e-12)

    def test_known_values(self):
        ds = Dataset(np.array([[1.0], [3.0]]), [0, 1])
        params = standardize_fit(ds)
        assert params.mean == (2.0,) and params.std == (1.0,)

    def test_constant_column_dropped_with_warning(self):
        ds = Dataset(np.array([[1.0, 7.0], [2.0, 7.0], [4.0, 7.0]]), [0, 1, 0])
        with pytest.warns(UserWarning, match="x1"):
            params = standardize_fit(ds)
        assert params.kept == ("x0",) and params.dropped == ("x1",)
        assert standardize_apply(params, ds).n_features == 1

    def test_column_mismatch(self):
        ds = Dataset(np.eye(2), [0, 1])
        params = standardize_fit(ds)
        with pytest.raises(DataError):
            standardize_apply(params, Dataset(np.eye(2), [0, 1], ("p", "q")))

    def test_params_dict_roundtrip(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            params = standardize_fit(Dataset(np.array([[1.0, 0.0], [2.0, 0.0]]), [0, 1]))
        assert StandardizerParams.from_dict(params.to_dict()) == params


class TestSplit:
    def test_sizes_and_disjoint(self):
        ds = Dataset(np.arange(100.0)[:, None], np.zeros(100))
        a, b = split(ds, 0.3, seed=4)
        assert len(a) == 30 and len(b) == 70
        assert set(a.features[:, 0]).isdisjoint(b.features[:, 0])

    def test_float_fraction_rounding(self):
        ds = Dataset(np.arange(100.0)[:, None], np.zeros(100))
        assert len(split(ds, 0.29, seed=0)[0]) == 29

    def test_deterministic_and_seed_dependent(self):
        ds = Dataset(np.arange(50.0)[:, None], np.zeros(50))
        assert split(ds, 0.5, 1)[0].equals(split(ds, 0.5, 1)[0])
        assert not split(ds, 0.5, 1)[0].equals(split(ds, 0.5, 2)[0])

    def test_empty_side(self):
        with pytest.raises(DataError):
            split(Dataset(np.zeros((3, 1)), [0, 0, 0]), 0.1, 0)


class TestGenerators:
    def test_training_prior(self):
        ds = gen_two_region(5000, seed=3)
        assert abs(ds.labels.mean() - 0.56) < 0.03

    def test_training_clusters(self):
        spec = TwoRegionSpec()
        ds = gen_two_region(5000, seed=3)
        for k, c in enumerate(spec.centers()):
            pts = ds.features[ds.labels == k]
            assert np.all(np.linalg.norm(pts - c, axis=1) <= spec.truncate * spec.cluster_std + 1e-12)
            np.testing.assert_allclose(pts.mean(axis=0), c, atol=0.1)

    def test_shift_priors(self):
        spec = TwoRegionSpec()
        small = gen_shifted(spec, ShiftSpec.preset("small", spec), 5000, 1)
        large = gen_shifted(spec, ShiftSpec.preset("large", spec), 5000, 1)
        assert abs(small.labels.mean() - 0.46) < 0.03
        assert abs(large.labels.mean() - 0.28) < 0.03

    def test_shift_moves_mass_away(self):
        spec = TwoRegionSpec()
        base = gen_two_region(3000, 0).features.mean(axis=0)
        large = gen_shifted(spec, ShiftSpec.preset("large", spec), 3000, 0).features.mean(axis=0)
        assert np.linalg.norm(large - base) > 3.0

    def test_rotation_and_translation(self):
        spec = TwoRegionSpec(separation=1.0)
        shift = ShiftSpec("large", (2.0, 0.0), 90.0, 0.0, 0.56)
        a = gen_two_region(10, 5, spec).features
        b = gen_shifted(spec, shift, 10, 5).features
        expected = np.column_stack([-a[:, 1], a[:, 0]]) + [2.0, 0.0]
        np.testing.assert_allclose(b, expected, atol=1e-12)

    def test_label_flips(self):
        spec = TwoRegionSpec()
        clean = gen_two_region(4000, 2)
        flipped = gen_shifted(spec, ShiftSpec("none", (0, 0), 0, 0.5, 0.56), 4000, 2)
        assert abs(np.mean(clean.labels != flipped.labels) - 0.5) < 0.03

    def test_deterministic(self):
        assert gen_two_region(50, 9).equals(gen_two_region(50, 9))

    @pytest.mark.parametrize("kw", [
        dict(level="none", mean_shift=(0, 0, 1), rotation_degrees=0, label_flip_rate=0, class_prior=0.5),
        dict(level="none", mean_shift=(0, 0), rotation_degrees=0, label_flip_rate=0.6, class_prior=0.5),
        dict(level="none", mean_shift=(0, 0), rotation_degrees=0, label_flip_rate=0, class_prior=1.0),
    ])
    def test_invalid_shift(self, kw):
        with pytest.raises(DataError):
            ShiftSpec(**kw)

    def test_unknown_preset(self):
        with pytest.raises(DataError):
            ShiftSpec.preset("huge")

    def test_too_small(self):
        with pytest.raises(DataError):
            gen_two_region(3, 0)

    def test_preset_geometry(self):
        s = ShiftSpec.preset("large")
        assert s.rotation_degrees == 45.0
        assert math.isclose(np.linalg.norm(s.mean_shift), 4.0)
