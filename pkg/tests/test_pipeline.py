"""Column cleaning and the normal-score transform."""

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from diagchart.errors import ConfigError, DimensionError
from diagchart.pipeline import (
    apply_transform,
    clean_frame,
    fit_transform,
    load_and_clean,
    transform_from_json,
    transform_to_json,
)


def make_fixture(rng, n=30):
    """10 columns: 7 informative, 3 constant."""
    df = pd.DataFrame({f"x{i}": rng.standard_normal(n) for i in range(7)})
    for i in range(3):
        df[f"const{i}"] = float(i)
    return df


class TestCleaning:
    def test_constant_columns_dropped_and_named(self):
        rng = np.random.default_rng(1)
        cleaned, report = clean_frame(make_fixture(rng))
        assert report.cols_in == 10
        assert report.cols_out == 7
        assert sorted(report.dropped_near_constant) == ["const0", "const1", "const2"]
        assert report.dropped_missing == []

    def test_mostly_missing_column_dropped(self):
        rng = np.random.default_rng(2)
        df = pd.DataFrame({"a": rng.standard_normal(20), "b": rng.standard_normal(20)})
        df.loc[:9, "b"] = np.nan  # 50% missing
        cleaned, report = clean_frame(df)
        assert report.dropped_missing == ["b"]
        assert list(cleaned.columns) == ["a"]

    def test_clean_input_passthrough(self):
        rng = np.random.default_rng(3)
        df = pd.DataFrame(rng.standard_normal((25, 4)), columns=list("abcd"))
        cleaned, report = clean_frame(df)
        assert report.dropped_missing == []
        assert report.dropped_near_constant == []
        assert np.allclose(cleaned.to_numpy(), df.to_numpy())

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        df = make_fixture(rng)
        df.loc[:20, "x0"] = np.nan  # 70% missing column
        once, _ = clean_frame(df)
        twice, report2 = clean_frame(once)
        assert list(once.columns) == list(twice.columns)
        assert np.allclose(once.to_numpy(), twice.to_numpy())
        assert report2.dropped_missing == [] and report2.dropped_near_constant == []

    def test_median_imputation(self):
        df = pd.DataFrame({"a": [1.0, 2.0, np.nan, 4.0, 100.0],
                           "b": [0.0, 1.0, 2.0, 3.0, 4.0]})
        cleaned, _ = clean_frame(df, missing_threshold=0.5)
        assert cleaned.loc[2, "a"] == pytest.approx(3.0)  # median of {1,2,4,100}

    def test_rows_never_dropped(self):
        rng = np.random.default_rng(5)
        df = make_fixture(rng, n=40)
        df.iloc[0, 0] = np.nan
        cleaned, report = clean_frame(df)
        assert report.rows_in == report.rows_out == 40

    def test_all_columns_dropped_errors(self):
        df = pd.DataFrame({"a": [1.0] * 10, "b": [2.0] * 10})
        with pytest.raises(ConfigError):
            clean_frame(df)

    def test_load_csv(self, tmp_path):
        rng = np.random.default_rng(6)
        df = make_fixture(rng)
        path = tmp_path / "input.csv"
        df.to_csv(path, index=False)
        cleaned, report = load_and_clean(path)
        assert report.cols_out == 7


class TestTransform:
    def test_median_maps_to_zero(self):
        model = fit_transform(np.array([[1.0], [2.0], [3.0]]))
        assert apply_transform(model, np.array([[2.0]]))[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_clamping_keeps_values_finite(self):
        model = fit_transform(np.arange(10.0).reshape(-1, 1))
        hi = apply_transform(model, np.array([[1e9]]))[0, 0]
        lo = apply_transform(model, np.array([[-1e9]]))[0, 0]
        expected = stats.norm.ppf(10 / 11)
        assert hi == pytest.approx(expected, abs=1e-9)
        assert lo == pytest.approx(-expected, abs=1e-9)

    def test_ties_share_average_rank(self):
        model = fit_transform(np.array([[1.0], [2.0], [2.0], [3.0]]))
        # value 2 ties ranks 2 and 3 -> rank 2.5 -> Phi^{-1}(0.5) = 0
        assert apply_transform(model, np.array([[2.0]]))[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_monotone_per_column(self):
        rng = np.random.default_rng(7)
        model = fit_transform(rng.standard_normal((50, 1)))
        xs = np.sort(rng.uniform(-4, 4, 200))
        ys = apply_transform(model, xs.reshape(-1, 1)).ravel()
        assert np.all(np.diff(ys) >= 0)

    def test_normal_scores_moments(self):
        rng = np.random.default_rng(8)
        ref = rng.uniform(0, 1, size=(200, 1))
        model = fit_transform(ref)
        scores = apply_transform(model, ref).ravel()
        assert abs(stats.skew(scores)) < 0.2
        assert abs(stats.kurtosis(scores)) < 0.4

    def test_reference_marginals_near_normal(self):
        rng = np.random.default_rng(9)
        ref = rng.exponential(size=(300, 3))  # heavily skewed input
        model = fit_transform(ref)
        scores = apply_transform(model, ref)
        for j in range(3):
            assert abs(scores[:, j].mean()) < 0.05
            assert abs(scores[:, j].std(ddof=1) - 1) < 0.1

    def test_dimension_mismatch(self):
        model = fit_transform(np.zeros((10, 2)) + np.arange(10)[:, None])
        with pytest.raises(DimensionError):
            apply_transform(model, np.zeros((5, 3)))

    def test_json_roundtrip(self):
        rng = np.random.default_rng(10)
        model = fit_transform(rng.standard_normal((30, 2)), columns=["a", "b"])
        restored = transform_from_json(transform_to_json(model))
        x = rng.standard_normal((5, 2))
        assert np.array_equal(apply_transform(model, x), apply_transform(restored, x))
        assert restored.columns == ["a", "b"]
