import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crnn_forecast.data import (CorrelatedSet, CsvLayout, DataError, Normalizer,
                                SyntheticConfig, TimeSeries, generate_synthetic,
                                ingest_csv, make_uncorrelated, pearson, segment,
                                split, stack_samples, train_val_split, write_csv)


def make_set(n_series=2, length=100, seed=0):
    rng = np.random.default_rng(seed)
    return CorrelatedSet(tuple(
        TimeSeries(f"s{i}", rng.uniform(1.0, 9.0, length)) for i in range(n_series)))


class TestTimeSeries:
    def test_rejects_missing_values(self):
        with pytest.raises(DataError):
            TimeSeries("x", [1.0, float("nan"), 3.0])

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            TimeSeries("x", [])

    def test_rejects_bad_interval(self):
        with pytest.raises(DataError):
            TimeSeries("x", [1.0], interval=0.0)


class TestCorrelatedSet:
    def test_alignment_enforced(self):
        a = TimeSeries("a", [1.0, 2.0])
        b = TimeSeries("b", [1.0, 2.0, 3.0])
        with pytest.raises(DataError):
            CorrelatedSet((a, b))

    def test_target_is_first(self):
        cset = make_set(3)
        assert cset.target.id == "s0"
        assert cset.num_series == 3

    def test_take(self):
        cset = make_set(3)
        assert cset.take(1).num_series == 1
        assert cset.take(1).target.id == "s0"
        with pytest.raises(DataError):
            cset.take(4)


class TestSplit:
    def test_default_fraction(self):
        train, test = split(make_set(length=100))
        assert train.length == 84 and test.length == 16

    def test_floor_arithmetic(self):
        train, test = split(make_set(length=50))
        assert train.length == 42 and test.length == 8

    def test_degenerate_fraction_rejected(self):
        with pytest.raises(ValueError):
            split(make_set(), train_frac=1.0)
        with pytest.raises(ValueError):
            split(make_set(), train_frac=0.0)

    def test_chronological_no_shuffle(self):
        cset = make_set(length=50)
        train, test = split(cset)
        full = cset.series[0].values
        assert np.array_equal(train.series[0].values, full[:42])
        assert np.array_equal(test.series[0].values, full[42:])

    def test_time_base_advances(self):
        cset = make_set(length=50)
        _, test = split(cset)
        assert test.series[0].start_time == 42.0


class TestSegment:
    def test_window_count(self):
        cset = make_set(length=10)
        samples = segment(cset, input_length=3, horizon=2)
        assert len(samples) == 6

    def test_boundary_single_window(self):
        cset = make_set(length=5)
        samples = segment(cset, input_length=3, horizon=2)
        assert len(samples) == 1
        assert samples[0].offset == 0

    def test_too_short_yields_empty_with_warning(self, caplog):
        cset = make_set(length=4)
        with caplog.at_level(logging.WARNING):
            samples = segment(cset, input_length=3, horizon=2)
        assert samples == []
        assert any("shorter" in r.message for r in caplog.records)

    def test_inputs_pair_with_following_targets(self):
        cset = make_set(length=12)
        m = cset.values_matrix()
        for s in segment(cset, input_length=4, horizon=3):
            a = s.offset
            assert np.array_equal(s.input.array, m[:, a:a + 4])
            assert np.array_equal(s.target, m[0, a + 4:a + 7])

    def test_stride(self):
        cset = make_set(length=20)
        samples = segment(cset, input_length=4, horizon=2, stride=6)
        assert [s.offset for s in samples] == [0, 6, 12]

    def test_coverage_at_stride_one(self):
        cset = make_set(length=15)
        samples = segment(cset, input_length=4, horizon=2)
        covered = set()
        for s in samples:
            covered.update(range(s.offset, s.offset + 6))
        assert covered == set(range(15))

    @given(st.integers(7, 60), st.integers(1, 6), st.integers(1, 4))
    @settings(max_examples=40, deadline=None)
    def test_count_formula(self, length, l, p):
        cset = make_set(length=length, seed=1)
        samples = segment(cset, input_length=l, horizon=p)
        expected = max(0, length - l - p + 1)
        assert len(samples) == expected


class TestTrainValSplit:
    def test_chronological_carveout(self):
        cset = make_set(length=30)
        samples = segment(cset, 4, 2)
        tr, val = train_val_split(samples, 0.2)
        assert len(tr) + len(val) == len(samples)
        assert max(s.offset for s in tr) < min(s.offset for s in val)

    def test_tiny_sample_lists(self):
        cset = make_set(length=6)
        samples = segment(cset, 4, 2)
        tr, val = train_val_split(samples, 0.15)
        assert len(tr) == 1 and val == []


class TestNormalizer:
    def test_round_trip_identity(self):
        train, _ = split(make_set(length=100))
        norm = Normalizer.fit(train)
        values = train.series[0].values
        again = norm.inverse_target(norm.transform_target(values))
        assert np.max(np.abs(again - values)) < 1e-12

    def test_training_values_land_in_unit_interval(self):
        train, _ = split(make_set(length=100))
        norm = Normalizer.fit(train)
        m = norm.transform(train).values_matrix()
        assert m.min() >= 0.0 and m.max() <= 1.0

    def test_test_values_may_exceed_unit_interval(self):
        values = np.concatenate([np.linspace(1, 2, 84), np.linspace(3, 4, 16)])
        cset = CorrelatedSet((TimeSeries("t", values),))
        train, test = split(cset)
        norm = Normalizer.fit(train)
        assert norm.transform(test).values_matrix().max() > 1.0

    def test_constant_series_stays_invertible(self):
        cset = CorrelatedSet((TimeSeries("c", np.full(50, 7.0)),))
        norm = Normalizer.fit(cset)
        v = norm.transform_target(np.array([7.0, 8.0]))
        assert np.allclose(norm.inverse_target(v), [7.0, 8.0])

    def test_statistics_come_from_train_only(self):
        values = np.concatenate([np.linspace(0, 1, 84), np.full(16, 100.0)])
        cset = CorrelatedSet((TimeSeries("t", values),))
        train, _ = split(cset)
        norm = Normalizer.fit(train)
        assert norm.maxs[0] <= 1.0

    def test_tensor_round_trip(self):
        train, _ = split(make_set(length=60))
        norm = Normalizer.fit(train)
        again = Normalizer.from_tensors(norm.tensors())
        assert np.array_equal(again.mins, norm.mins)
        assert np.array_equal(again.maxs, norm.maxs)


class TestLeakage:
    @pytest.mark.parametrize("seed", range(10))
    def test_test_windows_follow_train_windows(self, seed):
        rng = np.random.default_rng(seed)
        length = int(rng.integers(60, 200))
        l = int(rng.integers(2, 8))
        p = int(rng.integers(1, 5))
        cset = make_set(length=length, seed=seed)
        train, test = split(cset)
        train_windows = segment(train, l, p)
        test_windows = segment(test, l, p)
        if not train_windows or not test_windows:
            return
        max_train = max(w.offset for w in train_windows)
        min_test = train.length + min(w.offset for w in test_windows)
        assert max_train < min_test


class TestCsv:
    def test_three_columns(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,c\n1,2,3\n4,5,6\n7,8,9\n")
        cset = ingest_csv(path)
        assert cset.num_series == 3
        assert cset.target.id == "a"
        assert cset.target.values.tolist() == [1.0, 4.0, 7.0]

    def test_headerless_numeric_file(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("1,2\n3,4\n")
        cset = ingest_csv(path)
        assert cset.num_series == 2
        assert cset.series[1].id == "col1"

    def test_blank_cell_cites_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3,\n5,6\n")
        with pytest.raises(DataError, match="row 3"):
            ingest_csv(path)

    def test_non_numeric_cell_cites_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(DataError, match="row 3"):
            ingest_csv(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(DataError, match="row 3"):
            ingest_csv(path)

    def test_non_uniform_timestamps_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("t,a\n0,1\n1,2\n3,3\n")
        with pytest.raises(DataError, match="uniform"):
            ingest_csv(path, CsvLayout(timestamp="t"))

    def test_uniform_timestamps_set_time_base(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("t,a,b\n10,1,2\n12,3,4\n14,5,6\n")
        cset = ingest_csv(path, CsvLayout(timestamp="t"))
        assert cset.num_series == 2  # timestamp column excluded
        assert cset.target.start_time == 10.0
        assert cset.target.interval == 2.0

    def test_column_selection_by_name(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,c\n1,2,3\n4,5,6\n")
        cset = ingest_csv(path, CsvLayout(columns=["c", "a"]))
        assert cset.target.id == "c"
        assert cset.target.values.tolist() == [3.0, 6.0]

    def test_unknown_column_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="nope"):
            ingest_csv(path, CsvLayout(columns=["nope"]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(tmp_path / "absent.csv")

    def test_write_read_round_trip(self, tmp_path):
        cset = make_set(2, 40, seed=5)
        path = tmp_path / "out.csv"
        write_csv(cset, path)
        again = ingest_csv(path)
        assert np.array_equal(again.values_matrix(), cset.values_matrix())


class TestMakeUncorrelated:
    def test_matched_length_and_moments(self):
        ref = generate_synthetic(SyntheticConfig(length=500, seed=3)).target
        sur = make_uncorrelated(ref, seed=1)
        assert len(sur) == len(ref)
        assert abs(sur.values.mean() - ref.values.mean()) < 1e-9
        assert abs(sur.values.std() - ref.values.std()) < 1e-9

    def test_low_correlation(self):
        ref = generate_synthetic(SyntheticConfig(length=800, seed=4)).target
        for seed in range(5):
            sur = make_uncorrelated(ref, seed=seed)
            assert abs(pearson(sur.values, ref.values)) < 0.1

    def test_deterministic(self):
        ref = generate_synthetic(SyntheticConfig(length=300, seed=5)).target
        a = make_uncorrelated(ref, seed=9)
        b = make_uncorrelated(ref, seed=9)
        assert np.array_equal(a.values, b.values)


class TestSyntheticGenerator:
    def test_deterministic(self):
        a = generate_synthetic(SyntheticConfig(seed=2, length=400))
        b = generate_synthetic(SyntheticConfig(seed=2, length=400))
        assert np.array_equal(a.values_matrix(), b.values_matrix())

    def test_target_first_driver_second(self):
        cset = generate_synthetic(SyntheticConfig(length=100))
        assert [s.id for s in cset.series] == ["target", "driver"]

    def test_driver_leads_target(self):
        cfg = SyntheticConfig(length=1000, lag=5, noise=0.05, seed=6)
        cset = generate_synthetic(cfg)
        target = cset.series[0].values
        driver = cset.series[1].values
        # target at t+lag equals driver at t up to observation noise
        diff = target[cfg.lag:] - driver[:-cfg.lag]
        assert np.std(diff) < 3 * cfg.noise
        # and the lagged correlation beats the instantaneous one
        lagged = pearson(target[cfg.lag:], driver[:-cfg.lag])
        instant = pearson(target, driver)
        assert lagged > instant

    def test_independent_kind_is_uncorrelated(self):
        cset = generate_synthetic(SyntheticConfig(kind="independent",
                                                  length=2000, seed=7))
        assert abs(pearson(cset.series[0].values, cset.series[1].values)) < 0.3

    def test_values_stay_positive_for_mape(self):
        cset = generate_synthetic(SyntheticConfig(length=3000, seed=8))
        assert cset.values_matrix().min() > 0.5


class TestStack:
    def test_shapes(self):
        samples = segment(make_set(length=20), 4, 2)
        x, y = stack_samples(samples)
        assert x.shape == (len(samples), 2, 4)
        assert y.shape == (len(samples), 2)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            stack_samples([])
