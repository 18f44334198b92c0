import io
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgpt.timeseries import (
    Dataset,
    FillPolicy,
    Frequency,
    IngestError,
    TimeSeries,
    ingest_long_csv,
    last_window_split,
    rolling_origins,
    write_long_csv,
)


def ingest(text, freq=Frequency.MONTHLY, policy=FillPolicy.FORWARD_THEN_BACKFILL):
    return ingest_long_csv(io.StringIO(text), freq, policy)


class TestFrequency:
    def test_constants(self):
        assert (Frequency.HOURLY.season_length, Frequency.HOURLY.default_horizon) == (24, 24)
        assert (Frequency.DAILY.season_length, Frequency.DAILY.default_horizon) == (7, 7)
        assert (Frequency.WEEKLY.season_length, Frequency.WEEKLY.default_horizon) == (52, 1)
        assert (Frequency.MONTHLY.season_length, Frequency.MONTHLY.default_horizon) == (12, 12)

    def test_monthly_step_wraps_year(self):
        assert Frequency.MONTHLY.step(datetime(2020, 11, 1), 3) == datetime(2021, 2, 1)

    def test_index_of_roundtrip(self):
        for freq in Frequency:
            start = freq.parse_ds(freq.format_ds(datetime(2020, 3, 1)))
            for n in (0, 1, 5, 37):
                assert freq.index_of(freq.step(start, n), start) == n

    def test_off_grid_rejected(self):
        with pytest.raises(IngestError):
            Frequency.WEEKLY.index_of(datetime(2020, 1, 9), datetime(2020, 1, 1))

    def test_parse_formats(self):
        assert Frequency.MONTHLY.parse_ds("2020-01") == datetime(2020, 1, 1)
        assert Frequency.HOURLY.parse_ds("2020-01-02T13") == datetime(2020, 1, 2, 13)
        with pytest.raises(IngestError):
            Frequency.MONTHLY.parse_ds("2020-01-05")


class TestIngest:
    def test_forward_fill_gap(self):
        ds = ingest("unique_id,ds,y\na,2020-01,1\na,2020-03,3\n")
        np.testing.assert_array_equal(ds.get("a").values, [1.0, 1.0, 3.0])

    def test_rows_sorted_by_ds(self):
        ds = ingest("unique_id,ds,y\na,2020-02,5\na,2020-01,2\n")
        s = ds.get("a")
        np.testing.assert_array_equal(s.values, [2.0, 5.0])
        assert s.start == datetime(2020, 1, 1)

    def test_duplicate_timestamp_rejected(self):
        with pytest.raises(IngestError, match="duplicate"):
            ingest("unique_id,ds,y\na,2020-01,1\na,2020-01,2\n")

    def test_error_policy_rejects_gap(self):
        with pytest.raises(IngestError, match="gap"):
            ingest("unique_id,ds,y\na,2020-01,1\na,2020-03,3\n",
                   policy=FillPolicy.ERROR)

    def test_zero_policy(self):
        ds = ingest("unique_id,ds,y\na,2020-01,1\na,2020-04,4\n", policy=FillPolicy.ZERO)
        np.testing.assert_array_equal(ds.get("a").values, [1.0, 0.0, 0.0, 4.0])

    def test_leading_gap_backfills(self):
        # explicit blank-y row before the first observation
        ds = ingest("unique_id,ds,y,x\na,2020-01,,9\na,2020-02,5,8\n")
        np.testing.assert_array_equal(ds.get("a").values, [5.0, 5.0])

    def test_non_numeric_y(self):
        with pytest.raises(IngestError, match="non-numeric"):
            ingest("unique_id,ds,y\na,2020-01,abc\n")

    def test_non_finite_y(self):
        with pytest.raises(IngestError, match="non-finite"):
            ingest("unique_id,ds,y\na,2020-01,inf\n")

    def test_bad_timestamp(self):
        with pytest.raises(IngestError, match="unparseable"):
            ingest("unique_id,ds,y\na,January,1\n")

    def test_empty_stream(self):
        with pytest.raises(IngestError, match="empty"):
            ingest("")
        with pytest.raises(IngestError, match="no data rows"):
            ingest("unique_id,ds,y\n")

    def test_bad_header(self):
        with pytest.raises(IngestError, match="header"):
            ingest("id,date,value\na,2020-01,1\n")

    def test_exogenous_channels(self):
        ds = ingest("unique_id,ds,y,temp,load\na,2020-01,1,20,7\na,2020-02,2,21,8\n")
        s = ds.get("a")
        np.testing.assert_array_equal(s.exogenous["temp"], [20.0, 21.0])
        np.testing.assert_array_equal(s.exogenous["load"], [7.0, 8.0])
        assert s.future_exo_length == 0

    def test_future_covariates_from_trailing_blank_y(self):
        ds = ingest("unique_id,ds,y,temp\n"
                    "a,2020-01,1,20\na,2020-02,2,21\na,2020-03,,22\na,2020-04,,23\n")
        s = ds.get("a")
        assert len(s) == 2
        assert s.future_exo_length == 2
        np.testing.assert_array_equal(s.exogenous["temp"], [20.0, 21.0, 22.0, 23.0])

    def test_multiple_series_preserve_order(self):
        ds = ingest("unique_id,ds,y\nb,2020-01,1\na,2020-01,2\n")
        assert [s.id for s in ds.series] == ["b", "a"]

    def test_irregular_weekly_rejected(self):
        text = "unique_id,ds,y\na,2020-01-01,1\na,2020-01-05,2\n"
        with pytest.raises(IngestError, match="grid"):
            ingest(text, freq=Frequency.WEEKLY)


class TestRoundTrip:
    def cases(self):
        yield ingest("unique_id,ds,y\na,2020-01,1.5\na,2020-02,-2.25\nb,2020-03,7\n")
        yield ingest("unique_id,ds,y,x\n"
                     "a,2020-01,1,5\na,2020-02,2,6\na,2020-03,,7\n")
        yield ingest("unique_id,ds,y\nh,2021-06-30T22,1\nh,2021-06-30T23,2\nh,2021-07-01T00,3\n",
                     freq=Frequency.HOURLY)

    def test_write_then_ingest_identical(self):
        for ds in self.cases():
            buf = io.StringIO()
            write_long_csv(ds, buf)
            again = ingest_long_csv(io.StringIO(buf.getvalue()), ds.freq,
                                    FillPolicy.ERROR, role=ds.role)
            assert again == ds

    @given(st.lists(st.floats(min_value=-1e12, max_value=1e12,
                              allow_nan=False, allow_infinity=False),
                    min_size=1, max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_arbitrary_values(self, values):
        s = TimeSeries("s", datetime(2019, 5, 1), Frequency.MONTHLY, np.array(values))
        ds = Dataset(Frequency.MONTHLY, (s,))
        buf = io.StringIO()
        write_long_csv(ds, buf)
        again = ingest_long_csv(io.StringIO(buf.getvalue()), Frequency.MONTHLY,
                                FillPolicy.ERROR)
        assert again == ds


class TestLastWindowSplit:
    def make(self, *lengths, horizon_exo=0):
        series = []
        for i, n in enumerate(lengths):
            vals = np.arange(1, n + 1, dtype=float)
            exo = {}
            if horizon_exo:
                exo = {"x": np.arange(n + horizon_exo, dtype=float)}
            series.append(TimeSeries(f"s{i}", datetime(2020, 1, 1), Frequency.MONTHLY,
                                     vals, exo))
        return Dataset(Frequency.MONTHLY, tuple(series))

    def test_basic_split(self):
        train, test = last_window_split(self.make(5), 2)
        np.testing.assert_array_equal(train.get("s0").values, [1, 2, 3])
        np.testing.assert_array_equal(test.get("s0").values, [4, 5])

    def test_length_equal_horizon_errors(self):
        with pytest.raises(ValueError, match="length 12"):
            last_window_split(self.make(12), 12)

    def test_two_series_lengths(self):
        train, _ = last_window_split(self.make(10, 30), 7)
        assert [len(s) for s in train.series] == [3, 23]

    def test_concat_reproduces_original(self):
        ds = self.make(9, 15, 31)
        train, test = last_window_split(ds, 4)
        for s in ds.series:
            merged = np.concatenate([train.get(s.id).values, test.get(s.id).values])
            np.testing.assert_array_equal(merged, s.values)

    def test_future_covariates_attached_to_train(self):
        ds = self.make(10, horizon_exo=3)
        train, test = last_window_split(ds, 4)
        tr, te = train.get("s0"), test.get("s0")
        assert len(tr) == 6 and tr.future_exo_length == 4
        np.testing.assert_array_equal(tr.exogenous["x"], np.arange(10, dtype=float))
        assert len(te) == 4 and te.future_exo_length == 3
        assert te.start == Frequency.MONTHLY.step(datetime(2020, 1, 1), 6)


class TestRollingOrigins:
    def series(self, n):
        return TimeSeries("s", datetime(2020, 1, 1), Frequency.MONTHLY,
                          np.arange(1, n + 1, dtype=float))

    def test_cuts_and_actuals(self):
        wins = rolling_origins(self.series(10), horizon=2, n_windows=2)
        assert [w[0] for w in wins] == [6, 8]
        np.testing.assert_array_equal(wins[0][1], [7, 8])
        np.testing.assert_array_equal(wins[1][1], [9, 10])

    def test_insufficient_length(self):
        with pytest.raises(ValueError, match="needs"):
            rolling_origins(self.series(10), horizon=5, n_windows=2)

    def test_single_window_matches_last_window_split(self):
        s = self.series(12)
        wins = rolling_origins(s, horizon=3, n_windows=1)
        _, test = last_window_split(Dataset(Frequency.MONTHLY, (s,)), 3)
        np.testing.assert_array_equal(wins[0][1], test.get("s").values)
        assert wins[0][0] == 9

    @given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 30))
    @settings(max_examples=60, deadline=None)
    def test_windows_tile_tail_exactly(self, horizon, n_windows, extra):
        n = horizon * n_windows + extra
        s = self.series(n)
        wins = rolling_origins(s, horizon, n_windows)
        tiled = np.concatenate([w[1] for w in wins])
        np.testing.assert_array_equal(tiled, s.values[-horizon * n_windows:])
        cuts = [w[0] for w in wins]
        assert cuts == sorted(cuts)
        assert all(b - a == horizon for a, b in zip(cuts, cuts[1:]))


class TestInvariants:
    def test_values_immutable(self):
        s = TimeSeries("a", datetime(2020, 1, 1), Frequency.DAILY, np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            s.values[0] = 9

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            TimeSeries("a", datetime(2020, 1, 1), Frequency.DAILY, np.array([1.0, np.nan]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            TimeSeries("a", datetime(2020, 1, 1), Frequency.DAILY, np.array([]))

    def test_short_exo_rejected(self):
        with pytest.raises(ValueError, match="shorter"):
            TimeSeries("a", datetime(2020, 1, 1), Frequency.DAILY,
                       np.array([1.0, 2.0]), {"x": np.array([1.0])})

    def test_duplicate_ids_rejected(self):
        s = TimeSeries("a", datetime(2020, 1, 1), Frequency.DAILY, np.array([1.0]))
        with pytest.raises(ValueError, match="duplicate"):
            Dataset(Frequency.DAILY, (s, s))

    def test_mixed_freq_rejected(self):
        a = TimeSeries("a", datetime(2020, 1, 1), Frequency.DAILY, np.array([1.0]))
        b = TimeSeries("b", datetime(2020, 1, 1), Frequency.HOURLY, np.array([1.0]))
        with pytest.raises(ValueError, match="frequency"):
            Dataset(Frequency.DAILY, (a, b))
