import datetime as dt

import numpy as np
import pytest

from rnnfolio import marketdata as md
from rnnfolio.errors import ConfigError, DataError, ParseError
from rnnfolio.marketdata import (Bar, BarPanel, build_features, fit_normalizer,
                                 apply_normalizer, gen_synthetic_panel, load_bars,
                                 make_supervised, make_supervised_pooled,
                                 momentum_signal_correlation, panel_from_bars,
                                 rolling_splits, save_bars)


def weekly_dates(n, start=dt.date(2015, 1, 2)):
    return [start + dt.timedelta(weeks=k) for k in range(n)]


def flat_bar(date, symbol, close, volume=1000.0):
    return Bar(date, symbol, close, close * 1.01, close * 0.99, close, volume)


def single_symbol_panel(closes, symbol="AAA", volumes=None):
    dates = weekly_dates(len(closes))
    volumes = volumes or [1000.0] * len(closes)
    return panel_from_bars([flat_bar(d, symbol, c, v)
                            for d, c, v in zip(dates, closes, volumes)])


class TestBar:
    def test_high_below_close_rejected(self):
        with pytest.raises(DataError, match="AAA"):
            Bar(dt.date(2020, 1, 3), "AAA", 10, 9.5, 9, 10, 100)

    def test_low_above_open_rejected(self):
        with pytest.raises(DataError):
            Bar(dt.date(2020, 1, 3), "AAA", 10, 11, 10.5, 10.8, 100)

    def test_nonpositive_price_rejected(self):
        with pytest.raises(DataError):
            Bar(dt.date(2020, 1, 3), "AAA", 0.0, 1, 0.5, 0.9, 100)


class TestLoadSave:
    def test_round_trip_identical(self, tmp_path):
        panel = gen_synthetic_panel(3, 4, 40, 0.5)
        path = tmp_path / "bars.csv"
        save_bars(panel, path)
        loaded = load_bars(path)
        assert loaded.dates == panel.dates
        assert loaded.symbols == panel.symbols
        for name in ("open", "high", "low", "close", "volume"):
            assert np.array_equal(getattr(loaded, name), getattr(panel, name))
        assert np.array_equal(loaded.mask, panel.mask)

    def test_small_well_formed(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text(
            "date,symbol,open,high,low,close,volume\n"
            "2020-01-03,AAA,10,11,9,10.5,100\n"
            "2020-01-03,BBB,20,21,19,20.5,200\n"
            "2020-01-10,AAA,10.5,11,10,10.8,110\n"
            "2020-01-10,BBB,20.5,21,20,20.8,210\n"
            "2020-01-17,AAA,10.8,11,10,10.2,120\n"
            "2020-01-17,BBB,20.8,21,20,20.2,220\n")
        panel = load_bars(path)
        assert panel.n_dates == 3 and panel.n_symbols == 2
        assert panel.mask.all()

    def test_high_below_low_names_row(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("date,symbol,open,high,low,close,volume\n"
                        "2020-01-03,AAA,10,9,11,10,100\n")
        with pytest.raises(DataError, match="2020-01-03.*AAA"):
            load_bars(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("date,symbol,open,high,low,close,volume\n")
        with pytest.raises(DataError):
            load_bars(path)

    def test_malformed_row_has_line_number(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("date,symbol,open,high,low,close,volume\n"
                        "2020-01-03,AAA,10,11,9,ten,100\n")
        with pytest.raises(ParseError, match=":2:"):
            load_bars(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("sym,close\nAAA,1\n")
        with pytest.raises(ParseError):
            load_bars(path)

    def test_duplicate_rejected(self):
        b = flat_bar(dt.date(2020, 1, 3), "AAA", 10)
        with pytest.raises(DataError, match="duplicate"):
            panel_from_bars([b, flat_bar(dt.date(2020, 1, 3), "AAA", 11)])


class TestBuildFeatures:
    def test_constant_prices_zero_returns(self):
        fp = build_features(single_symbol_panel([50.0] * 20))
        sel = fp.X[fp.valid]
        assert sel.shape[0] > 0
        # return and volatility features all zero, close/mean ratio 1
        assert np.allclose(sel[:, :5], 0.0)
        assert np.allclose(sel[:, 5], 1.0)

    def test_price_doubling(self):
        closes = [10.0] * 14 + [20.0, 20.0]
        fp = build_features(single_symbol_panel(closes))
        t = 14  # doubling week
        assert fp.valid[t, 0]
        assert fp.X[t, 0, 0] == pytest.approx(1.0)       # 1-week return
        assert fp.labels[t - 1, 0] == pytest.approx(1.0)  # prior week's label

    def test_insufficient_history_all_masked(self):
        fp = build_features(single_symbol_panel([10.0] * 5))
        assert not fp.valid.any()

    def test_hand_series_matches_independent_computation(self):
        closes = [100, 102, 101, 105, 108, 107, 110, 112, 111, 115, 118, 117, 120, 122]
        vols = [1000, 1100, 900, 1200, 1000, 1050, 980, 1300, 1250, 1020, 990, 1400, 1100, 1150]
        highs = [c * 1.02 for c in closes]
        lows = [c * 0.97 for c in closes]
        dates = weekly_dates(14)
        bars = [Bar(d, "AAA", c, h, l, c, v)
                for d, c, h, l, v in zip(dates, closes, highs, lows, vols)]
        fp = build_features(panel_from_bars(bars))
        t = 12  # only anchor with full lookback and a next week
        assert fp.valid[t, 0] and fp.valid.sum() == 1

        # independent recomputation, plain python
        c, v = closes, vols
        rets = [c[i] / c[i - 1] - 1 for i in range(t - 11, t + 1)]

        def pstd(xs):
            m = sum(xs) / len(xs)
            return (sum((x - m) ** 2 for x in xs) / len(xs)) ** 0.5

        vwin = v[t - 3:t + 1]
        vz = (v[t] - sum(vwin) / 4) / pstd(vwin)
        expected = [
            c[t] / c[t - 1] - 1,
            c[t] / c[t - 4] - 1,
            c[t] / c[t - 12] - 1,
            pstd(rets[-4:]),
            pstd(rets),
            c[t] / (sum(c[t - 11:t + 1]) / 12),
            vz,
            (highs[t] - lows[t]) / c[t],
        ]
        assert np.allclose(fp.X[t, 0], expected, atol=1e-10)
        assert fp.labels[t, 0] == pytest.approx(c[t + 1] / c[t] - 1, abs=1e-12)


class TestNormalizer:
    def test_hand_case(self):
        # feature column [1, 2, 3] -> population z-scores [-1.2247, 0, 1.2247]
        fp = build_features(single_symbol_panel(list(np.linspace(100, 130, 16))))
        idx = fp.valid.nonzero()[0][:3]
        fp.valid[:] = False
        fp.valid[idx, 0] = True
        fp.X[idx, 0, :] = np.array([[1.0], [2.0], [3.0]]) @ np.ones((1, fp.X.shape[2]))
        n = fit_normalizer(fp, fp.dates[0], fp.dates[-1])
        out = apply_normalizer(n, fp)
        col = out.X[idx, 0, 0]
        assert np.allclose(col, [-1.2247, 0.0, 1.2247], atol=1e-4)

    def test_standardized_fit_slice(self):
        panel = gen_synthetic_panel(1, 5, 60, 0.3)
        fp = build_features(panel)
        n = fit_normalizer(fp, fp.dates[0], fp.dates[-1])
        out = apply_normalizer(n, fp)
        rows = out.X[out.valid]
        assert np.max(np.abs(rows.mean(axis=0))) < 1e-10
        assert np.max(np.abs(rows.std(axis=0) - 1.0)) < 1e-10

    def test_idempotent_on_standardized(self):
        panel = gen_synthetic_panel(2, 5, 60, 0.3)
        fp = build_features(panel)
        once = apply_normalizer(fit_normalizer(fp, fp.dates[0], fp.dates[-1]), fp)
        twice = apply_normalizer(fit_normalizer(once, once.dates[0], once.dates[-1]), once)
        assert np.allclose(once.X[once.valid], twice.X[twice.valid], atol=1e-10)

    def test_constant_feature_dropped(self):
        fp = build_features(single_symbol_panel([50.0] * 20))
        # constant prices: every return/vol feature has zero variance
        n = fit_normalizer(fp, fp.dates[0], fp.dates[-1])
        assert len(n.kept) < fp.X.shape[2]
        out = apply_normalizer(n, fp)
        assert out.X.shape[2] == len(n.kept)


class TestMakeSupervised:
    def contiguous_fp(self, n_valid=10):
        fp = build_features(single_symbol_panel(list(np.linspace(100, 140, n_valid + 13))))
        assert fp.valid.sum() == n_valid
        return fp

    def test_count_formula(self):
        ds = make_supervised(self.contiguous_fp(10), "AAA", window=4)
        assert ds.X.shape == (7, 4, 8)

    def test_window_equals_history(self):
        ds = make_supervised(self.contiguous_fp(10), "AAA", window=10)
        assert ds.X.shape[0] == 1

    def test_window_too_long(self):
        ds = make_supervised(self.contiguous_fp(10), "AAA", window=11)
        assert ds.X.shape[0] == 0

    def test_leakage_audit(self):
        panel = gen_synthetic_panel(4, 4, 60, 0.5)
        fp = build_features(panel)
        ds = make_supervised_pooled(fp, 6)
        date_idx = {d: i for i, d in enumerate(fp.dates)}
        for anchor, sym in zip(ds.dates, ds.symbols):
            t = date_idx[anchor]
            # label realizes at t+1; every feature row is at or before t
            assert t + 1 < len(fp.dates)

    def test_labels_match_anchor(self):
        fp = self.contiguous_fp(10)
        ds = make_supervised(fp, "AAA", window=4)
        date_idx = {d: i for i, d in enumerate(fp.dates)}
        for k, anchor in enumerate(ds.dates):
            t = date_idx[anchor]
            assert ds.y[k] == fp.labels[t, 0]
            assert np.array_equal(ds.X[k], fp.X[t - 3:t + 1, 0, :])


class TestRollingSplits:
    def test_paper_calendar(self):
        dates = weekly_dates(627, start=dt.date(2008, 1, 4))
        assert dates[-1] <= dt.date(2020, 1, 3)
        splits = rolling_splits(dates, dt.timedelta(days=3 * 365), dt.timedelta(weeks=13))
        assert dt.date(2011, 1, 1) <= splits[0].test_start <= dt.date(2011, 1, 15)
        assert splits[0].train_start == dates[0]

    def test_exact_span_zero_splits(self):
        dates = weekly_dates(11)
        splits = rolling_splits(dates, dates[-1] - dates[0], dt.timedelta(weeks=4))
        assert splits == []

    def test_too_short_rejected(self):
        with pytest.raises(ConfigError):
            rolling_splits(weekly_dates(10), dt.timedelta(days=365), dt.timedelta(weeks=4))

    def test_five_year_axis_two_splits(self):
        dates = weekly_dates(261)  # 5 years weekly
        splits = rolling_splits(dates, dt.timedelta(days=3 * 365), dt.timedelta(days=365))
        assert len(splits) == 2
        # contiguous, non-overlapping test ranges
        assert splits[0].test_end < splits[1].test_start
        covered = [d for d in dates if splits[0].test_start <= d <= splits[1].test_end]
        per_split = [d for s in splits for d in dates if s.test_start <= d <= s.test_end]
        assert covered == per_split

    def test_expanding_vs_sliding(self):
        dates = weekly_dates(261)
        exp = rolling_splits(dates, dt.timedelta(days=3 * 365), dt.timedelta(days=365))
        sld = rolling_splits(dates, dt.timedelta(days=3 * 365), dt.timedelta(days=365),
                             expanding=False)
        assert exp[1].train_start == dates[0]
        assert sld[1].train_start > dates[0]


class TestSyntheticPanel:
    def test_no_signal_uncorrelated(self):
        panel = gen_synthetic_panel(1, 50, 300, 0.0)
        assert abs(momentum_signal_correlation(panel)) < 0.05

    def test_strong_signal_correlated(self):
        panel = gen_synthetic_panel(1, 50, 300, 0.8)
        assert momentum_signal_correlation(panel) > 0.5

    def test_deterministic(self):
        a = gen_synthetic_panel(9, 5, 40, 0.4)
        b = gen_synthetic_panel(9, 5, 40, 0.4)
        assert np.array_equal(a.close, b.close)
        assert np.array_equal(a.volume, b.volume)

    def test_bar_invariants_hold(self):
        p = gen_synthetic_panel(2, 10, 100, 0.6)
        assert np.all(p.low > 0)
        assert np.all(p.low <= np.minimum(p.open, p.close) + 1e-12)
        assert np.all(p.high >= np.maximum(p.open, p.close) - 1e-12)

    def test_invalid_sizes(self):
        with pytest.raises(ConfigError):
            gen_synthetic_panel(0, 1, 100, 0.5)
        with pytest.raises(ConfigError):
            gen_synthetic_panel(0, 5, 10, 0.5)
