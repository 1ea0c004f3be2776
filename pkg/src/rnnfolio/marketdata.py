"""Bar ingestion, feature/label construction, leakage-safe windowing,
rolling splits and the synthetic panel generator.

CSV schema (bit-exact): header ``date,symbol,open,high,low,close,volume``,
dates as ``YYYY-MM-DD``, decimal point ``.``, UTF-8, no thousands separators.

Default feature set (F=8, weekly):
    ret_1w, ret_4w, ret_12w, vol_4w, vol_12w, close_over_mean_12w,
    volume_zscore_4w, range_ratio
Labels are next-week simple returns; a row is valid only when its full
lookback exists and the next week's close exists, so no feature can see
past its label's realization date.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ParseError
from .numerics import Rng

log = logging.getLogger(__name__)

CSV_HEADER = ["date", "symbol", "open", "high", "low", "close", "volume"]
FEATURE_NAMES = [
    "ret_1w", "ret_4w", "ret_12w", "vol_4w", "vol_12w",
    "close_over_mean_12w", "volume_zscore_4w", "range_ratio",
]
MAX_LOOKBACK = 12


@dataclass
class Bar:
    date: dt.date
    symbol: str
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise DataError(f"({self.date}, {self.symbol}): prices must be > 0")
        if self.volume < 0:
            raise DataError(f"({self.date}, {self.symbol}): negative volume")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise DataError(
                f"({self.date}, {self.symbol}): high/low inconsistent with open/close")


@dataclass
class BarPanel:
    """Date-aligned per-symbol weekly bars. Arrays are (T, S); mask marks bars present."""
    dates: list[dt.date]
    symbols: list[str]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    mask: np.ndarray

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)


def panel_from_bars(bars: list[Bar]) -> BarPanel:
    if not bars:
        raise DataError("no bars: empty panel")
    seen = set()
    for b in bars:
        key = (b.date, b.symbol)
        if key in seen:
            raise DataError(f"duplicate bar for {key}")
        seen.add(key)
    dates = sorted({b.date for b in bars})
    symbols = sorted({b.symbol for b in bars})
    di = {d: i for i, d in enumerate(dates)}
    si = {s: i for i, s in enumerate(symbols)}
    shape = (len(dates), len(symbols))
    arrs = {k: np.zeros(shape) for k in ("open", "high", "low", "close", "volume")}
    mask = np.zeros(shape, dtype=bool)
    for b in bars:
        i, j = di[b.date], si[b.symbol]
        arrs["open"][i, j] = b.open
        arrs["high"][i, j] = b.high
        arrs["low"][i, j] = b.low
        arrs["close"][i, j] = b.close
        arrs["volume"][i, j] = b.volume
        mask[i, j] = True
    return BarPanel(dates, symbols, mask=mask, **arrs)


def load_bars(path) -> BarPanel:
    bars = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header != CSV_HEADER:
            raise ParseError(f"{path}: bad header {header!r}, expected {CSV_HEADER!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise ParseError(f"{path}:{lineno}: expected 7 fields, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[0])
                vals = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            bars.append(Bar(date, row[1], *vals))
    if not bars:
        raise DataError(f"{path}: header only, no data rows")
    return panel_from_bars(bars)


def save_bars(panel: BarPanel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i, d in enumerate(panel.dates):
            for j, s in enumerate(panel.symbols):
                if panel.mask[i, j]:
                    w.writerow([d.isoformat(), s,
                                repr(float(panel.open[i, j])), repr(float(panel.high[i, j])),
                                repr(float(panel.low[i, j])), repr(float(panel.close[i, j])),
                                repr(float(panel.volume[i, j]))])


# ---------------------------------------------------------------------------
# Features and labels


@dataclass
class FeaturePanel:
    dates: list[dt.date]
    symbols: list[str]
    X: np.ndarray          # (T, S, F)
    labels: np.ndarray     # (T, S) next-week simple return
    valid: np.ndarray      # (T, S) lookback complete AND label realizable
    feature_names: list[str] = field(default_factory=lambda: list(FEATURE_NAMES))


def build_features(panel: BarPanel) -> FeaturePanel:
    T, S = panel.n_dates, panel.n_symbols
    F = len(FEATURE_NAMES)
    X = np.zeros((T, S, F))
    labels = np.zeros((T, S))
    valid = np.zeros((T, S), dtype=bool)
    if T < MAX_LOOKBACK + 2:
        log.warning("panel has %d dates, need >= %d: all rows masked invalid",
                    T, MAX_LOOKBACK + 2)
        return FeaturePanel(list(panel.dates), list(panel.symbols), X, labels, valid)

    c, v = panel.close, panel.volume
    for j in range(S):
        for t in range(MAX_LOOKBACK, T - 1):
            if not panel.mask[t - MAX_LOOKBACK:t + 2, j].all():
                continue
            cw = c[t - MAX_LOOKBACK:t + 1, j]          # closes t-12 .. t
            rets = cw[1:] / cw[:-1] - 1.0              # 12 weekly returns ending at t
            vw = v[t - 3:t + 1, j]
            vstd = float(np.std(vw))
            vz = (v[t, j] - float(np.mean(vw))) / vstd if vstd > 0 else 0.0
            X[t, j] = [
                rets[-1],
                c[t, j] / c[t - 4, j] - 1.0,
                c[t, j] / c[t - 12, j] - 1.0,
                float(np.std(rets[-4:])),
                float(np.std(rets)),
                c[t, j] / float(np.mean(cw[1:])),
                vz,
                (panel.high[t, j] - panel.low[t, j]) / c[t, j],
            ]
            labels[t, j] = c[t + 1, j] / c[t, j] - 1.0
            valid[t, j] = True
    return FeaturePanel(list(panel.dates), list(panel.symbols), X, labels, valid)


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray           # population std of the kept features
    kept: list[int]           # indices into the original feature axis
    feature_names: list[str]


def fit_normalizer(fp: FeaturePanel, start: dt.date, end: dt.date) -> Normalizer:
    """Per-feature z-score statistics from valid rows with start <= date <= end."""
    in_range = np.array([start <= d <= end for d in fp.dates])
    rows = fp.X[in_range][fp.valid[in_range]]
    if rows.shape[0] == 0:
        raise DataError(f"no valid rows in normalizer range {start}..{end}")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    kept = [i for i in range(rows.shape[1]) if std[i] > 1e-12]
    dropped = [fp.feature_names[i] for i in range(rows.shape[1]) if i not in kept]
    if dropped:
        log.warning("dropping zero-variance features: %s", dropped)
    return Normalizer(mean[kept], std[kept], kept,
                      [fp.feature_names[i] for i in kept])


def apply_normalizer(n: Normalizer, fp: FeaturePanel) -> FeaturePanel:
    X = (fp.X[:, :, n.kept] - n.mean) / n.std
    X[~fp.valid] = 0.0
    return FeaturePanel(fp.dates, fp.symbols, X, fp.labels.copy(),
                        fp.valid.copy(), list(n.feature_names))


# ---------------------------------------------------------------------------
# Supervised windowing


@dataclass
class SequenceDataset:
    X: np.ndarray                 # (N, L, F)
    y: np.ndarray                 # (N,)
    dates: list[dt.date]          # anchor dates
    symbols: list[str]            # per-sample symbol


def make_supervised(fp: FeaturePanel, symbol: str, window: int) -> SequenceDataset:
    return make_supervised_pooled(fp, window, symbols=[symbol])


def make_supervised_pooled(fp: FeaturePanel, window: int,
                           start: dt.date | None = None,
                           end: dt.date | None = None,
                           symbols: list[str] | None = None) -> SequenceDataset:
    """Windows X[t-L+1..t], label y[t], for anchors t with all L rows valid.

    ``start``/``end`` bound the anchor date; because a valid anchor's label is
    realized one week later, training ranges should end one date before the
    first test date.
    """
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    sym_idx = (range(len(fp.symbols)) if symbols is None
               else [fp.symbols.index(s) for s in symbols])
    T = len(fp.dates)
    xs, ys, ds, ss = [], [], [], []
    for j in sym_idx:
        for t in range(window - 1, T):
            d = fp.dates[t]
            if start is not None and d < start:
                continue
            if end is not None and d > end:
                continue
            if fp.valid[t - window + 1:t + 1, j].all():
                xs.append(fp.X[t - window + 1:t + 1, j, :])
                ys.append(fp.labels[t, j])
                ds.append(d)
                ss.append(fp.symbols[j])
    if not xs:
        log.warning("make_supervised: no complete windows (L=%d)", window)
        return SequenceDataset(np.zeros((0, window, fp.X.shape[2])),
                               np.zeros(0), [], [])
    return SequenceDataset(np.stack(xs), np.array(ys), ds, ss)


# ---------------------------------------------------------------------------
# Rolling splits


@dataclass
class RollingSplit:
    train_start: dt.date
    train_end: dt.date
    test_start: dt.date
    test_end: dt.date

    def __post_init__(self):
        if self.train_end >= self.test_start:
            raise ConfigError("rolling split: train range overlaps test range")


def rolling_splits(dates: list[dt.date], initial_train: dt.timedelta,
                   step: dt.timedelta, expanding: bool = True) -> list[RollingSplit]:
    """Walk-forward splits: initial closed learning period, then step-sized
    test windows rolling forward; train window expands (or slides)."""
    if not dates:
        raise ConfigError("empty date axis")
    span = dates[-1] - dates[0]
    if span < initial_train:
        raise ConfigError(
            f"date axis spans {span.days} days, shorter than initial_train "
            f"({initial_train.days} days)")
    if span == initial_train:
        log.warning("date axis exactly equals initial_train: zero splits")
        return []
    splits = []
    boundary = dates[0] + initial_train
    while boundary <= dates[-1]:
        test_dates = [d for d in dates if boundary <= d < boundary + step]
        if test_dates:
            train_lo = dates[0] if expanding else test_dates[0] - initial_train
            train_dates = [d for d in dates if train_lo <= d < test_dates[0]]
            if train_dates:
                splits.append(RollingSplit(train_dates[0], train_dates[-1],
                                           test_dates[0], test_dates[-1]))
        boundary = boundary + step
    return splits


# ---------------------------------------------------------------------------
# Synthetic panel generation


def gen_synthetic_panel(seed: int, n_symbols: int, n_weeks: int,
                        signal_strength: float,
                        start_date: dt.date = dt.date(2008, 1, 4)) -> BarPanel:
    """Geometric-random-walk weekly panel with a planted momentum signal.

    Each symbol carries a persistent latent driver (AR(1), rho=0.95); weekly
    returns mix the driver with noise at the requested strength, so recent
    average returns predict the next return when signal_strength > 0 and
    carry no information at 0.
    """
    if n_symbols < 2:
        raise ConfigError(f"n_symbols must be >= 2, got {n_symbols}")
    if n_weeks < 30:
        raise ConfigError(f"n_weeks must be >= 30, got {n_weeks}")
    if not 0.0 <= signal_strength <= 1.0:
        raise ConfigError(f"signal_strength must be in [0, 1], got {signal_strength}")
    rng = Rng(seed)
    rho, sigma_w, drift = 0.95, 0.03, 0.0005
    mix = np.sqrt(1.0 - signal_strength ** 2)

    f = rng.normal((n_symbols,))
    eps_f = rng.normal((n_weeks, n_symbols))
    eps_r = rng.normal((n_weeks, n_symbols))
    base = rng.uniform(10.0, 200.0, (n_symbols,))
    open_noise = rng.normal((n_weeks, n_symbols), scale=0.004)
    hi_noise = np.abs(rng.normal((n_weeks, n_symbols), scale=0.006))
    lo_noise = np.abs(rng.normal((n_weeks, n_symbols), scale=0.006))
    vol_noise = rng.normal((n_weeks, n_symbols), scale=0.5)

    close = np.empty((n_weeks, n_symbols))
    close[0] = base
    for t in range(1, n_weeks):
        f = rho * f + np.sqrt(1.0 - rho ** 2) * eps_f[t]
        r = drift + sigma_w * (signal_strength * f + mix * eps_r[t])
        np.clip(r, -0.45, 0.45, out=r)
        close[t] = close[t - 1] * (1.0 + r)

    opn = close * (1.0 + open_noise)
    high = np.maximum(opn, close) * (1.0 + hi_noise)
    low = np.minimum(opn, close) * (1.0 - lo_noise * 0.9)
    volume = 1e6 * np.exp(vol_noise)

    dates = [start_date + dt.timedelta(weeks=k) for k in range(n_weeks)]
    symbols = [f"S{k:04d}" for k in range(n_symbols)]
    return BarPanel(dates, symbols, opn, high, low, close, volume,
                    np.ones((n_weeks, n_symbols), dtype=bool))


def momentum_signal_correlation(panel: BarPanel) -> float:
    """Pooled correlation between 4-week average return and the next return."""
    c = panel.close
    r = c[1:] / c[:-1] - 1.0
    mom = np.array([(r[t - 3:t + 1]).mean(axis=0) for t in range(3, r.shape[0] - 1)])
    nxt = r[4:]
    return float(np.corrcoef(mom.ravel(), nxt.ravel())[0, 1])
