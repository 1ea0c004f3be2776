"""Rolling retrain -> predict -> rank -> rebalance backtesting engine.

Each rolling split trains a fresh pooled cross-sectional model (all symbols
share parameters) seeded by ``cfg.seed xor split_index``, so splits are
independent jobs: running them concurrently must produce bitwise-identical
results to sequential execution.

The benchmark is the equal-weight mean return of the valid universe each
week, standing in for the index level series.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import marketdata as md
from . import model as mdl
from .errors import ConfigError, DataError
from .metrics import IndicatorReport, indicator_report
from .numerics import Rng

log = logging.getLogger(__name__)


@dataclass
class BacktestConfig:
    initial_train: dt.timedelta = dt.timedelta(days=3 * 365)
    step: dt.timedelta = dt.timedelta(weeks=13)
    top_k: int = 30
    cost_bps: float = 0.0
    model_spec: str = "lstm-gru"
    window: int = 12
    train: mdl.TrainConfig = field(default_factory=mdl.TrainConfig)
    seed: int = 0
    expanding: bool = True
    perfect_foresight: bool = False   # test hook: predictions := realized returns
    parallel: bool = False

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.cost_bps < 0:
            raise ConfigError("cost_bps must be >= 0")
        if self.window < 1:
            raise ConfigError("window must be >= 1")


@dataclass
class BacktestResult:
    dates: list[dt.date]
    strategy_equity: np.ndarray      # length len(dates) + 1, starts at 1
    benchmark_equity: np.ndarray
    strategy_returns: np.ndarray
    benchmark_returns: np.ndarray
    weights: list[dict[str, float]]  # per test week
    turnover: np.ndarray
    report: IndicatorReport


def select_portfolio(predictions: dict[str, float], k: int) -> dict[str, float]:
    """Equal-weight the k symbols with the highest predicted return.

    Ties at the cutoff go to the lexicographically smaller symbol.  An empty
    prediction map yields a flat (empty) portfolio.
    """
    if not predictions:
        log.warning("select_portfolio: empty prediction map, holding flat")
        return {}
    ranked = sorted(predictions, key=lambda s: (-predictions[s], s))
    chosen = ranked[:k]
    w = 1.0 / len(chosen)
    return {s: w for s in chosen}


def equity_curve(period_returns) -> np.ndarray:
    r = np.asarray(period_returns, float)
    if np.any(r <= -1.0):
        raise DataError("equity_curve: return <= -100% (bankruptcy is out of model)")
    return np.concatenate([[1.0], np.cumprod(1.0 + r)])


def _window_valid(fp: md.FeaturePanel, t: int, j: int, L: int) -> bool:
    return t - L + 1 >= 0 and bool(fp.valid[t - L + 1:t + 1, j].all())


def _run_split(fp: md.FeaturePanel, split: md.RollingSplit,
               cfg: BacktestConfig, split_index: int):
    """Train on the split's train range, predict every test week.

    Returns (date, predictions, realized) triples; realized returns come from
    the raw (un-normalized) labels.
    """
    date_idx = {d: i for i, d in enumerate(fp.dates)}
    L = cfg.window
    if cfg.perfect_foresight:
        nfp, model = fp, None
    else:
        norm = md.fit_normalizer(fp, split.train_start, split.train_end)
        nfp = md.apply_normalizer(norm, fp)
        ds = md.make_supervised_pooled(nfp, L, start=split.train_start,
                                       end=split.train_end)
        if ds.X.shape[0] == 0:
            raise DataError(
                f"split {split_index}: no training windows in "
                f"{split.train_start}..{split.train_end}")
        seed = cfg.seed ^ split_index
        spec = mdl.parse_spec(cfg.model_spec, nfp.X.shape[2], L)
        model = mdl.build_model(spec, Rng(seed))
        mdl.train(model, ds, replace(cfg.train, seed=seed))

    weeks = []
    test_dates = [d for d in fp.dates if split.test_start <= d <= split.test_end]
    for d in test_dates:
        t = date_idx[d]
        valid_syms = [j for j in range(len(fp.symbols)) if _window_valid(nfp, t, j, L)]
        realized = {fp.symbols[j]: float(fp.labels[t, j]) for j in valid_syms}
        if cfg.perfect_foresight:
            preds = dict(realized)
        elif valid_syms:
            windows = np.stack([nfp.X[t - L + 1:t + 1, j, :] for j in valid_syms])
            out, _ = model.forward_batch(windows, "infer")
            preds = {fp.symbols[j]: float(out[i]) for i, j in enumerate(valid_syms)}
        else:
            preds = {}
        weeks.append((d, preds, realized))
    return weeks


def run_backtest(panel: md.BarPanel, cfg: BacktestConfig) -> BacktestResult:
    fp = md.build_features(panel)
    splits = md.rolling_splits(panel.dates, cfg.initial_train, cfg.step, cfg.expanding)
    if not splits:
        raise ConfigError(
            f"panel spans {(panel.dates[-1] - panel.dates[0]).days} days; "
            f"need initial_train ({cfg.initial_train.days} days) plus at least one step")

    if cfg.parallel:
        with ThreadPoolExecutor() as pool:
            per_split = list(pool.map(
                lambda kv: _run_split(fp, kv[1], cfg, kv[0]), enumerate(splits)))
    else:
        per_split = [_run_split(fp, s, cfg, k) for k, s in enumerate(splits)]

    dates, weights_path, turnover = [], [], []
    strat_rets, bench_rets = [], []
    prev_weights: dict[str, float] = {}
    prev_realized: dict[str, float] = {}
    for weeks in per_split:
        for d, preds, realized in weeks:
            if preds:
                w = select_portfolio(preds, cfg.top_k)
            else:
                log.warning("%s: no valid symbols, holding flat", d)
                w = {}
            # drift last week's weights by last week's realized returns
            if prev_weights:
                drift = {s: prev_weights[s] * (1.0 + prev_realized.get(s, 0.0))
                         for s in prev_weights}
                total = sum(drift.values())
                drifted = {s: v / total for s, v in drift.items()} if total > 0 else {}
            else:
                drifted = {}
            union = set(w) | set(drifted)
            to = 0.5 * sum(abs(w.get(s, 0.0) - drifted.get(s, 0.0)) for s in union)
            ret = sum(w[s] * realized[s] for s in w) - cfg.cost_bps / 1e4 * to
            bench = float(np.mean(list(realized.values()))) if realized else 0.0
            dates.append(d)
            weights_path.append(w)
            turnover.append(to)
            strat_rets.append(ret)
            bench_rets.append(bench)
            prev_weights, prev_realized = w, realized

    strat_rets = np.array(strat_rets)
    bench_rets = np.array(bench_rets)
    se = equity_curve(strat_rets)
    be = equity_curve(bench_rets)
    report = indicator_report(se, be)
    return BacktestResult(dates, se, be, strat_rets, bench_rets,
                          weights_path, np.array(turnover), report)


def write_equity_csv(result: BacktestResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "strategy", "benchmark"])
        for i, d in enumerate(result.dates):
            w.writerow([d.isoformat(), repr(float(result.strategy_equity[i + 1])),
                        repr(float(result.benchmark_equity[i + 1]))])


def write_weights_csv(result: BacktestResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "symbol", "weight"])
        for d, weights in zip(result.dates, result.weights):
            for s in sorted(weights):
                w.writerow([d.isoformat(), s, repr(float(weights[s]))])
