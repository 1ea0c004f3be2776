import datetime as dt

import numpy as np
import pytest

from oracles import o_equity
from rnnfolio import backtest as bt
from rnnfolio import marketdata as md
from rnnfolio import model as mdl
from rnnfolio.backtest import (BacktestConfig, equity_curve, run_backtest,
                               select_portfolio, write_equity_csv, write_weights_csv)
from rnnfolio.errors import ConfigError, DataError

TINY_SPEC = "gru(4)->dense(1,linear)"


def tiny_config(**kw):
    defaults = dict(
        initial_train=dt.timedelta(days=2 * 365), step=dt.timedelta(weeks=13),
        top_k=3, model_spec=TINY_SPEC, window=6,
        train=mdl.TrainConfig(learning_rate=0.01, epochs=1, batch_size=64),
        seed=0)
    defaults.update(kw)
    return BacktestConfig(**defaults)


class TestSelectPortfolio:
    def test_hand_ranking(self):
        w = select_portfolio({"A": 0.02, "B": -0.01, "C": 0.05}, 2)
        assert w == {"C": 0.5, "A": 0.5}

    def test_k_exceeds_universe(self):
        w = select_portfolio({"A": 0.1, "B": 0.2}, 5)
        assert w == {"A": 0.5, "B": 0.5}

    def test_tie_goes_to_smaller_symbol(self):
        w = select_portfolio({"A": 0.3, "D": 0.1, "B": 0.1}, 2)
        assert set(w) == {"A", "B"}

    def test_empty_is_flat(self):
        assert select_portfolio({}, 3) == {}


class TestEquityCurve:
    def test_flat(self):
        assert np.array_equal(equity_curve([0.0, 0.0, 0.0]), [1, 1, 1, 1])

    def test_hand(self):
        assert np.allclose(equity_curve([0.1, -0.1]), [1.0, 1.1, 0.99])

    def test_single(self):
        assert np.allclose(equity_curve([0.07]), [1.0, 1.07])

    def test_bankruptcy_rejected(self):
        with pytest.raises(DataError):
            equity_curve([0.1, -1.0])


class TestPerfectForesight:
    def test_equity_matches_topk_compounding(self):
        panel = md.gen_synthetic_panel(1, 12, 150, 0.5)
        cfg = tiny_config(perfect_foresight=True)
        res = run_backtest(panel, cfg)

        fp = md.build_features(panel)
        date_idx = {d: i for i, d in enumerate(fp.dates)}
        expected = []
        for d in res.dates:
            t = date_idx[d]
            valid = [j for j in range(12)
                     if t - cfg.window + 1 >= 0 and fp.valid[t - cfg.window + 1:t + 1, j].all()]
            rets = sorted((fp.labels[t, j] for j in valid), reverse=True)
            expected.append(np.mean(rets[:cfg.top_k]) if rets else 0.0)
        manual = o_equity(expected)
        assert np.allclose(res.strategy_equity, manual, rtol=1e-9)

    def test_weights_invariant(self):
        panel = md.gen_synthetic_panel(2, 8, 140, 0.3)
        res = run_backtest(panel, tiny_config(perfect_foresight=True))
        for w in res.weights:
            vals = np.array(list(w.values()))
            assert np.all(vals >= 0)
            total = vals.sum() if len(vals) else 0.0
            assert total == pytest.approx(1.0, abs=1e-12) or total == 0.0

    def test_benchmark_same_axis(self):
        panel = md.gen_synthetic_panel(3, 8, 140, 0.3)
        res = run_backtest(panel, tiny_config(perfect_foresight=True))
        assert len(res.strategy_equity) == len(res.benchmark_equity) == len(res.dates) + 1


class TestCosts:
    def test_monotonicity(self):
        panel = md.gen_synthetic_panel(4, 10, 140, 0.5)
        finals = []
        for cost in (0.0, 10.0, 50.0, 200.0):
            res = run_backtest(panel, tiny_config(perfect_foresight=True, cost_bps=cost))
            finals.append(res.strategy_equity[-1])
        assert all(a >= b for a, b in zip(finals, finals[1:]))

    def test_extreme_cost_collapses_equity(self):
        panel = md.gen_synthetic_panel(5, 10, 160, 0.0)
        free = run_backtest(panel, tiny_config(perfect_foresight=True, top_k=2))
        costly = run_backtest(panel, tiny_config(perfect_foresight=True, top_k=2,
                                                 cost_bps=10_000.0))
        assert costly.strategy_equity[-1] < 0.2 * free.strategy_equity[-1]


class TestDeterminismAndParallel:
    def test_sequential_runs_identical(self):
        panel = md.gen_synthetic_panel(6, 6, 140, 0.5)
        a = run_backtest(panel, tiny_config())
        b = run_backtest(panel, tiny_config())
        assert np.array_equal(a.strategy_equity, b.strategy_equity)
        assert a.weights == b.weights

    def test_parallel_matches_sequential(self):
        panel = md.gen_synthetic_panel(7, 6, 160, 0.5)
        seq = run_backtest(panel, tiny_config())
        par = run_backtest(panel, tiny_config(parallel=True))
        assert np.array_equal(seq.strategy_equity, par.strategy_equity)
        assert np.array_equal(seq.benchmark_equity, par.benchmark_equity)
        assert seq.weights == par.weights


class TestValidation:
    def test_insufficient_history(self):
        panel = md.gen_synthetic_panel(8, 5, 60, 0.2)
        with pytest.raises(ConfigError):
            run_backtest(panel, tiny_config(initial_train=dt.timedelta(days=5 * 365)))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            tiny_config(top_k=0)
        with pytest.raises(ConfigError):
            tiny_config(cost_bps=-1.0)


class TestWriters:
    def test_csv_outputs(self, tmp_path):
        panel = md.gen_synthetic_panel(9, 6, 140, 0.4)
        res = run_backtest(panel, tiny_config(perfect_foresight=True))
        eq_path, w_path = tmp_path / "equity.csv", tmp_path / "weights.csv"
        write_equity_csv(res, eq_path)
        write_weights_csv(res, w_path)
        eq_lines = eq_path.read_text().strip().splitlines()
        assert eq_lines[0] == "date,strategy,benchmark"
        assert len(eq_lines) == len(res.dates) + 1
        w_lines = w_path.read_text().strip().splitlines()
        assert w_lines[0] == "date,symbol,weight"
        assert len(w_lines) == 1 + sum(len(w) for w in res.weights)
