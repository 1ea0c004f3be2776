"""From-scratch recurrent networks (RNN/LSTM/GRU with exact BPTT) plus a
rolling-window stock-selection backtesting engine."""

from .backtest import BacktestConfig, BacktestResult, run_backtest, select_portfolio
from .marketdata import (BarPanel, gen_synthetic_panel, load_bars, rolling_splits,
                         save_bars)
from .metrics import IndicatorReport, indicator_report
from .model import (Model, ModelSpec, TrainConfig, build_model, forward_sequence,
                    grad_check, parse_spec, train)
from .numerics import Rng

__all__ = [
    "BacktestConfig", "BacktestResult", "BarPanel", "IndicatorReport", "Model",
    "ModelSpec", "Rng", "TrainConfig", "build_model", "forward_sequence",
    "gen_synthetic_panel", "grad_check", "indicator_report", "load_bars",
    "parse_spec", "rolling_splits", "run_backtest", "save_bars",
    "select_portfolio", "train",
]

__version__ = "0.1.0"
