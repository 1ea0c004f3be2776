"""Regression-error metrics and the portfolio indicator system.

Conventions: sample (n-1) standard deviation for Sharpe and volatility,
52 periods per year for weekly data, risk-free rate defaults to 0.
Zero-variance cases raise ``UndefinedMetricError`` instead of returning
infinities so reports stay serializable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError, DimensionError, MetricError, UndefinedMetricError

WEEKS_PER_YEAR = 52


def _pair(actual, pred):
    a = np.asarray(actual, float)
    p = np.asarray(pred, float)
    if a.shape != p.shape or a.ndim != 1 or a.size == 0:
        raise DimensionError(f"metric input shapes {a.shape} vs {p.shape}")
    return a, p


def mape(actual, pred) -> float:
    """Mean absolute percentage error, as a percentage."""
    a, p = _pair(actual, pred)
    zero = np.nonzero(a == 0.0)[0]
    if zero.size:
        raise MetricError(f"mape undefined: actual[{zero[0]}] is zero")
    return float(100.0 * np.mean(np.abs(a - p) / np.abs(a)))


def mae(actual, pred) -> float:
    a, p = _pair(actual, pred)
    return float(np.mean(np.abs(a - p)))


def rmse(actual, pred) -> float:
    a, p = _pair(actual, pred)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def directional_accuracy(pred, actual) -> float:
    """Fraction of entries where the signs agree; sign(0) matches only 0."""
    a, p = _pair(actual, pred)
    return float(np.mean(np.sign(p) == np.sign(a)))


def max_drawdown(equity) -> float:
    """Largest peak-to-trough fractional decline of an equity curve."""
    e = np.asarray(equity, float)
    if e.size == 0 or np.any(e <= 0):
        raise DataError("max_drawdown needs a nonempty, strictly positive series")
    peak = np.maximum.accumulate(e)
    return float(np.max((peak - e) / peak))


def sharpe(returns, rf_per_period: float = 0.0,
           periods_per_year: int = WEEKS_PER_YEAR) -> float:
    r = np.asarray(returns, float)
    if r.size < 2:
        raise DataError("sharpe needs at least 2 returns")
    excess = r - rf_per_period
    sd = float(np.std(excess, ddof=1))
    if sd == 0.0:
        raise UndefinedMetricError("sharpe undefined: zero variance of excess returns")
    return float(np.mean(excess) / sd * np.sqrt(periods_per_year))


def alpha_beta(strategy_returns, benchmark_returns, rf_per_period: float = 0.0,
               periods_per_year: int = WEEKS_PER_YEAR) -> tuple[float, float]:
    """OLS of strategy excess on benchmark excess; alpha is annualized."""
    s, b = _pair(strategy_returns, benchmark_returns)
    if s.size < 2:
        raise DataError("alpha_beta needs at least 2 returns")
    se = s - rf_per_period
    be = b - rf_per_period
    var_b = float(np.var(be))
    if var_b == 0.0:
        raise UndefinedMetricError("alpha_beta undefined: zero benchmark variance")
    beta = float(np.cov(se, be, bias=True)[0, 1] / var_b)
    alpha = float((np.mean(se) - beta * np.mean(be)) * periods_per_year)
    return alpha, beta


def annualized_return(equity, periods_per_year: int = WEEKS_PER_YEAR) -> float:
    e = np.asarray(equity, float)
    if e.size < 2 or np.any(e <= 0):
        raise DataError("annualized_return needs >= 2 positive equity points")
    n = e.size - 1
    return float((e[-1] / e[0]) ** (periods_per_year / n) - 1.0)


def volatility(returns, periods_per_year: int = WEEKS_PER_YEAR) -> float:
    r = np.asarray(returns, float)
    if r.size < 2:
        raise DataError("volatility needs at least 2 returns")
    return float(np.std(r, ddof=1) * np.sqrt(periods_per_year))


@dataclass
class IndicatorReport:
    strategy_return: float
    annualized_return: float
    benchmark_return: float
    excess_return: float
    alpha: float
    beta: float
    sharpe: float
    max_drawdown: float
    strategy_volatility: float
    benchmark_volatility: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def indicator_report(strategy_equity, benchmark_equity,
                     rf_per_period: float = 0.0,
                     periods_per_year: int = WEEKS_PER_YEAR) -> IndicatorReport:
    """Full portfolio indicator system from aligned equity curves (e_0 = 1)."""
    se = np.asarray(strategy_equity, float)
    be = np.asarray(benchmark_equity, float)
    if se.shape != be.shape or se.size < 3:
        raise DataError("indicator_report needs aligned equity curves with >= 3 points")
    sr = se[1:] / se[:-1] - 1.0
    br = be[1:] / be[:-1] - 1.0
    alpha, beta = alpha_beta(sr, br, rf_per_period, periods_per_year)
    return IndicatorReport(
        strategy_return=float(se[-1] / se[0] - 1.0),
        annualized_return=annualized_return(se, periods_per_year),
        benchmark_return=float(be[-1] / be[0] - 1.0),
        excess_return=float(se[-1] / se[0] - be[-1] / be[0]),
        alpha=alpha,
        beta=beta,
        sharpe=sharpe(sr, rf_per_period, periods_per_year),
        max_drawdown=max_drawdown(se),
        strategy_volatility=volatility(sr, periods_per_year),
        benchmark_volatility=volatility(br, periods_per_year),
    )
