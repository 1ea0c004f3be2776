"""Matplotlib figure rendering for backtest and training reports.

Figures are written next to the delimited outputs (equity.csv, history.csv)
by the CLI report path.  Uses the Agg backend: no display required.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_equity(result, path) -> None:
    """Strategy vs benchmark equity with a drawdown panel underneath."""
    dates = [result.dates[0]] + list(result.dates)
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(9, 6), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]})
    ax1.plot(dates, result.strategy_equity, label="strategy", lw=1.4)
    ax1.plot(dates, result.benchmark_equity, label="benchmark", lw=1.2, alpha=0.8)
    ax1.set_ylabel("equity")
    ax1.legend(loc="upper left")
    ax1.grid(alpha=0.3)

    peak = np.maximum.accumulate(result.strategy_equity)
    dd = (result.strategy_equity - peak) / peak
    ax2.fill_between(dates, dd, 0.0, color="tab:red", alpha=0.4)
    ax2.set_ylabel("drawdown")
    ax2.grid(alpha=0.3)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_history(history, path) -> None:
    """Per-epoch training (and optional validation) loss."""
    epochs = np.arange(1, len(history.train_loss) + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, history.train_loss, marker="o", ms=3, label="train")
    if history.val_loss:
        ax.plot(epochs, history.val_loss, marker="s", ms=3, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
