"""Command-line entry point.

Subcommands: ``synth``, ``train``, ``backtest``, ``gradcheck``.  All tunables
live in a line-oriented ``key = value`` config file (``#`` comments); global
flags ``--config``, ``--out`` and ``--seed`` override it.  Every run writes
its fully resolved config next to its outputs, and re-running from that file
reproduces the outputs byte-identically.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure
(training divergence or gradient check above tolerance).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import re
import sys
from pathlib import Path

from . import backtest as bt
from . import marketdata as md
from . import model as mdl
from . import plots
from .errors import ConfigError, DataError, RnnfolioError, TrainingDivergedError
from .numerics import Rng

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

# key -> (parser, default)
SCHEMA = {
    "seed": (int, 0),
    "data": (str, ""),
    "n_symbols": (int, 50),
    "n_weeks": (int, 300),
    "signal_strength": (float, 0.5),
    "model": (str, "paper"),
    "window": (int, 12),
    "learning_rate": (float, 0.0001),
    "epochs": (int, 20),
    "batch_size": (int, 32),
    "clip_norm": (str, "5.0"),
    "top_k": (int, 30),
    "cost_bps": (float, 0.0),
    "initial_train": (str, "3y"),
    "step": (str, "13w"),
    "expanding": (str, "true"),
    "parallel": (str, "false"),
    "perfect_foresight": (str, "false"),
    "eps": (float, 1e-5),
}

_DURATION_RE = re.compile(r"^(\d+)([dwy])$")


def parse_duration(text: str) -> dt.timedelta:
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise ConfigError(f"bad duration {text!r}: use e.g. 90d, 13w, 3y")
    n, unit = int(m.group(1)), m.group(2)
    return dt.timedelta(days=n * {"d": 1, "w": 7, "y": 365}[unit])


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t not in ("true", "false"):
        raise ConfigError(f"bad boolean {text!r}: use true or false")
    return t == "true"


def load_config(path: str | None) -> dict:
    cfg = {k: d for k, (_, d) in SCHEMA.items()}
    if path is None:
        return cfg
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                cfg[key] = SCHEMA[key][0](val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return cfg


def write_config(cfg: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")


def _clip_norm(cfg) -> float | None:
    v = cfg["clip_norm"].strip().lower()
    if v == "none":
        return None
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"bad clip_norm {cfg['clip_norm']!r}") from None


def _train_config(cfg) -> mdl.TrainConfig:
    return mdl.TrainConfig(
        learning_rate=cfg["learning_rate"], epochs=cfg["epochs"],
        batch_size=cfg["batch_size"], clip_norm=_clip_norm(cfg), seed=cfg["seed"])


def _out_dir(cfg, args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.txt")
    return out


def _load_panel(cfg) -> md.BarPanel:
    if not cfg["data"]:
        raise ConfigError("no data path configured (key 'data')")
    if not Path(cfg["data"]).exists():
        raise DataError(f"data file not found: {cfg['data']}")
    return md.load_bars(cfg["data"])


def cmd_synth(cfg, args) -> int:
    out = _out_dir(cfg, args)
    panel = md.gen_synthetic_panel(cfg["seed"], cfg["n_symbols"], cfg["n_weeks"],
                                   cfg["signal_strength"])
    md.save_bars(panel, out / "bars.csv")
    print(f"wrote {out / 'bars.csv'}: {panel.n_symbols} symbols x "
          f"{panel.n_dates} weeks, seed {cfg['seed']}, "
          f"signal_strength {cfg['signal_strength']}")
    return 0


def cmd_train(cfg, args) -> int:
    out = _out_dir(cfg, args)
    panel = _load_panel(cfg)
    fp = md.build_features(panel)
    norm = md.fit_normalizer(fp, fp.dates[0], fp.dates[-1])
    nfp = md.apply_normalizer(norm, fp)
    ds = md.make_supervised_pooled(nfp, cfg["window"])
    if ds.X.shape[0] == 0:
        raise DataError("no training windows: panel too short for the window length")
    spec = mdl.parse_spec(cfg["model"], nfp.X.shape[2], cfg["window"])
    model = mdl.build_model(spec, Rng(cfg["seed"]))
    tcfg = _train_config(cfg)
    try:
        hist = mdl.train(model, ds, tcfg)
        failed = False
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        hist, failed = exc.history, True
    _write_history(hist, out / "history.csv")
    plots.plot_history(hist, out / "history.png")
    if failed:
        return EXIT_NUMERIC
    mdl.save_checkpoint(model, out / "checkpoint.txt", cfg["seed"])
    print(f"trained {spec.to_string()} on {ds.X.shape[0]} windows for "
          f"{tcfg.epochs} epochs; final loss {hist.train_loss[-1]:.6g}")
    print(f"wrote {out / 'checkpoint.txt'}, {out / 'history.csv'}, {out / 'history.png'}")
    return 0


def _write_history(hist: mdl.TrainHistory, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        header = ["epoch", "train_loss"]
        if hist.val_loss is not None:
            header += ["val_loss", "dir_acc"]
        w.writerow(header)
        for i, loss in enumerate(hist.train_loss):
            row = [i + 1, repr(loss)]
            if hist.val_loss is not None:
                row += [repr(hist.val_loss[i]), repr(hist.dir_acc[i])]
            w.writerow(row)


def cmd_backtest(cfg, args) -> int:
    out = _out_dir(cfg, args)
    panel = _load_panel(cfg)
    bcfg = bt.BacktestConfig(
        initial_train=parse_duration(cfg["initial_train"]),
        step=parse_duration(cfg["step"]),
        top_k=cfg["top_k"], cost_bps=cfg["cost_bps"],
        model_spec=cfg["model"], window=cfg["window"],
        train=_train_config(cfg), seed=cfg["seed"],
        expanding=parse_bool(cfg["expanding"]),
        perfect_foresight=parse_bool(cfg["perfect_foresight"]),
        parallel=parse_bool(cfg["parallel"]))
    result = bt.run_backtest(panel, bcfg)
    bt.write_equity_csv(result, out / "equity.csv")
    bt.write_weights_csv(result, out / "weights.csv")
    (out / "report.json").write_text(result.report.to_json() + "\n", encoding="utf-8")
    plots.plot_equity(result, out / "equity.png")
    print(f"{'indicator':<22}value")
    for name, value in vars(result.report).items():
        print(f"{name:<22}{value: .6f}")
    print(f"wrote {out / 'equity.csv'}, {out / 'weights.csv'}, "
          f"{out / 'report.json'}, {out / 'equity.png'}")
    return 0


GRADCHECK_SPECS = [
    "rnn(6)->dense(1,linear)",
    "gru(8)->dense(1,linear)",
    "lstm(8,relu)->dropout(0.2)->dense(8,relu)->dense(1,linear)",
    "lstm(8,relu)->dropout(0.2)->gru(6)->dense(8,relu)->dense(1,linear)",
]


def cmd_gradcheck(cfg, args) -> int:
    _out_dir(cfg, args)
    eps, tol = cfg["eps"], 1e-4
    ok = True
    for spec_text in GRADCHECK_SPECS:
        rng = Rng(cfg["seed"])
        spec = mdl.parse_spec(spec_text, 4, 5)
        model = mdl.build_model(spec, rng)
        window = rng.normal((5, 4))
        report = mdl.grad_check(model, window, target=0.1, eps=eps)
        for layer, err in report.items():
            status = "ok" if err < tol else "FAIL"
            print(f"{spec_text:<60} {layer:<10} {err:.3e} {status}")
            ok = ok and err < tol
    return 0 if ok else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rnnfolio",
        description="Recurrent-network stock-selection backtesting toolkit")
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("synth", cmd_synth), ("train", cmd_train),
                     ("backtest", cmd_backtest), ("gradcheck", cmd_gradcheck)):
        sp = sub.add_parser(name)
        sp.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RnnfolioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
