"""Layer-stack assembly, MSE loss, Adam, the training loop and gradient checking.

A model is an ordered stack described by a spec string such as

    ``lstm(256,relu)->dropout(0.2)->dense(32,relu)->dense(1,linear)``

Recurrent layers scan the window and emit a hidden sequence; the first dense
layer reads the final time step only, after which the stack operates on plain
vectors.  A ``relu`` argument on a recurrent layer is a post-layer activation
on the emitted hidden states; the cell's internal gate activations stay
sigmoid/tanh.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field

import numpy as np

from . import cells
from .errors import ConfigError, DimensionError, TrainingDivergedError
from .numerics import Rng

PRESETS = {
    "paper": "lstm(256,relu)->dropout(0.2)->dense(32,relu)->dense(1,linear)",
    "lstm-gru": "lstm(256,relu)->dropout(0.2)->gru(128)->dense(32,relu)->dense(1,linear)",
}


@dataclass
class LayerSpec:
    kind: str                      # rnn | lstm | gru | dropout | dense
    size: int = 0                  # hidden/output units (unused for dropout)
    activation: str = "linear"     # post-activation (recurrent) or dense activation
    rate: float = 0.0              # dropout rate


@dataclass
class ModelSpec:
    layers: list[LayerSpec]
    features: int
    window: int

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("model spec has no layers")
        if self.features < 1 or self.window < 1:
            raise ConfigError("features and window must be >= 1")
        if self.layers[0].kind not in ("rnn", "lstm", "gru"):
            raise ConfigError(
                f"first layer must be recurrent, got {self.layers[0].kind!r}")
        last = self.layers[-1]
        if last.kind != "dense" or last.size != 1 or last.activation != "linear":
            raise ConfigError("final layer must be dense(1,linear)")
        seen_dense = False
        for i, l in enumerate(self.layers):
            if l.kind == "dense":
                seen_dense = True
            elif l.kind in ("rnn", "lstm", "gru") and seen_dense:
                raise ConfigError(
                    f"layer {i}: recurrent layer after a dense layer is not supported")

    def to_string(self) -> str:
        parts = []
        for l in self.layers:
            if l.kind == "dropout":
                parts.append(f"dropout({l.rate:g})")
            elif l.kind == "dense":
                parts.append(f"dense({l.size},{l.activation})")
            elif l.activation == "relu":
                parts.append(f"{l.kind}({l.size},relu)")
            else:
                parts.append(f"{l.kind}({l.size})")
        return "->".join(parts)


_LAYER_RE = re.compile(r"^(rnn|lstm|gru|dropout|dense)\(([^)]*)\)$")


def parse_spec(text: str, features: int, window: int) -> ModelSpec:
    """Parse a layer-stack string (or preset name) into a ModelSpec."""
    text = PRESETS.get(text.strip(), text.strip())
    layers = []
    for tok in text.split("->"):
        m = _LAYER_RE.match(tok.strip())
        if not m:
            raise ConfigError(f"unparseable layer spec {tok.strip()!r}")
        kind, args = m.group(1), [a.strip() for a in m.group(2).split(",") if a.strip()]
        if kind == "dropout":
            if len(args) != 1:
                raise ConfigError(f"dropout takes one rate argument: {tok!r}")
            layers.append(LayerSpec("dropout", rate=float(args[0])))
        elif kind == "dense":
            if len(args) != 2 or args[1] not in ("relu", "linear"):
                raise ConfigError(f"dense takes (units, relu|linear): {tok!r}")
            layers.append(LayerSpec("dense", size=int(args[0]), activation=args[1]))
        else:
            act = "linear"
            if len(args) == 2:
                if args[1] != "relu":
                    raise ConfigError(f"recurrent post-activation must be relu: {tok!r}")
                act = "relu"
            elif len(args) != 1:
                raise ConfigError(f"{kind} takes (units[, relu]): {tok!r}")
            layers.append(LayerSpec(kind, size=int(args[0]), activation=act))
    return ModelSpec(layers, features, window)


# ---------------------------------------------------------------------------
# Layer objects


def _param_arrays(p):
    """(field_name, array) pairs of the learnable arrays in a params dataclass."""
    return [(f.name, getattr(p, f.name)) for f in dataclasses.fields(p)
            if isinstance(getattr(p, f.name), np.ndarray)]


def _zeros_like_params(p):
    kw = {f.name: (np.zeros_like(v) if isinstance(v := getattr(p, f.name), np.ndarray) else v)
          for f in dataclasses.fields(p)}
    return type(p)(**kw)


def _iadd_params(acc, g):
    for name, arr in _param_arrays(g):
        getattr(acc, name).__iadd__(arr)
    return acc


class _RecurrentLayer:
    def __init__(self, kind: str, hidden: int, inputs: int, post_activation: str, rng: Rng):
        self.kind = kind
        self.out_size = hidden
        self.post_activation = post_activation
        if kind == "gru":
            self.params = cells.init_gru_params(hidden, inputs, rng)
        elif kind == "lstm":
            self.params = cells.init_lstm_params(hidden, inputs, rng)
        else:
            self.params = cells.init_rnn_params(hidden, inputs, rng)

    def forward(self, x_seq, mode, rng):
        B, L, _ = x_seq.shape
        h = np.zeros((B, self.out_size))
        c = np.zeros((B, self.out_size))
        step_caches, raw = [], []
        out = np.empty((B, L, self.out_size))
        for t in range(L):
            if self.kind == "gru":
                h, sc = cells.gru_forward(x_seq[:, t, :], h, self.params)
            elif self.kind == "lstm":
                h, c, sc = cells.lstm_forward(x_seq[:, t, :], h, c, self.params)
            else:
                h, sc = cells.rnn_forward(x_seq[:, t, :], h, self.params)
            step_caches.append(sc)
            raw.append(h)
            out[:, t, :] = np.maximum(h, 0.0) if self.post_activation == "relu" else h
        return out, {"steps": step_caches, "raw": raw, "in_shape": x_seq.shape}

    def backward(self, d_out, cache):
        B, L, _ = cache["in_shape"]
        grads = _zeros_like_params(self.params)
        dh_carry = np.zeros((B, self.out_size))
        dc_carry = np.zeros((B, self.out_size))
        dx_seq = np.empty(cache["in_shape"])
        for t in reversed(range(L)):
            d_emit = d_out[:, t, :]
            if self.post_activation == "relu":
                d_emit = d_emit * (cache["raw"][t] > 0.0)
            dh = dh_carry + d_emit
            if self.kind == "gru":
                g, dh_carry, dx = cells.gru_backward(dh, cache["steps"][t], self.params)
            elif self.kind == "lstm":
                g, dh_carry, dc_carry, dx = cells.lstm_backward(
                    dh, dc_carry, cache["steps"][t], self.params)
            else:
                g, dh_carry, dx = cells.rnn_backward(dh, cache["steps"][t], self.params)
            _iadd_params(grads, g)
            dx_seq[:, t, :] = dx
        return dx_seq, grads


class _DropoutLayer:
    params = None

    def __init__(self, rate: float):
        self.kind = "dropout"
        self.rate = rate

    def forward(self, x, mode, rng):
        y, mask = cells.dropout(x, self.rate, mode, rng)
        return y, {"mask": mask}

    def backward(self, dy, cache):
        return dy * cache["mask"], None


class _DenseLayer:
    def __init__(self, out: int, inputs: int, activation: str, rng: Rng):
        self.kind = "dense"
        self.out_size = out
        self.params = cells.init_dense_params(out, inputs, rng, activation)

    def forward(self, x, mode, rng):
        return cells.dense_forward(x, self.params)

    def backward(self, dy, cache):
        grads, dx = cells.dense_backward(dy, cache, self.params)
        return dx, grads


class Model:
    """An initialized layer stack with batched forward/backward over windows."""

    def __init__(self, spec: ModelSpec, layers: list):
        self.spec = spec
        self.layers = layers

    def forward_batch(self, X: np.ndarray, mode: str, rng: Rng | None = None):
        X = np.asarray(X, float)
        if X.ndim != 3 or X.shape[1:] != (self.spec.window, self.spec.features):
            raise DimensionError(
                f"window batch shape {X.shape} does not match "
                f"(*, {self.spec.window}, {self.spec.features})")
        a, caches = X, []
        seq_domain = True
        for layer in self.layers:
            collapsed_from = None
            if layer.kind == "dense" and seq_domain:
                collapsed_from = a.shape
                a = a[:, -1, :]
                seq_domain = False
            a, cache = layer.forward(a, mode, rng)
            caches.append((cache, collapsed_from))
        return a[:, 0], caches

    def backward_batch(self, d_pred: np.ndarray, caches):
        da = np.asarray(d_pred, float)[:, None]
        grads = [None] * len(self.layers)
        for i in reversed(range(len(self.layers))):
            cache, collapsed_from = caches[i]
            da, g = self.layers[i].backward(da, cache)
            grads[i] = g
            if collapsed_from is not None:
                dseq = np.zeros(collapsed_from)
                dseq[:, -1, :] = da
                da = dseq
        return grads

    def param_list(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            if layer.params is not None:
                out.extend(arr for _, arr in _param_arrays(layer.params))
        return out

    def set_param_list(self, arrays: list[np.ndarray]) -> None:
        it = iter(arrays)
        for layer in self.layers:
            if layer.params is not None:
                for name, old in _param_arrays(layer.params):
                    new = next(it)
                    if new.shape != old.shape:
                        raise DimensionError(
                            f"checkpoint shape {new.shape} vs model {old.shape}")
                    setattr(layer.params, name, np.array(new, float))

    def n_params(self) -> int:
        return sum(a.size for a in self.param_list())


def build_model(spec: ModelSpec, rng: Rng) -> Model:
    layers = []
    width = spec.features
    for i, l in enumerate(spec.layers):
        if l.kind in ("rnn", "lstm", "gru"):
            layers.append(_RecurrentLayer(l.kind, l.size, width, l.activation, rng))
            width = l.size
        elif l.kind == "dropout":
            layers.append(_DropoutLayer(l.rate))
        else:
            if width < 1:
                raise ConfigError(f"layer {i}: dense has no input width")
            layers.append(_DenseLayer(l.size, width, l.activation, rng))
            width = l.size
    return Model(spec, layers)


def forward_sequence(model: Model, window: np.ndarray, mode: str = "infer",
                     rng: Rng | None = None):
    """Single-window forward; returns (scalar prediction, caches)."""
    window = np.asarray(window, float)
    if window.ndim != 2:
        raise DimensionError(f"window must be 2-D (L, F), got shape {window.shape}")
    preds, caches = model.forward_batch(window[None, :, :], mode, rng)
    return float(preds[0]), caches


# ---------------------------------------------------------------------------
# Loss, optimizer, training


def mse_loss(pred: np.ndarray, target: np.ndarray):
    pred = np.asarray(pred, float)
    target = np.asarray(target, float)
    if pred.shape != target.shape or pred.size == 0:
        raise DimensionError(f"mse_loss: shapes {pred.shape} vs {target.shape}")
    diff = pred - target
    n = pred.size
    return float(np.mean(diff * diff)), 2.0 * diff / n


@dataclass
class TrainConfig:
    learning_rate: float = 0.0001
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be > 0 when set")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


class AdamState:
    def __init__(self, params: list[np.ndarray]):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update, applied in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("adam_step: params/grads/state length mismatch")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionError(f"adam_step: shape {p.shape} vs grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
    return params, state


def clip_gradients(grads: list[np.ndarray], clip_norm: float | None) -> float:
    """Global-norm clipping in place; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if clip_norm is not None and total > clip_norm and total > 0:
        scale = clip_norm / total
        for g in grads:
            g *= scale
    return total


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] | None = None
    dir_acc: list[float] | None = None


def _flat_grads(model: Model, grads_by_layer) -> list[np.ndarray]:
    out = []
    for layer, g in zip(model.layers, grads_by_layer):
        if g is not None:
            out.extend(arr for _, arr in _param_arrays(g))
    return out


def train(model: Model, dataset, cfg: TrainConfig, val_data=None) -> TrainHistory:
    """Mini-batch BPTT training; deterministic given (seed, config, data).

    ``dataset`` needs ``X`` of shape (N, L, F) and ``y`` of shape (N,).
    """
    X = np.asarray(dataset.X, float)
    y = np.asarray(dataset.y, float)
    if X.shape[0] == 0:
        raise DimensionError("train: empty dataset")
    rng = Rng(cfg.seed)
    params = model.param_list()
    state = AdamState(params)
    hist = TrainHistory()
    if val_data is not None:
        hist.val_loss, hist.dir_acc = [], []
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            preds, caches = model.forward_batch(X[idx], "train", rng)
            loss, dpred = mse_loss(preds, y[idx])
            if not np.isfinite(loss):
                err = TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size}")
                err.history = hist  # completed epochs survive the failure
                raise err
            grads = _flat_grads(model, model.backward_batch(dpred, caches))
            clip_gradients(grads, cfg.clip_norm)
            adam_step(params, grads, state, cfg)
            total += loss * len(idx)
            seen += len(idx)
        hist.train_loss.append(total / seen)
        if val_data is not None:
            vp, _ = model.forward_batch(np.asarray(val_data.X, float), "infer")
            vl, _ = mse_loss(vp, np.asarray(val_data.y, float))
            hist.val_loss.append(vl)
            vy = np.asarray(val_data.y, float)
            hist.dir_acc.append(float(np.mean(np.sign(vp) == np.sign(vy))))
    return hist


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(model: Model, window: np.ndarray, target: float = 0.0,
               eps: float = 1e-5) -> dict[str, float]:
    """Full-model central-difference check; returns per-layer max relative error.

    Dropout runs in infer mode so the loss surface is deterministic.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ConfigError(f"grad_check eps must be in [1e-7, 1e-3], got {eps}")
    window = np.asarray(window, float)
    tvec = np.array([float(target)])

    def loss_fn():
        pred, _ = forward_sequence(model, window, "infer")
        l, _ = mse_loss(np.array([pred]), tvec)
        return l

    pred, caches = forward_sequence(model, window, "infer")
    _, dpred = mse_loss(np.array([pred]), tvec)
    analytic = model.backward_batch(dpred, caches)

    report = {}
    for i, (layer, g) in enumerate(zip(model.layers, analytic)):
        if g is None:
            continue
        worst = 0.0
        for name, arr in _param_arrays(layer.params):
            ga = getattr(g, name)
            flat = arr.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                lp = loss_fn()
                flat[j] = orig - eps
                lm = loss_fn()
                flat[j] = orig
                num = (lp - lm) / (2.0 * eps)
                ana = ga.ravel()[j]
                rel = abs(ana - num) / max(abs(ana) + abs(num), 1e-6)
                worst = max(worst, rel)
        report[f"{i}:{layer.kind}"] = worst
    return report


# ---------------------------------------------------------------------------
# Checkpoint serialization (textual, bitwise round-trip via %.17g)


def save_checkpoint(model: Model, path, seed: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rnnfolio-checkpoint v1\n")
        fh.write(f"spec {model.spec.to_string()} F={model.spec.features} "
                 f"L={model.spec.window} seed={seed}\n")
        for i, layer in enumerate(model.layers):
            if layer.params is None:
                continue
            fh.write(f"layer {i} {layer.kind}\n")
            for name, arr in _param_arrays(layer.params):
                shape = arr.shape if arr.ndim == 2 else (arr.shape[0], 0)
                fh.write(f"param {name} {shape[0]} {shape[1]}\n")
                for row in np.atleast_2d(arr):
                    fh.write(" ".join("%.17g" % v for v in row) + "\n")


def load_checkpoint(path) -> tuple[Model, int]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "rnnfolio-checkpoint v1":
        raise ConfigError(f"{path}: not a checkpoint file")
    m = re.match(r"^spec (\S+) F=(\d+) L=(\d+) seed=(\d+)$", lines[1])
    if not m:
        raise ConfigError(f"{path}: bad checkpoint header")
    spec = parse_spec(m.group(1), int(m.group(2)), int(m.group(3)))
    seed = int(m.group(4))
    model = build_model(spec, Rng(0))
    arrays = []
    k = 2
    while k < len(lines):
        if lines[k].startswith("layer "):
            k += 1
            continue
        pm = re.match(r"^param (\S+) (\d+) (\d+)$", lines[k])
        if not pm:
            raise ConfigError(f"{path}: malformed line {k + 1}")
        rows, pcols = int(pm.group(2)), int(pm.group(3))
        nrows = rows if pcols else 1
        vals = [np.array(lines[k + 1 + r].split(), dtype=float)
                for r in range(nrows)]
        arr = np.vstack(vals)
        arrays.append(arr[0] if pcols == 0 else arr)
        k += 1 + nrows
    model.set_param_list(arrays)
    return model, seed
