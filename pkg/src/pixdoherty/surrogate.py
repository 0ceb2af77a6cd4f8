"""Residual CNN surrogate: layout in, packed two-port S-parameters out.

Pure numpy, float64, channels-last.  Convolutions use stride 1 and "same"
zero padding (the extra row/column of an even kernel goes after), batch
normalization and LeakyReLU(0.01).  A conv layer may add the activation of
an earlier layer (or the single-channel input, broadcast over channels) to
its input.  The dense head uses inverted dropout and ends in tanh.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DivergedLoss, LengthMismatch, PixDohertyError, ShapeMismatch

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
LEAK = 0.01
BN_EPS = 1e-5


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    filters: int = 32
    residual: str | None = None  # "in" or "C<k>" for an earlier layer


@dataclass(frozen=True)
class FcSpec:
    neurons: int
    dropout: float = 0.25
    activation: str = "leaky_relu"


@dataclass(frozen=True)
class SurrogateArchitecture:
    input_rows: int
    input_cols: int
    conv_layers: tuple[ConvSpec, ...]
    fc_layers: tuple[FcSpec, ...]
    output_dim: int = 78
    bn_momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(
            c if isinstance(c, ConvSpec) else ConvSpec(**c) for c in self.conv_layers))
        object.__setattr__(self, "fc_layers", tuple(
            f if isinstance(f, FcSpec) else FcSpec(**f) for f in self.fc_layers))
        if not self.conv_layers:
            raise ShapeMismatch("at least one conv layer is required")
        channels = {"in": 1}
        prev = 1
        for k, c in enumerate(self.conv_layers, 1):
            if c.residual is not None:
                src = c.residual
                if src != "in" and (not src.startswith("C") or not src[1:].isdigit() or int(src[1:]) >= k - 1):
                    raise ShapeMismatch(f"C{k}: residual source {src!r} must be the input or a layer before C{k - 1}")
                if channels[src] not in (1, prev):
                    raise ShapeMismatch(f"C{k}: cannot add {channels[src]} channels to {prev}")
            channels[f"C{k}"] = c.filters
            prev = c.filters
        for f in self.fc_layers:
            if not 0.0 <= f.dropout < 1.0:
                raise ValueError("dropout must lie in [0, 1)")
            if f.activation != "leaky_relu":
                raise ValueError("hidden dense layers use leaky_relu")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateArchitecture":
        return cls(d["input_rows"], d["input_cols"], tuple(ConvSpec(**c) for c in d["conv_layers"]),
                   tuple(FcSpec(**f) for f in d["fc_layers"]), d["output_dim"], d.get("bn_momentum", 0.9))


def full_architecture(rows=15, cols=15, output_dim=78) -> SurrogateArchitecture:
    """Twelve 32-filter conv layers with skip additions, five 2048-unit dense layers."""
    kernels = (12, 12, 10, 10, 8, 8, 6, 6, 4, 4, 3, 3)
    residual = {3: "in", 5: "C2", 7: "C4", 9: "C6", 11: "C8"}
    convs = tuple(ConvSpec(k, 32, residual.get(i)) for i, k in enumerate(kernels, 1))
    fcs = tuple(FcSpec(2048, 0.25) for _ in range(5))
    return SurrogateArchitecture(rows, cols, convs, fcs, output_dim)


def desk_architecture(rows=8, cols=8, output_dim=78, filters=8, hidden=256, dropout=0.1) -> SurrogateArchitecture:
    """Reduced network for desk-scale runs: 4 conv + 2 hidden dense + output."""
    convs = (ConvSpec(5, filters), ConvSpec(5, filters), ConvSpec(3, filters, "in"), ConvSpec(3, filters))
    return SurrogateArchitecture(rows, cols, convs, (FcSpec(hidden, dropout), FcSpec(hidden, dropout)), output_dim)


def tiny_architecture(rows=8, cols=8, output_dim=12, filters=8, hidden=128, dropout=0.0) -> SurrogateArchitecture:
    """Two conv + one hidden dense + output; used for gradient checks."""
    convs = (ConvSpec(3, filters), ConvSpec(3, filters, "in"))
    return SurrogateArchitecture(rows, cols, convs, (FcSpec(hidden, dropout),), output_dim)


# --- layer primitives --------------------------------------------------------
def _pads(k):
    lo = (k - 1) // 2
    return lo, k - 1 - lo


def conv_forward(x, w):
    """``x`` (N, H, W, C), ``w`` (k, k, C, F) -> (N, H, W, F), im2col cache."""
    n, h, wd, c = x.shape
    k = w.shape[0]
    lo, hi = _pads(k)
    xp = np.pad(x, ((0, 0), (lo, hi), (lo, hi), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (N, H, W, C, k, k)
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * h * wd, k * k * c)
    out = cols @ w.reshape(k * k * c, -1)
    return out.reshape(n, h, wd, -1), cols


def conv_backward(dout, cols, w, x_shape):
    n, h, wd, c = x_shape
    k = w.shape[0]
    f = w.shape[3]
    d2 = dout.reshape(-1, f)
    dw = (cols.T @ d2).reshape(w.shape)
    dcols = (d2 @ w.reshape(k * k * c, f).T).reshape(n, h, wd, k, k, c)
    lo, hi = _pads(k)
    dxp = np.zeros((n, h + k - 1, wd + k - 1, c))
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + h, j : j + wd, :] += dcols[:, :, :, i, j, :]
    return dxp[:, lo : lo + h, lo : lo + wd, :], dw


def leaky(z):
    return np.where(z > 0, z, LEAK * z)


def leaky_grad(z):
    return np.where(z > 0, 1.0, LEAK)


def dropout(h, rate, rng):
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
    return h * mask, mask


def loss_mae(pred, target) -> float:
    """Mean absolute error over every element."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise LengthMismatch(f"prediction shape {pred.shape} vs target shape {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def _as_batch(x, arch):
    from .pixelgrid import PixelLayout

    if isinstance(x, PixelLayout):
        x = x.cells[None]
    elif isinstance(x, (list, tuple)) and x and isinstance(x[0], PixelLayout):
        x = np.stack([lay.cells for lay in x])
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != (arch.input_rows, arch.input_cols):
        raise ShapeMismatch(f"input grid {x.shape[1:]} does not match architecture "
                            f"{(arch.input_rows, arch.input_cols)}")
    return x[..., None]


class SurrogateModel:
    """Parameter container plus forward/backward passes.

    Parameters live in ``params`` (trainable) and ``buffers`` (batch-norm
    running statistics), both name -> float64 array.
    """

    def __init__(self, arch: SurrogateArchitecture, params=None, buffers=None, seed=0):
        self.arch = arch
        self.training = False
        if params is None:
            params, buffers = self._init(np.random.default_rng(seed))
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.buffers = {k: np.asarray(v, dtype=np.float64) for k, v in (buffers or {}).items()}
        self._check_shapes()

    # -- construction -------------------------------------------------------
    def _shapes(self):
        a = self.arch
        shapes, bufs = {}, {}
        c_in = 1
        for k, c in enumerate(a.conv_layers, 1):
            shapes[f"C{k}.W"] = (c.kernel, c.kernel, c_in, c.filters)
            shapes[f"C{k}.gamma"] = (c.filters,)
            shapes[f"C{k}.beta"] = (c.filters,)
            bufs[f"C{k}.running_mean"] = (c.filters,)
            bufs[f"C{k}.running_var"] = (c.filters,)
            c_in = c.filters
        d_in = a.input_rows * a.input_cols * c_in
        for k, f in enumerate(a.fc_layers, 1):
            shapes[f"F{k}.W"] = (d_in, f.neurons)
            shapes[f"F{k}.b"] = (f.neurons,)
            d_in = f.neurons
        shapes["out.W"] = (d_in, a.output_dim)
        shapes["out.b"] = (a.output_dim,)
        return shapes, bufs

    def _init(self, rng):
        shapes, bufs = self._shapes()
        params = {}
        gain = math.sqrt(2.0 / (1.0 + LEAK**2))
        for name, shp in shapes.items():
            if name.endswith(".W"):
                fan_in = int(np.prod(shp[:-1]))
                if name == "out.W":
                    std = math.sqrt(1.0 / fan_in)
                else:
                    std = gain / math.sqrt(fan_in)
                params[name] = rng.normal(0.0, std, shp)
            elif name.endswith(".gamma"):
                params[name] = np.ones(shp)
            else:
                params[name] = np.zeros(shp)
        buffers = {n: (np.ones(s) if n.endswith("var") else np.zeros(s)) for n, s in bufs.items()}
        return params, buffers

    def _check_shapes(self):
        shapes, bufs = self._shapes()
        for name, shp in shapes.items():
            if name not in self.params or self.params[name].shape != shp:
                raise ShapeMismatch(f"parameter {name} missing or not of shape {shp}")
        for name, shp in bufs.items():
            if name not in self.buffers:
                self.buffers[name] = np.ones(shp) if name.endswith("var") else np.zeros(shp)
            elif self.buffers[name].shape != shp:
                raise ShapeMismatch(f"buffer {name} not of shape {shp}")
        if extra := set(self.params) - set(shapes):
            raise ShapeMismatch(f"unexpected parameters {sorted(extra)}")

    def copy(self) -> "SurrogateModel":
        return SurrogateModel(self.arch, {k: v.copy() for k, v in self.params.items()},
                              {k: v.copy() for k, v in self.buffers.items()})

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # -- forward / backward ---------------------------------------------------
    def _forward(self, x, train, rng, update_stats=False):
        a = self.arch
        p = self.params
        acts = {"in": x}
        cache = []
        prev = x
        for k, c in enumerate(a.conv_layers, 1):
            inp = prev if c.residual is None else prev + acts[c.residual]
            z, cols = conv_forward(inp, p[f"C{k}.W"])
            if train:
                mu = z.mean(axis=(0, 1, 2))
                var = z.var(axis=(0, 1, 2))
                if update_stats:
                    m = a.bn_momentum
                    self.buffers[f"C{k}.running_mean"] = m * self.buffers[f"C{k}.running_mean"] + (1 - m) * mu
                    self.buffers[f"C{k}.running_var"] = m * self.buffers[f"C{k}.running_var"] + (1 - m) * var
            else:
                mu = self.buffers[f"C{k}.running_mean"]
                var = self.buffers[f"C{k}.running_var"]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mu) * inv
            u = p[f"C{k}.gamma"] * xhat + p[f"C{k}.beta"]
            out = leaky(u)
            cache.append((inp.shape, cols, xhat, inv, u))
            acts[f"C{k}"] = out
            prev = out
        n = x.shape[0]
        h = prev.reshape(n, -1)
        dense = []
        for k, f in enumerate(a.fc_layers, 1):
            z = h @ p[f"F{k}.W"] + p[f"F{k}.b"]
            hn = leaky(z)
            mask = None
            if train and f.dropout > 0:
                hn, mask = dropout(hn, f.dropout, rng)
            dense.append((h, z, mask))
            h = hn
        y = np.tanh(h @ p["out.W"] + p["out.b"])
        return y, (cache, dense, h, acts)

    def forward(self, x, mode="infer", rng=None, batch_size=1024) -> np.ndarray:
        """Predictions for a layout, a list of layouts, or an (N, rows, cols) array.

        Returns shape (output_dim,) for a single layout, else (N, output_dim).
        """
        single = not isinstance(x, (list, tuple)) and np.ndim(getattr(x, "cells", x)) == 2
        xb = _as_batch(x, self.arch)
        train = mode == "train"
        if train and rng is None:
            rng = np.random.default_rng()
        if train:
            y = self._forward(xb, True, rng)[0]
        else:
            y = np.concatenate([self._forward(xb[i : i + batch_size], False, None)[0]
                                for i in range(0, xb.shape[0], batch_size)])
        return y[0] if single else y

    def predict(self, x, batch_size=1024) -> np.ndarray:
        return self.forward(x, "infer", batch_size=batch_size)

    def loss_and_grads(self, x, target, rng=None, update_stats=False):
        """Mean MAE over the batch (train mode) and its exact gradients.

        The MAE subgradient at a zero residual is 0.  ``rng`` drives the
        dropout masks; pass a fresh generator with a fixed seed to make the
        loss a deterministic function of the parameters.
        """
        xb = _as_batch(x, self.arch)
        target = np.asarray(target, dtype=float)
        if target.shape != (xb.shape[0], self.arch.output_dim):
            raise LengthMismatch(f"targets of shape {target.shape}, expected {(xb.shape[0], self.arch.output_dim)}")
        rng = np.random.default_rng(0) if rng is None else rng
        y, (cache, dense, h, acts) = self._forward(xb, True, rng, update_stats)
        p = self.params
        g = {}
        resid = y - target
        loss = float(np.mean(np.abs(resid)))
        dy = np.sign(resid) / resid.size
        dz = dy * (1.0 - y * y)
        g["out.W"] = h.T @ dz
        g["out.b"] = dz.sum(axis=0)
        dh = dz @ p["out.W"].T
        for k in range(len(self.arch.fc_layers), 0, -1):
            h_in, z, mask = dense[k - 1]
            if mask is not None:
                dh = dh * mask
            dzk = dh * leaky_grad(z)
            g[f"F{k}.W"] = h_in.T @ dzk
            g[f"F{k}.b"] = dzk.sum(axis=0)
            dh = dzk @ p[f"F{k}.W"].T
        last = self.arch.conv_layers
        dact = {name: None for name in acts}
        dact[f"C{len(last)}"] = dh.reshape(acts[f"C{len(last)}"].shape)
        for k in range(len(last), 0, -1):
            c = last[k - 1]
            inp_shape, cols, xhat, inv, u = cache[k - 1]
            du = dact[f"C{k}"] * leaky_grad(u)
            g[f"C{k}.gamma"] = np.sum(du * xhat, axis=(0, 1, 2))
            g[f"C{k}.beta"] = du.sum(axis=(0, 1, 2))
            dxhat = du * p[f"C{k}.gamma"]
            m = xhat.shape[0] * xhat.shape[1] * xhat.shape[2]
            dzc = inv / m * (m * dxhat - dxhat.sum(axis=(0, 1, 2)) - xhat * np.sum(dxhat * xhat, axis=(0, 1, 2)))
            dinp, g[f"C{k}.W"] = conv_backward(dzc, cols, p[f"C{k}.W"], inp_shape)
            prev_name = "in" if k == 1 else f"C{k - 1}"
            dact[prev_name] = dinp if dact[prev_name] is None else dact[prev_name] + dinp
            if c.residual is not None:
                src = c.residual
                contrib = dinp if acts[src].shape[-1] == dinp.shape[-1] else dinp.sum(axis=-1, keepdims=True)
                dact[src] = contrib if dact[src] is None else dact[src] + contrib
        return loss, g

    def kink_signature(self, x, target, rng=None) -> np.ndarray:
        """Signs at every non-smooth point of the train-mode loss.

        Two parameter vectors with equal signatures lie on the same smooth
        piece, so a central difference between them is valid.
        """
        xb = _as_batch(x, self.arch)
        rng = np.random.default_rng(0) if rng is None else rng
        y, (cache, dense, _, _) = self._forward(xb, True, rng)
        parts = [(c[4] > 0).ravel() for c in cache] + [(d[1] > 0).ravel() for d in dense]
        parts.append((y - np.asarray(target, dtype=float) > 0).ravel())
        return np.concatenate(parts)

    # -- serialization ------------------------------------------------------------
    def save(self, path) -> Path:
        path = Path(path)
        arrays = {f"param/{k}": v.astype("<f8") for k, v in self.params.items()}
        arrays.update({f"buffer/{k}": v.astype("<f8") for k, v in self.buffers.items()})
        header = json.dumps({"format_version": FORMAT_VERSION, "architecture": self.arch.to_dict()})
        with open(path, "wb") as fh:
            np.savez(fh, __header__=np.array(header), **arrays)
        return path

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        try:
            with np.load(path, allow_pickle=False) as z:
                header = json.loads(str(z["__header__"]))
                params = {k[6:]: z[k] for k in z.files if k.startswith("param/")}
                buffers = {k[7:]: z[k] for k in z.files if k.startswith("buffer/")}
        except (OSError, KeyError, ValueError) as exc:
            raise PixDohertyError(f"cannot read model file {path}: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise PixDohertyError(f"unsupported model format {header.get('format_version')}")
        return cls(SurrogateArchitecture.from_dict(header["architecture"]), params, buffers)


# --- training ---------------------------------------------------------------------
@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    lr_decay_factor: float = 0.93
    lr_decay_every_epochs: int = 10
    epochs: int = 300
    batch_size: int = 2790
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    rng_seed: int = 0
    eval_batch_size: int = 2048

    def __post_init__(self):
        if self.learning_rate <= 0 or self.lr_decay_factor <= 0 or self.lr_decay_every_epochs <= 0:
            raise ValueError("learning-rate settings must be positive")
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size > 0")


def learning_rate_at(cfg: TrainConfig, epoch: int) -> float:
    """Stepped schedule; ``epoch`` counts from 0."""
    return cfg.learning_rate * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every_epochs)


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name in sorted(grads):
            gr = grads[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(gr)
                self.v[name] = np.zeros_like(gr)
            v = self.v[name]
            m *= b1
            m += (1 - b1) * gr
            v *= b2
            v += (1 - b2) * gr * gr
            params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(model: SurrogateModel, x, y, cfg: TrainConfig, x_val=None, y_val=None, on_epoch=None):
    """Adam with the stepped learning-rate schedule; returns the loss history.

    Each epoch is one shuffled pass.  History rows: ``epoch`` (1-based),
    ``lr``, ``batch_loss`` (mean train-mode minibatch MAE), ``train_mae``
    (inference-mode MAE on the whole training set) and ``val_mae``.
    """
    xb = np.asarray(x, dtype=float)
    yb = np.asarray(y, dtype=float)
    if xb.shape[0] != yb.shape[0] or xb.shape[0] == 0:
        raise LengthMismatch("inputs and targets must be non-empty and of equal length")
    if np.any(np.abs(yb) > 1.0 + 1e-9):
        raise ValueError("targets must lie in [-1, 1]")
    n = xb.shape[0]
    bs = cfg.batch_size
    if bs > n:
        log.warning("batch size %d exceeds dataset size %d; using %d", bs, n, n)
        bs = n
    rng = np.random.default_rng(cfg.rng_seed)
    opt = Adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    history = []
    model.training = True
    for epoch in range(cfg.epochs):
        lr = learning_rate_at(cfg, epoch)
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, bs):
            idx = order[s : s + bs]
            loss, grads = model.loss_and_grads(xb[idx], yb[idx], rng, update_stats=True)
            if not math.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch + 1}")
            opt.step(model.params, grads, lr)
            total += loss * idx.size
        row = {"epoch": epoch + 1, "lr": lr, "batch_loss": total / n,
               "train_mae": loss_mae(model.predict(xb, cfg.eval_batch_size), yb),
               "val_mae": math.nan}
        if x_val is not None and len(x_val):
            row["val_mae"] = loss_mae(model.predict(x_val, cfg.eval_batch_size), y_val)
        if not all(math.isfinite(row[k]) for k in ("batch_loss", "train_mae")):
            raise DivergedLoss(f"non-finite loss at epoch {epoch + 1}")
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    model.training = False
    return history


HISTORY_COLUMNS = ["epoch", "lr", "train_mae", "val_mae", "batch_loss"]


def write_history_csv(history, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, HISTORY_COLUMNS)
        w.writeheader()
        for row in history:
            w.writerow({k: row.get(k, "") for k in HISTORY_COLUMNS})
    return path


def split_indices(groups, val_fraction=0.2, seed=0):
    """Train/validation split that keeps all augmented copies of a structure together."""
    groups = np.asarray(groups)
    uniq = np.unique(groups)
    rng = np.random.default_rng(seed)
    rng.shuffle(uniq)
    n_val = int(round(val_fraction * uniq.size))
    val_groups = set(uniq[:n_val].tolist())
    is_val = np.array([g in val_groups for g in groups.tolist()])
    return np.flatnonzero(~is_val), np.flatnonzero(is_val)
