"""Convolutional network in plain numpy: layers, backprop and Adam.

Activations are stored channels-last, ``(batch, height, width, channels)``.
Convolution weights use the ``(out, in, kh, kw)`` layout and the dense
head ``(out, in)``, where the flattened feature order is channels-last.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


class Conv2d:
    """Stride-1 convolution with zero padding ``kernel // 2`` (shape preserving)."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, dtype=np.float64):
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.in_channels, self.out_channels, self.kernel = in_channels, out_channels, kernel
        self.weight = np.zeros((out_channels, in_channels, kernel, kernel), dtype=dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}
        self.need_input_grad = True

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def init(self, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(self.in_channels * self.kernel ** 2)
        self.weight[...] = rng.uniform(-bound, bound, self.weight.shape)
        self.bias[...] = rng.uniform(-bound, bound, self.bias.shape)

    def _wmat(self):
        # (out, in, kh, kw) -> (kh*kw*in, out), matching the column layout below
        return self.weight.transpose(2, 3, 1, 0).reshape(-1, self.out_channels)

    def forward(self, x, train: bool = False):
        if x.shape[-1] != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} channels, got {x.shape[-1]}")
        B, H, W, C = x.shape
        k, p = self.kernel, self.kernel // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        # one contiguous channel block per kernel tap
        cols = np.concatenate([xp[:, i:i + H, j:j + W, :] for i in range(k) for j in range(k)],
                              axis=-1).reshape(B * H * W, k * k * C)
        self._cache = (x.shape, cols)
        out = cols @ self._wmat() + self.bias
        return out.reshape(B, H, W, self.out_channels)

    def backward(self, dout):
        shape, cols = self._cache
        B, H, W, C = shape
        k, p = self.kernel, self.kernel // 2
        d2 = dout.reshape(-1, self.out_channels)
        dw = (cols.T @ d2).reshape(k, k, C, self.out_channels).transpose(3, 2, 0, 1)
        self.grads = {"weight": np.ascontiguousarray(dw), "bias": d2.sum(axis=0)}
        if not self.need_input_grad:
            return None
        dcols = (d2 @ np.ascontiguousarray(self._wmat().T)).reshape(B, H, W, k * k * C)
        dxp = np.zeros((B, H + 2 * p, W + 2 * p, C), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                tap = (i * k + j) * C
                dxp[:, i:i + H, j:j + W, :] += dcols[..., tap:tap + C]
        return dxp[:, p:p + H, p:p + W, :]


class BatchNorm2d:
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float64):
        self.eps, self.momentum = eps, momentum
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train: bool = False):
        if train:
            n = x.size // x.shape[-1]
            mean = x.mean(axis=(0, 1, 2))
            var = x.var(axis=(0, 1, 2))
            m = self.momentum
            self.running_mean *= 1 - m
            self.running_mean += m * mean
            self.running_var *= 1 - m
            self.running_var += m * var * n / max(n - 1, 1)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train)
        return self.gamma * xhat + self.beta

    def backward(self, dout):
        xhat, inv_std, train = self._cache
        axes = (0, 1, 2)
        n = dout.size // dout.shape[-1]
        self.grads = {"gamma": (dout * xhat).sum(axis=axes), "beta": dout.sum(axis=axes)}
        dxhat = dout * self.gamma
        if not train:
            # running statistics are constants
            return dxhat * inv_std
        return inv_std / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class ReLU:
    grads: dict = {}

    def params(self):
        return {}

    def forward(self, x, train: bool = False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Dropout:
    """Inverted dropout: surviving activations are scaled by ``1 / (1 - rate)`` in training."""

    grads: dict = {}

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.rng: np.random.Generator | None = None

    def params(self):
        return {}

    def forward(self, x, train: bool = False):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if self.rng is None:
            raise RuntimeError("dropout needs an rng in training mode")
        keep = self.rng.random(x.shape) >= self.rate
        self._mask = (keep / (1.0 - self.rate)).astype(x.dtype)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Dense:
    def __init__(self, in_features: int, out_features: int, dtype=np.float64):
        self.weight = np.zeros((out_features, in_features), dtype=dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.grads: dict[str, np.ndarray] = {}
        self.need_input_grad = True

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def init(self, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(self.weight.shape[1])
        self.weight[...] = rng.uniform(-bound, bound, self.weight.shape)
        self.bias[...] = rng.uniform(-bound, bound, self.bias.shape)

    def forward(self, x, train: bool = False):
        self._shape = x.shape
        flat = x.reshape(len(x), -1)
        if flat.shape[1] != self.weight.shape[1]:
            raise ShapeError(f"dense expects {self.weight.shape[1]} features, got {flat.shape[1]}")
        self._x = flat
        return flat @ self.weight.T + self.bias

    def backward(self, dout):
        self.grads = {"weight": dout.T @ self._x, "bias": dout.sum(axis=0)}
        if not self.need_input_grad:
            return None
        return (dout @ self.weight).reshape(self._shape)


@dataclass(frozen=True)
class CnnConfig:
    """Architecture: ``len(channels) - 1`` conv/batch-norm/ReLU blocks, dropout, dense head."""

    height: int
    width: int
    channels: tuple = (1, 16, 32, 32, 64, 64, 64)
    kernel: int = 3
    dropout: float = 0.25
    outputs: int = 3
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    @property
    def blocks(self) -> int:
        return len(self.channels) - 1


class CnnModel:
    """Regressor from a microstructure image to (modulus, strength, toughness).

    ``label_mean`` / ``label_std`` standardize targets (of their logarithm
    when ``label_transform == "log"``); the network works in standardized
    units and :meth:`predict` returns physical ones.
    """

    LABEL_TRANSFORMS = ("identity", "log")

    def __init__(self, config: CnnConfig, seed: int = 0, dtype=np.float64,
                 label_transform: str = "log"):
        if label_transform not in self.LABEL_TRANSFORMS:
            raise ValueError(f"label_transform must be one of {self.LABEL_TRANSFORMS}")
        self.label_transform = label_transform
        self.config = config
        self.dtype = np.dtype(dtype)
        self.layers = []
        self.names = []
        c = config.channels
        for b in range(config.blocks):
            self._add(f"block{b}.conv", Conv2d(c[b], c[b + 1], config.kernel, dtype))
            self._add(f"block{b}.bn", BatchNorm2d(c[b + 1], config.bn_eps, config.bn_momentum, dtype))
            self._add(f"block{b}.relu", ReLU())
        self._add("dropout", Dropout(config.dropout))
        self._add("head", Dense(config.height * config.width * c[-1], config.outputs, dtype))
        self.layers[0].need_input_grad = False
        self.label_mean = np.zeros(config.outputs)
        self.label_std = np.ones(config.outputs)
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            if hasattr(layer, "init"):
                layer.init(rng)

    def _add(self, name, layer):
        self.names.append(name)
        self.layers.append(layer)

    @property
    def dropout(self) -> Dropout:
        return self.layers[self.names.index("dropout")]

    def params(self) -> dict[str, np.ndarray]:
        """Trainable arrays by dotted name; values are live views."""
        return {f"{n}.{k}": v for n, layer in zip(self.names, self.layers)
                for k, v in layer.params().items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{n}.{k}": v for n, layer in zip(self.names, self.layers)
                if isinstance(layer, BatchNorm2d) for k, v in layer.buffers().items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{n}.{k}": v for n, layer in zip(self.names, self.layers)
                for k, v in layer.grads.items()}

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Every stored array in checkpoint order."""
        out = []
        for n, layer in zip(self.names, self.layers):
            arrays = dict(layer.params())
            if isinstance(layer, BatchNorm2d):
                arrays.update(layer.buffers())
            out.extend((f"{n}.{k}", v) for k, v in arrays.items())
        return out

    def _as_input(self, images) -> np.ndarray:
        x = np.asarray(images, dtype=self.dtype)
        if x.ndim == 3:
            x = x[..., None]
        if x.shape[1:] != (self.config.height, self.config.width, self.config.channels[0]):
            raise ShapeError(f"expected images of shape (batch, {self.config.height}, "
                             f"{self.config.width}), got {np.shape(images)}")
        return x

    def forward_normalized(self, images, train: bool = False, rng: np.random.Generator | None = None):
        x = self._as_input(images)
        self.dropout.rng = rng
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward_normalized(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
            if dout is None:
                break

    def forward(self, images, mode: str = "infer", rng: np.random.Generator | None = None):
        """Physical-unit predictions, ``(batch, 3)``. ``mode`` is ``"train"`` or ``"infer"``."""
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        z = self.forward_normalized(images, mode == "train", rng)
        return self.denormalize(z)

    def predict(self, images, batch_size: int = 1024) -> np.ndarray:
        x = self._as_input(images)
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.config.outputs))

    def transform(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=float)
        return np.log(labels) if self.label_transform == "log" else labels

    def fit_normalization(self, labels) -> None:
        t = self.transform(labels)
        self.label_mean = t.mean(axis=0)
        std = t.std(axis=0)
        self.label_std = np.where(std > 0, std, 1.0)

    def normalize(self, labels):
        return (self.transform(labels) - self.label_mean) / self.label_std

    def denormalize(self, z):
        t = np.asarray(z, dtype=float) * self.label_std + self.label_mean
        return np.exp(t) if self.label_transform == "log" else t

    def loss_and_grads(self, images, targets, rng: np.random.Generator | None = None,
                       train: bool = True):
        """MSE in standardized label space and its gradient for every parameter.

        Returns ``(loss, per_property_mse, grads)``; the dropout mask is drawn
        from ``rng`` so a fixed rng gives a fixed mask.
        """
        z = self.forward_normalized(images, train, rng)
        t = self.normalize(targets).astype(self.dtype)
        r = z - t
        loss = float(np.mean(r.astype(np.float64) ** 2))
        per_property = np.mean(r.astype(np.float64) ** 2, axis=0)
        self.backward_normalized(2.0 * r / r.size)
        return loss, per_property, self.grads()


def mse(predictions, targets) -> float:
    return float(np.mean((np.asarray(predictions) - np.asarray(targets)) ** 2))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float | None = None) -> dict:
    """One bias-corrected Adam update, applied in place to ``params``."""
    lr = state.lr if lr is None else lr
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** state.t, 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return params
