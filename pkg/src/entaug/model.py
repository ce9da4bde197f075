"""Small classifiers with explicit forward/backward passes and SGD.

Layers operate on channels-last batches (B, H, W, C).  There is no
autodiff: each layer implements its own closed-form backward pass, and
correctness is pinned by finite-difference checks in the test suite.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, InvalidInputError

SCHEDULE_COSINE = "cosine"
SCHEDULE_MULTISTEP = "multistep"

ARCHITECTURES = ("tiny-cnn", "mlp")


@dataclass(frozen=True)
class OptimizerConfig:
    lr0: float = 0.05
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 5e-4
    schedule: str = SCHEDULE_COSINE
    total_epochs: int = 20
    milestones: tuple = ()
    gamma: float = 0.2

    def __post_init__(self):
        if self.lr0 <= 0:
            raise InvalidInputError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise InvalidInputError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.schedule not in (SCHEDULE_COSINE, SCHEDULE_MULTISTEP):
            raise InvalidInputError(f"unknown schedule {self.schedule!r}")


def learning_rate(opt: OptimizerConfig, epoch: int) -> float:
    if opt.schedule == SCHEDULE_COSINE:
        return 0.5 * opt.lr0 * (1.0 + math.cos(math.pi * epoch / opt.total_epochs))
    drops = sum(1 for m in opt.milestones if m <= epoch)
    return opt.lr0 * opt.gamma**drops


class Conv3x3:
    """3x3 convolution, stride 1, zero padding 1 (shape-preserving)."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, dtype=np.float32):
        scale = math.sqrt(2.0 / (in_ch * 9))
        self.W = (rng.standard_normal((3, 3, in_ch, out_ch)) * scale).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)

    def params(self):
        return {"W": self.W, "b": self.b}

    def _columns(self, x):
        b, h, w, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        cols = np.empty((b, h, w, 3, 3, c), dtype=x.dtype)
        for dy in range(3):
            for dx in range(3):
                cols[:, :, :, dy, dx, :] = xp[:, dy : dy + h, dx : dx + w, :]
        return cols.reshape(b * h * w, 9 * c)

    def forward(self, x, keep):
        b, h, w, _ = x.shape
        cols = self._columns(x)
        out_ch = self.W.shape[3]
        y = cols @ self.W.reshape(9 * self.W.shape[2], out_ch) + self.b
        cache = (cols, x.shape) if keep else None
        return y.reshape(b, h, w, out_ch), cache

    def backward(self, grad_y, cache, need_input_grad=True):
        cols, x_shape = cache
        b, h, w, c = x_shape
        out_ch = self.W.shape[3]
        gy = grad_y.reshape(b * h * w, out_ch)
        grad_w = (cols.T @ gy).reshape(self.W.shape)
        grad_b = gy.sum(axis=0)
        if not need_input_grad:
            return None, {"W": grad_w, "b": grad_b}
        gxp = np.zeros((b, h + 2, w + 2, c), dtype=grad_y.dtype)
        for dy in range(3):
            for dx in range(3):
                gxp[:, dy : dy + h, dx : dx + w, :] += (gy @ self.W[dy, dx].T).reshape(b, h, w, c)
        return gxp[:, 1:-1, 1:-1, :], {"W": grad_w, "b": grad_b}


class MaxPool2:
    """2x2 max pooling, stride 2.

    Ties route the gradient to the first maximal element in window order
    (top-left, top-right, bottom-left, bottom-right).
    """

    def params(self):
        return {}

    @staticmethod
    def _quadrants(x):
        return (x[:, 0::2, 0::2, :], x[:, 0::2, 1::2, :], x[:, 1::2, 0::2, :], x[:, 1::2, 1::2, :])

    def forward(self, x, keep):
        b, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ConfigError(f"MaxPool2 needs even spatial dims, got {h}x{w}")
        a, bq, cq, d = self._quadrants(x)
        y = np.maximum(np.maximum(a, bq), np.maximum(cq, d))
        cache = (x, y) if keep else None
        return y, cache

    def backward(self, grad_y, cache):
        x, y = cache
        gx = np.zeros(x.shape, dtype=grad_y.dtype)
        taken = np.zeros(y.shape, dtype=bool)
        for quadrant, slot in zip(self._quadrants(x), self._quadrants(gx)):
            winner = (quadrant == y) & ~taken
            np.multiply(grad_y, winner, out=slot)
            taken |= winner
        return gx, {}


class ReLU:
    """Clamps in place; safe because every upstream layer emits a fresh array."""

    def params(self):
        return {}

    def forward(self, x, keep):
        mask = x > 0
        np.maximum(x, 0, out=x)
        return x, (mask if keep else None)

    def backward(self, grad_y, cache):
        return grad_y * cache, {}


class Flatten:
    def params(self):
        return {}

    def forward(self, x, keep):
        return x.reshape(x.shape[0], -1), (x.shape if keep else None)

    def backward(self, grad_y, cache):
        return grad_y.reshape(cache), {}


class FullyConnected:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float32):
        scale = math.sqrt(2.0 / in_dim)
        self.W = (rng.standard_normal((in_dim, out_dim)) * scale).astype(dtype)
        self.b = np.zeros(out_dim, dtype=dtype)

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, keep):
        return x @ self.W + self.b, (x if keep else None)

    def backward(self, grad_y, cache):
        return grad_y @ self.W.T, {"W": cache.T @ grad_y, "b": grad_y.sum(axis=0)}


@dataclass
class ForwardTrace:
    """Activations retained for backward, plus logits and the features feeding the final layer."""

    caches: list
    logits: np.ndarray
    penultimate: np.ndarray
    mode: str


class Network:
    """An explicit layer stack ending in a FullyConnected logit layer."""

    def __init__(self, layers: list, k: int, dtype=np.float32):
        if not isinstance(layers[-1], FullyConnected):
            raise ConfigError("final layer must be FullyConnected")
        self.layers = layers
        self.k = k
        self.dtype = np.dtype(dtype)
        self.eval_calls = 0  # counts forward passes; augmentation-cost assertions read it

    def forward(self, x: np.ndarray, mode: str = "train") -> ForwardTrace:
        """Run the stack; mode "eval" skips backward caches but still records features."""
        self.eval_calls += 1
        keep = mode == "train"
        act = np.ascontiguousarray(x, dtype=self.dtype)
        caches = []
        penultimate = act
        for i, layer in enumerate(self.layers):
            if i == len(self.layers) - 1:
                penultimate = act
            try:
                act, cache = layer.forward(act, keep)
            except ValueError as exc:
                raise ConfigError(f"layer {i} ({type(layer).__name__}) rejected input: {exc}") from exc
            caches.append(cache)
        if act.ndim != 2 or act.shape[1] != self.k:
            raise ConfigError(f"network produced shape {act.shape}, expected (batch, {self.k})")
        return ForwardTrace(caches, act, penultimate, mode)

    def backward(self, trace: ForwardTrace, grad_logits: np.ndarray) -> list:
        """Per-layer parameter gradients for the given logit gradient."""
        if trace.mode != "train":
            raise InvalidInputError("backward requires a train-mode trace")
        if len(trace.caches) != len(self.layers):
            raise InvalidInputError("trace does not match this network")
        grads: list = [None] * len(self.layers)
        g = np.ascontiguousarray(grad_logits, dtype=self.dtype)
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            if i == 0 and isinstance(layer, Conv3x3):
                # input gradients are never consumed below the first layer
                g, pgrads = layer.backward(g, trace.caches[i], need_input_grad=False)
            else:
                g, pgrads = layer.backward(g, trace.caches[i])
            grads[i] = pgrads
        return grads

    def state_arrays(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out[f"layer{i}.{name}"] = arr
        return out

    def load_state(self, arrays: dict) -> None:
        own = self.state_arrays()
        if set(own) != set(arrays):
            raise ConfigError(f"state keys {sorted(arrays)} do not match network {sorted(own)}")
        for key, arr in arrays.items():
            if own[key].shape != arr.shape:
                raise ConfigError(f"{key}: shape {arr.shape} != {own[key].shape}")
            own[key][...] = arr.astype(own[key].dtype)


def build_network(
    arch: str,
    height: int,
    width: int,
    channels: int,
    k: int,
    rng: np.random.Generator,
    dtype=np.float32,
    hidden: int = 64,
) -> Network:
    if arch == "tiny-cnn":
        if height % 4 or width % 4:
            raise ConfigError(f"tiny-cnn needs dims divisible by 4, got {height}x{width}")
        flat = 32 * (height // 4) * (width // 4)
        layers = [
            Conv3x3(channels, 16, rng, dtype),
            ReLU(),
            MaxPool2(),
            Conv3x3(16, 32, rng, dtype),
            ReLU(),
            MaxPool2(),
            Flatten(),
            FullyConnected(flat, hidden, rng, dtype),
            ReLU(),
            FullyConnected(hidden, k, rng, dtype),
        ]
    elif arch == "mlp":
        layers = [
            Flatten(),
            FullyConnected(height * width * channels, 256, rng, dtype),
            ReLU(),
            FullyConnected(256, k, rng, dtype),
        ]
    else:
        raise ConfigError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
    return Network(layers, k, dtype)


class Sgd:
    """SGD with momentum, optional Nesterov lookahead, and coupled weight decay.

    Per parameter: d = g + weight_decay * w; v = momentum * v + d;
    w -= lr(epoch) * (d + momentum * v  if nesterov else  v).
    """

    def __init__(self, opt: OptimizerConfig):
        self.opt = opt
        self.velocity: Optional[list] = None

    def _init_velocity(self, net: Network):
        self.velocity = [
            {name: np.zeros_like(arr, dtype=np.float64) for name, arr in layer.params().items()}
            for layer in net.layers
        ]

    def step(self, net: Network, grads: list, epoch: int) -> None:
        if self.velocity is None:
            self._init_velocity(net)
        lr = learning_rate(self.opt, epoch)
        mom, wd = self.opt.momentum, self.opt.weight_decay
        for layer, layer_grads, layer_vel in zip(net.layers, grads, self.velocity):
            for name, w in layer.params().items():
                d = layer_grads[name].astype(np.float64) + wd * w
                v = layer_vel[name]
                v *= mom
                v += d
                update = d + mom * v if self.opt.nesterov else v
                w -= (lr * update).astype(w.dtype)
