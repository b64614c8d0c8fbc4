"""Layer primitives with hand-written forward and backward passes.

Every layer keeps the intermediates of its most recent training-mode forward
call and consumes them in ``backward``.  Gradients are written into the
``grads`` dict, keyed like ``params``.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError, StateError
from .tensor import Rng

BN_EPS = 1e-3
BN_MOMENTUM = 0.99


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


class Dense:
    """Affine map ``y = x W + b`` with ``W`` of shape (fan_in, fan_out)."""

    def __init__(self, fan_in: int, fan_out: int, rng: Rng | None = None):
        self.fan_in = fan_in
        self.fan_out = fan_out
        if rng is None:
            W = np.zeros((fan_in, fan_out))
        else:
            lim = glorot_limit(fan_in, fan_out)
            W = rng.uniform((fan_in, fan_out), -lim, lim)
        self.params = {"W": W, "b": np.zeros(fan_out)}
        self.grads = {"W": np.zeros_like(W), "b": np.zeros(fan_out)}
        self.buffers: dict[str, np.ndarray] = {}
        self._x = None

    @property
    def W(self):
        return self.params["W"]

    @property
    def b(self):
        return self.params["b"]

    def forward(self, x: np.ndarray, training: bool = True) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.fan_in:
            raise ShapeError(f"dense expects (*, {self.fan_in}) input, got {x.shape}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise StateError("dense backward called before forward")
        if dy.shape != (self._x.shape[0], self.fan_out):
            raise ShapeError(f"dense backward expects {(self._x.shape[0], self.fan_out)}, got {dy.shape}")
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is taken as 0
    return np.where(x > 0.0, dy, 0.0)


class ReLU:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._x = None

    def forward(self, x, training: bool = True):
        self._x = x
        return relu(x)

    def backward(self, dy):
        if self._x is None:
            raise StateError("relu backward called before forward")
        return relu_backward(dy, self._x)


class BatchNorm:
    """Per-feature batch normalization.

    Training mode normalizes with the batch mean and biased variance and
    folds them into the moving statistics as
    ``moving = momentum * moving + (1 - momentum) * batch``.  Inference mode
    uses the moving statistics and mutates nothing.
    """

    def __init__(self, width: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        if not 0.0 < momentum < 1.0:
            raise DomainError(f"momentum must lie in (0, 1), got {momentum}")
        self.width = width
        self.eps = eps
        self.momentum = momentum
        self.params = {"gamma": np.ones(width), "beta": np.zeros(width)}
        self.grads = {"gamma": np.zeros(width), "beta": np.zeros(width)}
        self.buffers = {"moving_mean": np.zeros(width), "moving_var": np.ones(width)}
        self._cache = None

    def forward(self, x: np.ndarray, training: bool = True) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.width:
            raise ShapeError(f"batchnorm expects (*, {self.width}) input, got {x.shape}")
        gamma, beta = self.params["gamma"], self.params["beta"]
        if not training:
            self._cache = None
            mm, mv = self.buffers["moving_mean"], self.buffers["moving_var"]
            return gamma * (x - mm) / np.sqrt(mv + self.eps) + beta
        if x.shape[0] < 2:
            raise DomainError(f"training-mode batchnorm needs batch >= 2, got {x.shape[0]}")
        mean = x.mean(axis=0)
        xc = x - mean
        var = (xc * xc).mean(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv_std
        self._cache = (xhat, inv_std)
        m = self.momentum
        self.buffers["moving_mean"] = m * self.buffers["moving_mean"] + (1.0 - m) * mean
        self.buffers["moving_var"] = m * self.buffers["moving_var"] + (1.0 - m) * var
        return gamma * xhat + beta

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("batchnorm backward needs a prior training-mode forward")
        xhat, inv_std = self._cache
        if dy.shape != xhat.shape:
            raise ShapeError(f"batchnorm backward expects {xhat.shape}, got {dy.shape}")
        self.grads["beta"] = dy.sum(axis=0)
        self.grads["gamma"] = (dy * xhat).sum(axis=0)
        dxhat = dy * self.params["gamma"]
        # mean and variance terms collapse into the two column means below
        return inv_std * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))


def concat_forward(parts: list[np.ndarray]) -> np.ndarray:
    if not parts:
        raise ShapeError("concat needs at least one part")
    rows = parts[0].shape[0]
    for p in parts:
        if p.ndim != 2 or p.shape[0] != rows:
            raise ShapeError(f"concat row mismatch: {[q.shape for q in parts]}")
    if len(parts) == 1:
        return parts[0]
    return np.concatenate(parts, axis=1)


def concat_backward(grad: np.ndarray, widths: list[int]) -> list[np.ndarray]:
    if sum(widths) != grad.shape[1]:
        raise ShapeError(f"widths {widths} do not cover gradient of shape {grad.shape}")
    out, start = [], 0
    for w in widths:
        out.append(grad[:, start:start + w])
        start += w
    return out


class Layer:
    """One hidden or output layer: batchnorm, dense, then ReLU unless linear."""

    def __init__(self, fan_in: int, fan_out: int, rng: Rng | None = None,
                 activation: bool = True):
        self.bn = BatchNorm(fan_in)
        self.dense = Dense(fan_in, fan_out, rng)
        self.act = ReLU() if activation else None

    @property
    def fan_in(self):
        return self.dense.fan_in

    @property
    def fan_out(self):
        return self.dense.fan_out

    def sublayers(self):
        yield "bn", self.bn
        yield "dense", self.dense

    def forward(self, x, training: bool = True):
        h = self.dense.forward(self.bn.forward(x, training), training)
        return self.act.forward(h, training) if self.act is not None else h

    def backward(self, dy):
        if self.act is not None:
            dy = self.act.backward(dy)
        return self.bn.backward(self.dense.backward(dy))
