"""Differentiable layers with analytically coded backprop (numpy only).

Conventions: every layer caches what its backward pass needs during forward;
backward(grad) consumes that cache, accumulates parameter gradients into
.grads, and returns the input gradient. Shapes are (batch, features) for
dense layers and (batch, channels, length) for 1-D sequence layers.
"""

from __future__ import annotations

import numpy as np


class Layer:
    """Base: parameterless layers leave params/grads empty."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grads(self) -> None:
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)


def he_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
            dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Affine(Layer):
    def __init__(self, rng, in_dim: int, out_dim: int, dtype=np.float32):
        super().__init__()
        self.params["W"] = he_init(rng, (in_dim, out_dim), in_dim, dtype)
        self.params["b"] = np.zeros(out_dim, dtype=dtype)
        self.zero_grads()

    def forward(self, x, training):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad):
        self.grads["W"] += self._x.T @ grad
        self.grads["b"] += grad.sum(axis=0)
        return grad @ self.params["W"].T


class Conv1d(Layer):
    """Cross-correlation conv over (batch, channels, length) via im2col."""

    def __init__(self, rng, in_ch: int, out_ch: int, kernel: int,
                 stride: int = 1, padding: int = 0, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        fan_in = in_ch * kernel
        self.params["W"] = he_init(rng, (out_ch, in_ch, kernel), fan_in, dtype)
        self.params["b"] = np.zeros(out_ch, dtype=dtype)
        self.zero_grads()

    def _out_len(self, length: int) -> int:
        return (length + 2 * self.padding - self.kernel) // self.stride + 1

    def forward(self, x, training):
        b, c, length = x.shape
        if self.padding:
            xp = np.zeros((b, c, length + 2 * self.padding), dtype=x.dtype)
            xp[:, :, self.padding:self.padding + length] = x
        else:
            xp = x
        lout = self._out_len(length)
        idx = np.arange(lout)[:, None] * self.stride + np.arange(self.kernel)[None, :]
        patches = xp[:, :, idx]  # (b, c, lout, k)
        self._patches = patches
        self._in_len = length
        wmat = self.params["W"].reshape(self.out_ch, -1)  # (out, c*k)
        cols = patches.transpose(0, 2, 1, 3).reshape(b * lout, c * self.kernel)
        self._cols = cols
        y = cols @ wmat.T + self.params["b"]
        return y.reshape(b, lout, self.out_ch).transpose(0, 2, 1)

    def backward(self, grad):
        b, _, lout = grad.shape
        c, k = self.in_ch, self.kernel
        g2 = grad.transpose(0, 2, 1).reshape(b * lout, self.out_ch)
        self.grads["W"] += (g2.T @ self._cols).reshape(self.params["W"].shape)
        self.grads["b"] += g2.sum(axis=0)
        dcols = (g2 @ self.params["W"].reshape(self.out_ch, -1))
        dpatch = dcols.reshape(b, lout, c, k).transpose(0, 2, 1, 3)  # (b, c, lout, k)
        padded_len = self._in_len + 2 * self.padding
        dxp = np.zeros((b, c, padded_len), dtype=grad.dtype)
        for kk in range(k):  # strided slice per kernel tap avoids scatter-add
            dxp[:, :, kk:kk + self.stride * lout:self.stride] += dpatch[:, :, :, kk]
        if self.padding:
            return dxp[:, :, self.padding:self.padding + self._in_len]
        return dxp


class BatchNorm(Layer):
    """Batch normalization over (batch,) per feature or (batch, length) per channel.

    mode "features" expects (b, f); mode "channels" expects (b, c, l).
    Running statistics use an EMA with momentum 0.1 and feed inference mode.
    """

    def __init__(self, num: int, mode: str = "features", momentum: float = 0.1,
                 eps: float = 1e-5, gamma_init: float = 1.0, dtype=np.float32):
        super().__init__()
        assert mode in ("features", "channels")
        self.mode, self.momentum, self.eps = mode, momentum, eps
        self.params["gamma"] = np.full(num, gamma_init, dtype=dtype)
        self.params["beta"] = np.zeros(num, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(num, dtype=dtype)
        self.buffers["running_var"] = np.ones(num, dtype=dtype)
        self.zero_grads()

    def _axes(self):
        return (0,) if self.mode == "features" else (0, 2)

    def _expand(self, v, ndim):
        return v if self.mode == "features" else v[None, :, None]

    def forward(self, x, training):
        axes = self._axes()
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = np.prod([x.shape[a] for a in axes])
            unbiased = var * m / max(m - 1, 1)
            mom = self.momentum
            self.buffers["running_mean"] = ((1 - mom) * self.buffers["running_mean"]
                                            + mom * mean).astype(x.dtype)
            self.buffers["running_var"] = ((1 - mom) * self.buffers["running_var"]
                                           + mom * unbiased).astype(x.dtype)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._expand(mean, x.ndim)) * self._expand(inv_std, x.ndim)
        self._xhat, self._inv_std, self._training = xhat, inv_std, training
        return self._expand(self.params["gamma"], x.ndim) * xhat \
            + self._expand(self.params["beta"], x.ndim)

    def backward(self, grad):
        axes = self._axes()
        xhat, inv_std = self._xhat, self._inv_std
        self.grads["gamma"] += (grad * xhat).sum(axis=axes)
        self.grads["beta"] += grad.sum(axis=axes)
        ghat = grad * self._expand(self.params["gamma"], grad.ndim)
        if not self._training:
            return ghat * self._expand(inv_std, grad.ndim)
        m = np.prod([grad.shape[a] for a in axes])
        sum_g = ghat.sum(axis=axes)
        sum_gx = (ghat * xhat).sum(axis=axes)
        dx = (ghat - self._expand(sum_g / m, grad.ndim)
              - xhat * self._expand(sum_gx / m, grad.ndim))
        return dx * self._expand(inv_std, grad.ndim)


class ReLU(Layer):
    def forward(self, x, training):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class Dropout(Layer):
    """Inverted dropout; identity when evaluating or p == 0."""

    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        self.p = p
        self.rng = rng

    def forward(self, x, training):
        if not training or self.p <= 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.p
        self._mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


class MaxPool1d(Layer):
    def __init__(self, kernel: int, stride: int):
        super().__init__()
        self.kernel, self.stride = kernel, stride

    def forward(self, x, training):
        b, c, length = x.shape
        lout = (length - self.kernel) // self.stride + 1
        idx = np.arange(lout)[:, None] * self.stride + np.arange(self.kernel)[None, :]
        windows = x[:, :, idx]  # (b, c, lout, k)
        self._arg = windows.argmax(axis=3)
        self._in_shape = x.shape
        return windows.max(axis=3)

    def backward(self, grad):
        dx = np.zeros(self._in_shape, dtype=grad.dtype)
        for kk in range(self.kernel):
            mask = self._arg == kk
            lout = grad.shape[2]
            dx[:, :, kk:kk + self.stride * lout:self.stride] += grad * mask
        return dx


class GlobalAvgPool1d(Layer):
    """Adaptive average pool to length 1, squeezed to (batch, channels)."""

    def forward(self, x, training):
        self._length = x.shape[2]
        return x.mean(axis=2)

    def backward(self, grad):
        return np.repeat(grad[:, :, None], self._length, axis=2) / self._length


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class SEBlock(Layer):
    """Squeeze-and-excitation channel gating: pool -> bottleneck -> sigmoid scale."""

    def __init__(self, rng, channels: int, reduction: int, dtype=np.float32):
        super().__init__()
        hidden = channels // reduction
        self.params["W1"] = he_init(rng, (channels, hidden), channels, dtype)
        self.params["b1"] = np.zeros(hidden, dtype=dtype)
        self.params["W2"] = he_init(rng, (hidden, channels), hidden, dtype)
        self.params["b2"] = np.zeros(channels, dtype=dtype)
        self.zero_grads()

    def forward(self, x, training):
        self._x = x
        self._s = x.mean(axis=2)  # squeeze: (b, c)
        self._z1 = self._s @ self.params["W1"] + self.params["b1"]
        self._h = np.maximum(self._z1, 0.0)
        z2 = self._h @ self.params["W2"] + self.params["b2"]
        self._gate = sigmoid(z2)
        return x * self._gate[:, :, None]

    def backward(self, grad):
        x, gate = self._x, self._gate
        dgate = (grad * x).sum(axis=2)
        dx = grad * gate[:, :, None]
        dz2 = dgate * gate * (1.0 - gate)
        self.grads["W2"] += self._h.T @ dz2
        self.grads["b2"] += dz2.sum(axis=0)
        dh = dz2 @ self.params["W2"].T
        dz1 = dh * (self._z1 > 0)
        self.grads["W1"] += self._s.T @ dz1
        self.grads["b1"] += dz1.sum(axis=0)
        ds = dz1 @ self.params["W1"].T
        dx += ds[:, :, None] / x.shape[2]
        return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class SoftmaxCrossEntropy:
    """Mean cross-entropy against soft target rows (each summing to 1)."""

    def forward(self, logits: np.ndarray, targets: np.ndarray,
                sample_weight: np.ndarray | None = None) -> float:
        self._probs = softmax(logits)
        self._targets = targets
        logp = np.log(np.maximum(self._probs, 1e-30))
        per_sample = -(targets * logp).sum(axis=1)
        if sample_weight is None:
            self._weight = None
            return float(per_sample.mean())
        w = sample_weight / sample_weight.sum()
        self._weight = w
        return float((per_sample * w).sum())

    def backward(self) -> np.ndarray:
        diff = self._probs - self._targets
        if self._weight is None:
            return diff / len(diff)
        return diff * self._weight[:, None]
