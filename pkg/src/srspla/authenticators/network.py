"""Desk-scale 1-D squeeze-and-excitation residual classifier.

Topology: dense stem projecting the 2,531-d feature vector to a 1-channel
sequence, a strided conv + maxpool front end, n_blocks SE residual blocks,
global average pooling, and a two-layer head emitting [attack, legit] logits.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from srspla.authenticators import layers as L


class NonFiniteActivation(Exception):
    """Forward pass produced non-finite logits (training diverged)."""


@dataclass
class SeResNet1dConfig:
    input_dim: int = 2531
    stem_out: int = 256
    n_blocks: int = 2       # 6 at paper scale
    channels: int = 64      # 256 at paper scale
    kernel: int = 3
    stem_kernel: int = 7
    stem_stride: int = 2
    pool_kernel: int = 3
    pool_stride: int = 2
    se_reduction: int = 16
    dropout: float = 0.2
    head_hidden: int = 256

    def validate(self) -> None:
        if self.channels % self.se_reduction != 0:
            raise ValueError(
                f"channels {self.channels} not divisible by se_reduction {self.se_reduction}")
        conv_len = (self.stem_out - self.stem_kernel) // self.stem_stride + 1
        pool_len = (conv_len - self.pool_kernel) // self.pool_stride + 1
        if pool_len < 1:
            raise ValueError(f"stem_out {self.stem_out} too short for the stem front end")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout {self.dropout} outside [0, 1)")

    @classmethod
    def paper_scale(cls) -> "SeResNet1dConfig":
        return cls(n_blocks=6, channels=256)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SeResNet1dConfig":
        return cls(**d)


class SEResBlock:
    """conv-bn-relu-dropout-conv-bn -> SE gate -> identity skip -> relu.

    The second batch norm starts with zero scale, so a freshly initialized
    block is an exact identity over the non-negative activations it receives.
    """

    def __init__(self, rng, cfg: SeResNet1dConfig, dtype):
        c, k = cfg.channels, cfg.kernel
        pad = k // 2
        self.conv1 = L.Conv1d(rng, c, c, k, padding=pad, dtype=dtype)
        self.bn1 = L.BatchNorm(c, "channels", dtype=dtype)
        self.relu1 = L.ReLU()
        self.drop = L.Dropout(cfg.dropout, rng)
        self.conv2 = L.Conv1d(rng, c, c, k, padding=pad, dtype=dtype)
        self.bn2 = L.BatchNorm(c, "channels", gamma_init=0.0, dtype=dtype)
        self.se = L.SEBlock(rng, c, cfg.se_reduction, dtype=dtype)
        self.relu_out = L.ReLU()

    def sublayers(self):
        return [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2),
                ("bn2", self.bn2), ("se", self.se)]

    def forward(self, x, training):
        h = self.conv1.forward(x, training)
        h = self.bn1.forward(h, training)
        h = self.relu1.forward(h, training)
        h = self.drop.forward(h, training)
        h = self.conv2.forward(h, training)
        h = self.bn2.forward(h, training)
        h = self.se.forward(h, training)
        return self.relu_out.forward(x + h, training)

    def backward(self, grad):
        g = self.relu_out.backward(grad)
        gh = self.se.backward(g)
        gh = self.bn2.backward(gh)
        gh = self.conv2.backward(gh)
        gh = self.drop.backward(gh)
        gh = self.relu1.backward(gh)
        gh = self.bn1.backward(gh)
        gh = self.conv1.backward(gh)
        return g + gh


class SeResNet1d:
    """Feature-vector classifier; forward emits (p_legit, logits)."""

    def __init__(self, config: SeResNet1dConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        cfg = config

        self.stem_affine = L.Affine(rng, cfg.input_dim, cfg.stem_out, dtype)
        self.stem_bn_feat = L.BatchNorm(cfg.stem_out, "features", dtype=dtype)
        self.stem_relu1 = L.ReLU()
        self.stem_conv = L.Conv1d(rng, 1, cfg.channels, cfg.stem_kernel,
                                  stride=cfg.stem_stride, dtype=dtype)
        self.stem_bn_ch = L.BatchNorm(cfg.channels, "channels", dtype=dtype)
        self.stem_relu2 = L.ReLU()
        self.stem_pool = L.MaxPool1d(cfg.pool_kernel, cfg.pool_stride)
        self.blocks = [SEResBlock(rng, cfg, dtype) for _ in range(cfg.n_blocks)]
        self.gap = L.GlobalAvgPool1d()
        self.head1 = L.Affine(rng, cfg.channels, cfg.head_hidden, dtype)
        self.head_relu = L.ReLU()
        self.head2 = L.Affine(rng, cfg.head_hidden, 2, dtype)

        self._named: list[tuple[str, L.Layer]] = [
            ("stem.affine", self.stem_affine),
            ("stem.bn_feat", self.stem_bn_feat),
            ("stem.conv", self.stem_conv),
            ("stem.bn_ch", self.stem_bn_ch),
        ]
        for i, blk in enumerate(self.blocks):
            for sub, layer in blk.sublayers():
                self._named.append((f"block{i}.{sub}", layer))
        self._named += [("head.fc1", self.head1), ("head.fc2", self.head2)]

    # -- parameter plumbing ----------------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self._named
                for k, v in layer.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self._named
                for k, v in layer.grads.items()}

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self._named
                for k, v in layer.buffers.items()}

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = dict(self.named_params())
        out.update(self.named_buffers())
        return out

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        own = self.state_tensors()
        missing = set(own) - set(tensors)
        extra = set(tensors) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch; missing {sorted(missing)}, extra {sorted(extra)}")
        for k, v in own.items():
            np.copyto(v, tensors[k].astype(v.dtype))

    def zero_grads(self) -> None:
        for _, layer in self._named:
            layer.zero_grads()

    def n_params(self) -> int:
        return sum(p.size for p in self.named_params().values())

    # -- forward / backward ------------------------------------------------------

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        """Return (batch, 2) logits, classes ordered [attack, legit]."""
        h = np.ascontiguousarray(x, dtype=self.dtype)
        h = self.stem_affine.forward(h, training)
        h = self.stem_bn_feat.forward(h, training)
        h = self.stem_relu1.forward(h, training)
        h = h[:, None, :]  # length-stem_out sequence with one channel
        h = self.stem_conv.forward(h, training)
        h = self.stem_bn_ch.forward(h, training)
        h = self.stem_relu2.forward(h, training)
        h = self.stem_pool.forward(h, training)
        for blk in self.blocks:
            h = blk.forward(h, training)
        h = self.gap.forward(h, training)
        h = self.head1.forward(h, training)
        h = self.head_relu.forward(h, training)
        logits = self.head2.forward(h, training)
        if not np.all(np.isfinite(logits)):
            raise NonFiniteActivation("non-finite logits in forward pass")
        return logits

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        g = self.head2.backward(dlogits)
        g = self.head_relu.backward(g)
        g = self.head1.backward(g)
        g = self.gap.backward(g)
        for blk in reversed(self.blocks):
            g = blk.backward(g)
        g = self.stem_pool.backward(g)
        g = self.stem_relu2.backward(g)
        g = self.stem_bn_ch.backward(g)
        g = self.stem_conv.backward(g)
        g = g[:, 0, :]
        g = self.stem_relu1.backward(g)
        g = self.stem_bn_feat.backward(g)
        return self.stem_affine.backward(g)

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """p_legit per row, inference mode (running stats, dropout off)."""
        out = np.empty(len(x), dtype=np.float64)
        for lo in range(0, len(x), batch_size):
            logits = self.forward(x[lo:lo + batch_size], training=False)
            out[lo:lo + batch_size] = L.softmax(logits)[:, 1]
        return out
