"""Training loop: Adam + cosine annealing, mixup, label smoothing, clipping,
early stopping on validation accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from srspla.authenticators import layers as L
from srspla.authenticators.network import (
    SeResNet1d,
    SeResNet1dConfig,
    NonFiniteActivation,
)
from srspla.features import FEATURE_DIM, FEATURE_SLICES
from srspla.authenticators.pearson import PearsonAuthenticator

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
STD_FLOOR = 1e-8


class Diverged(Exception):
    """Training loss went non-finite."""


class EmptySplit(Exception):
    pass


class DimensionMismatch(Exception):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs_max: int = 100
    label_smoothing: float = 0.1
    mixup_alpha: float = 0.2
    grad_clip_norm: float = 1.0
    early_stop_patience: int = 15
    batch_size: int = 64
    seed: int = 0
    class_weight: str | None = None  # optional "balanced"; off by default

    def validate(self) -> None:
        positive = ["lr", "weight_decay", "epochs_max", "grad_clip_norm",
                    "early_stop_patience", "batch_size"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.label_smoothing < 0.5:
            raise ValueError("label_smoothing must lie in [0, 0.5)")
        if self.mixup_alpha < 0:
            raise ValueError("mixup_alpha must be >= 0")
        if self.class_weight not in (None, "balanced"):
            raise ValueError("class_weight must be None or 'balanced'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def cosine_lr(base_lr: float, epoch: int, epochs_max: int) -> float:
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / epochs_max))


def smooth_targets(labels: np.ndarray, eps: float) -> np.ndarray:
    """Two-class smoothed one-hot rows: true class 1-eps/2, other eps/2."""
    t = np.full((len(labels), 2), eps / 2.0)
    t[np.arange(len(labels)), labels] = 1.0 - eps / 2.0
    return t


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


class Adam:
    """Adam with L2 weight decay added to the (already clipped) gradients."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, weight_decay: float):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = ADAM_BETAS
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for k, p in self.params.items():
            g = grads[k].astype(np.float64)
            if self.weight_decay:
                g = g + self.weight_decay * p
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            p -= (self.lr * mhat / (np.sqrt(vhat) + ADAM_EPS)).astype(p.dtype)


@dataclass
class TrainedModel:
    """Best-validation-epoch network plus the training-split standardization."""

    model_config: SeResNet1dConfig
    train_config: TrainConfig
    state: dict[str, np.ndarray]
    feat_mean: np.ndarray
    feat_std: np.ndarray
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    _net: SeResNet1d | None = field(default=None, repr=False)

    def network(self) -> SeResNet1d:
        if self._net is None:
            self._net = SeResNet1d(self.model_config, seed=0)
            self._net.load_state(self.state)
        return self._net

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float32) - self.feat_mean) / self.feat_std

    def score(self, features: np.ndarray) -> np.ndarray:
        """p_legit per row (inference mode)."""
        features = np.atleast_2d(features)
        if features.shape[1] != self.model_config.input_dim:
            raise DimensionMismatch(
                f"feature rows have dim {features.shape[1]}, "
                f"model expects {self.model_config.input_dim}")
        return self.network().predict_proba(self.standardize(features))


def _val_accuracy(net: SeResNet1d, x: np.ndarray, y: np.ndarray) -> float:
    p = net.predict_proba(x)
    pred = (p >= 0.5).astype(np.int64)
    return float((pred == y).mean())


def train(train_x: np.ndarray, train_y: np.ndarray,
          val_x: np.ndarray, val_y: np.ndarray,
          train_config: TrainConfig | None = None,
          model_config: SeResNet1dConfig | None = None,
          verbose: bool = False) -> TrainedModel:
    """Train the classifier; deterministic for a fixed seed.

    Standardization statistics come from the training split only. Mixup draws
    one Beta(alpha, alpha) coefficient per batch and mixes the already
    label-smoothed targets. The returned model carries the parameters of the
    best-validation-accuracy epoch (ties keep the earlier epoch).
    """
    tc = train_config or TrainConfig()
    mc = model_config or SeResNet1dConfig()
    tc.validate()
    mc.validate()
    if len(train_x) == 0 or len(val_x) == 0:
        raise EmptySplit("train and validation splits must be non-empty")
    if train_x.shape[1] != mc.input_dim:
        raise DimensionMismatch(f"train dim {train_x.shape[1]} != {mc.input_dim}")

    # standardization is stored (and therefore applied) at f32 precision,
    # so in-memory scoring matches a saved-then-loaded model bit for bit
    mean = train_x.mean(axis=0, dtype=np.float64).astype(np.float32)
    std = np.maximum(train_x.std(axis=0, dtype=np.float64), STD_FLOOR).astype(np.float32)
    xs = ((train_x - mean) / std).astype(np.float32)
    vs = ((val_x - mean) / std).astype(np.float32)
    y = np.asarray(train_y, dtype=np.int64)
    vy = np.asarray(val_y, dtype=np.int64)

    net = SeResNet1d(mc, seed=tc.seed)
    data_rng = np.random.default_rng(tc.seed + 1)
    adam = Adam(net.named_params(), tc.lr, tc.weight_decay)
    criterion = L.SoftmaxCrossEntropy()

    base_targets = smooth_targets(y, tc.label_smoothing)
    weights = None
    if tc.class_weight == "balanced":
        counts = np.bincount(y, minlength=2).astype(np.float64)
        per_class = len(y) / (2.0 * np.maximum(counts, 1.0))
        weights = per_class[y]

    history: list[dict] = []
    best_state: dict[str, np.ndarray] | None = None
    best_acc = -1.0
    best_epoch = -1
    since_improve = 0

    for epoch in range(tc.epochs_max):
        lr = cosine_lr(tc.lr, epoch, tc.epochs_max)
        adam.lr = lr
        order = data_rng.permutation(len(xs))
        losses = []
        for lo in range(0, len(order), tc.batch_size):
            sel = order[lo:lo + tc.batch_size]
            xb = xs[sel]
            tb = base_targets[sel]
            wb = weights[sel] if weights is not None else None
            if tc.mixup_alpha > 0.0:
                lam = data_rng.beta(tc.mixup_alpha, tc.mixup_alpha)
                perm = data_rng.permutation(len(sel))
                xb = lam * xb + (1.0 - lam) * xb[perm]
                tb = lam * tb + (1.0 - lam) * tb[perm]
                if wb is not None:
                    wb = lam * wb + (1.0 - lam) * wb[perm]
            try:
                logits = net.forward(xb, training=True)
            except NonFiniteActivation as exc:
                raise Diverged(str(exc)) from exc
            loss = criterion.forward(logits, tb, sample_weight=wb)
            if not math.isfinite(loss):
                raise Diverged(f"non-finite loss at epoch {epoch}")
            losses.append(loss)
            net.zero_grads()
            net.backward(criterion.backward())
            grads = net.named_grads()
            clip_global_norm(grads, tc.grad_clip_norm)
            adam.step(grads)

        val_acc = _val_accuracy(net, vs, vy)
        history.append({"epoch": epoch, "lr": lr,
                        "train_loss": float(np.mean(losses)),
                        "val_accuracy": val_acc})
        if verbose:
            print(f"epoch {epoch:3d}  lr {lr:.2e}  loss {np.mean(losses):.4f}  "
                  f"val_acc {val_acc:.4f}")
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_state = {k: v.copy() for k, v in net.state_tensors().items()}
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= tc.early_stop_patience:
                break

    assert best_state is not None
    return TrainedModel(
        model_config=mc,
        train_config=tc,
        state=best_state,
        feat_mean=mean,
        feat_std=std,
        history=history,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc,
    )


def score_batch(scorer, feature_rows: np.ndarray) -> np.ndarray:
    """Unified [0, 1] scores for either authenticator; order-preserving.

    TrainedModel consumes full feature rows; the Pearson baseline consumes the
    amplitude slice (or bare amplitude rows), with correlations mapped through
    (rho + 1) / 2.
    """
    feature_rows = np.atleast_2d(feature_rows)
    if isinstance(scorer, TrainedModel):
        return scorer.score(feature_rows)
    if isinstance(scorer, PearsonAuthenticator):
        amp = FEATURE_SLICES["amplitude"]
        if feature_rows.shape[1] == FEATURE_DIM:
            rows = feature_rows[:, amp]
        elif feature_rows.shape[1] == amp.stop - amp.start:
            rows = feature_rows
        else:
            raise DimensionMismatch(
                f"expected {FEATURE_DIM} or {amp.stop - amp.start} columns, "
                f"got {feature_rows.shape[1]}")
        return scorer.unified_scores(rows)
    raise TypeError(f"unsupported scorer type {type(scorer)!r}")
