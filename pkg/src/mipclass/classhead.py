"""Linear classification head with imbalance-aware weighted cross-entropy.

Class weights follow w_c = (1/N_c) / Σ_i (1/N_i), so each class's total
weight-mass is equal (w_c·N_c is constant).  The loss is

    L = −(1/N) Σ_i Σ_c w_c · y_{i,c} · log(ŷ_{i,c})

with the log floored at 1e-12.  Features come from a fixed pooled-means
extractor (global mean + g×g grid-cell means per channel); the head is a
single linear layer trained by momentum SGD under a cosine-annealed
learning rate with linear warm-up.  Everything runs in float64 and is
bit-deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, EmptyClass
from .mipbuild import MipStack

N_CLASSES = 3
LOG_FLOOR = 1e-12
DEFAULT_POOL_GRID = 4


@dataclass(frozen=True)
class ClassWeights:
    """Per-class weights and the counts they were derived from."""

    w: tuple[float, float, float]
    counts: tuple[int, int, int]

    def __post_init__(self) -> None:
        if len(self.w) != N_CLASSES or len(self.counts) != N_CLASSES:
            raise ValueError("weights and counts must have 3 classes")
        if any(wc <= 0 for wc in self.w):
            raise ValueError(f"weights must be positive, got {self.w}")
        if abs(sum(self.w) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got sum {sum(self.w)}")
        masses = [wc * nc for wc, nc in zip(self.w, self.counts)]
        ref = masses[0]
        if any(abs(m - ref) > 1e-9 * max(abs(ref), 1e-300) for m in masses):
            raise ValueError(f"w_c * N_c must be constant across classes, got {masses}")


def class_weights(counts) -> ClassWeights:
    """Inverse-frequency weights: w_c = (1/N_c) / Σ_i (1/N_i)."""
    counts = tuple(int(n) for n in counts)
    if len(counts) != N_CLASSES:
        raise DimMismatch(f"need 3 class counts, got {len(counts)}")
    if any(n < 1 for n in counts):
        raise EmptyClass(f"every class needs >= 1 sample, got counts {counts}")
    inv = [1.0 / n for n in counts]
    total = math.fsum(inv)
    return ClassWeights(w=tuple(v / total for v in inv), counts=counts)


def uniform_weights() -> ClassWeights:
    """Natural weighting: plain cross-entropy, w_c = 1/3."""
    third = 1.0 / 3.0
    return ClassWeights(w=(third, third, third), counts=(1, 1, 1))


@dataclass(frozen=True)
class HeadParams:
    """Linear head: logits = f @ W + b."""

    W: np.ndarray  # (D, 3)
    b: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or W.shape[1] != N_CLASSES:
            raise DimMismatch(f"W must be (D, 3), got {W.shape}")
        if b.shape != (N_CLASSES,):
            raise DimMismatch(f"b must be (3,), got {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("head parameters must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "HeadParams":
        return cls(np.zeros((dim, N_CLASSES)), np.zeros(N_CLASSES))


@dataclass(frozen=True)
class LossValue:
    value: float
    batch_size: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"loss must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch: int = 10
    lr_max: float = 1e-4
    warmup_epochs: int = 5
    lr_min: float = 0.0
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.epochs > self.warmup_epochs >= 0:
            raise ValueError(
                f"need epochs > warmup_epochs >= 0, got {self.epochs}, {self.warmup_epochs}"
            )
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if not self.lr_max > self.lr_min >= 0:
            raise ValueError(f"need lr_max > lr_min >= 0, got {self.lr_max}, {self.lr_min}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")


def feature_dim(grid: int = DEFAULT_POOL_GRID) -> int:
    return 4 * (1 + grid * grid)


def extract_features(stack: MipStack, grid: int = DEFAULT_POOL_GRID) -> np.ndarray:
    """Pooled-means feature vector, length 4·(1 + g²), channel-major.

    Per channel: the global mean, then the g×g grid-cell means in cell
    row-major order.  Cells split each axis into g near-equal parts with
    the remainder pixels going to the last cell.
    """
    if not stack.normalized:
        raise ValueError("features are extracted from normalized stacks")
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    channels = stack.channels.astype(np.float64)
    _, w, h = channels.shape
    x_edges = [0] + [(w // grid) * (i + 1) for i in range(grid - 1)] + [w]
    y_edges = [0] + [(h // grid) * (i + 1) for i in range(grid - 1)] + [h]
    features = np.empty(feature_dim(grid), dtype=np.float64)
    pos = 0
    for c in range(4):
        features[pos] = channels[c].mean()
        pos += 1
        for xi in range(grid):
            for yi in range(grid):
                cell = channels[c, x_edges[xi] : x_edges[xi + 1], y_edges[yi] : y_edges[yi + 1]]
                features[pos] = cell.mean() if cell.size else 0.0
                pos += 1
    return features.astype(np.float32)


def _as_batch(features: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise DimMismatch(f"features must be (D,) or (N, D), got shape {arr.shape}")


def forward(features: np.ndarray, params: HeadParams) -> np.ndarray:
    """Softmax probabilities for one feature vector or a batch of them."""
    batch, squeeze = _as_batch(features)
    if batch.shape[1] != params.dim:
        raise DimMismatch(f"feature dim {batch.shape[1]} != head dim {params.dim}")
    logits = batch @ params.W + params.b
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return probs[0] if squeeze else probs


def _check_batch(probs: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or probs.shape[1] != N_CLASSES:
        raise DimMismatch(f"probs must be (N, 3), got {probs.shape}")
    if labels.shape != (probs.shape[0],):
        raise DimMismatch(f"labels shape {labels.shape} != ({probs.shape[0]},)")
    if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
        raise ValueError(f"labels must be in 0..2, got range {labels.min()}..{labels.max()}")
    return probs, labels.astype(np.int64)


def weighted_ce(probs: np.ndarray, labels: np.ndarray, weights: ClassWeights) -> LossValue:
    """Eq.-style weighted cross-entropy over a batch of simplex rows."""
    probs, labels = _check_batch(probs, labels)
    n = probs.shape[0]
    if n == 0:
        raise DimMismatch("empty batch")
    w = np.asarray(weights.w, dtype=np.float64)
    true_probs = np.maximum(probs[np.arange(n), labels], LOG_FLOOR)
    value = float(-(w[labels] * np.log(true_probs)).sum() / n)
    return LossValue(value=value, batch_size=n)


def grad_weighted_ce(
    features: np.ndarray, labels: np.ndarray, params: HeadParams, weights: ClassWeights
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic (dW, db): per sample dz_i = w_{y_i}·(ŷ_i − e_{y_i})/N."""
    batch, _ = _as_batch(features)
    probs = forward(batch, params)
    probs, labels = _check_batch(probs, labels)
    n = batch.shape[0]
    w = np.asarray(weights.w, dtype=np.float64)
    dz = probs.copy()
    dz[np.arange(n), labels] -= 1.0
    dz *= (w[labels] / n)[:, None]
    return batch.T @ dz, dz.sum(axis=0)


def lr_schedule(t: int, cfg: TrainConfig) -> float:
    """Linear warm-up to lr_max, then cosine annealing down to lr_min."""
    if not 0 <= t < cfg.epochs:
        raise ValueError(f"epoch {t} outside [0, {cfg.epochs})")
    w = cfg.warmup_epochs
    if t < w:
        return cfg.lr_max * (t + 1) / w
    span = cfg.epochs - w - 1
    if span == 0:
        return cfg.lr_max
    phase = math.pi * (t - w) / span
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(phase))


@dataclass(frozen=True)
class TrainResult:
    params: HeadParams
    loss_trace: np.ndarray  # per-epoch full-data loss, f64
    weights: ClassWeights
    config: TrainConfig
    extras: dict = field(default_factory=dict)


def train_head(
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    weights: ClassWeights,
) -> TrainResult:
    """Momentum SGD from zero-initialized params; deterministic in cfg.seed."""
    feats = np.asarray(features, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    if feats.ndim != 2 or feats.shape[0] != labs.shape[0]:
        raise DimMismatch(f"features {feats.shape} vs labels {labs.shape}")
    n, dim = feats.shape
    W = np.zeros((dim, N_CLASSES))
    b = np.zeros(N_CLASSES)
    vW = np.zeros_like(W)
    vb = np.zeros_like(b)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    trace = np.empty(cfg.epochs, dtype=np.float64)
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        perm = rng.permutation(n)
        sgd_epoch(W, b, vW, vb, feats, labs, weights, lr, cfg.momentum, cfg.batch, perm)
        trace[epoch] = weighted_ce(forward(feats, HeadParams(W, b)), labs, weights).value
    return TrainResult(
        params=HeadParams(W, b),
        loss_trace=trace,
        weights=weights,
        config=cfg,
        extras={"n_samples": int(n), "feature_dim": int(dim)},
    )


def sgd_epoch(
    W: np.ndarray,
    b: np.ndarray,
    vW: np.ndarray,
    vb: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    weights: ClassWeights,
    lr: float,
    momentum: float,
    batch_size: int,
    perm: np.ndarray,
) -> None:
    """One epoch of momentum-SGD mini-batches, updating arrays in place.

    Exposed separately so callers can swap the feature matrix between
    epochs (e.g. re-augmented inputs) while keeping one optimizer state.
    """
    for start in range(0, perm.shape[0], batch_size):
        idx = perm[start : start + batch_size]
        dW, db = grad_weighted_ce(features[idx], labels[idx], HeadParams(W, b), weights)
        vW *= momentum
        vW -= lr * dW
        vb *= momentum
        vb -= lr * db
        W += vW
        b += vb


def predict_labels(probs: np.ndarray) -> np.ndarray:
    """Argmax per row; ties resolve to the lower class index."""
    probs = np.asarray(probs)
    if probs.ndim == 1:
        probs = probs[None, :]
    return probs.argmax(axis=1)
