"""Linear-head training: softmax classifier, Adam, early stopping, checkpoints.

The backbone is abstracted to a feature extractor; the trainable part is a
single linear layer W h + b followed by softmax, optimized with from-scratch
Adam on mini-batches.  Early stopping watches validation macro F1: strict
improvement resets patience, ties do not, and the returned parameters are a
snapshot from the best epoch, never a later one.

Checkpoint file layout (all little-endian):
magic ``GBHD`` (4 bytes), version u16, D u32, C u32, seed u64, meta length
u32, meta JSON (UTF-8, sorted keys), W as C*D float64 row-major, b as C
float64, then CRC32 of everything before it as u32.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import imageops as ops
from .dataset import NormalizationStats, normalize_image
from .metrics import LengthMismatch, confusion_matrix, f1_scores
from .rng import SplitMix64, derive_seed

CHECKPOINT_MAGIC = b"GBHD"
CHECKPOINT_VERSION = 1


class NonFiniteLogit(Exception):
    """A logit is NaN or infinite."""


class DimensionMismatch(Exception):
    """Feature, parameter, or label dimensions disagree."""


class ShapeMismatch(Exception):
    """Optimizer state or gradient shape disagrees with the parameters."""


class EmptyTrainSet(Exception):
    """No training samples."""


class DegenerateValidation(Exception):
    """Validation set empty or single-class; macro F1 would be meaningless."""


class CorruptCheckpoint(Exception):
    """Checkpoint fails magic, length, or checksum validation."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LinearHead:
    """Softmax classifier parameters: W is (C, D), b is (C,)."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.ndim != 1 or self.W.shape[0] != self.b.shape[0]:
            raise DimensionMismatch(
                f"W {self.W.shape} and b {self.b.shape} are inconsistent")
        if not (np.isfinite(self.W).all() and np.isfinite(self.b).all()):
            raise ValueError("head parameters must be finite")

    @classmethod
    def zeros(cls, class_count: int, dim: int) -> "LinearHead":
        return cls(np.zeros((class_count, dim)), np.zeros(class_count))


@dataclass
class AdamState:
    """First/second moment accumulators over a flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_macro_f1: float
    is_best: bool


class PixelFeatureExtractor:
    """Resize, normalize, flatten: the desk-scale stand-in for a backbone.

    Output dimension is 3 * side * side (channel-major flattening), and the
    mapping is pure, so features can be extracted in any order or thread.
    Any object with a matching ``dim`` and ``__call__`` can replace it.
    """

    def __init__(self, side: int = 32, stats: NormalizationStats | None = None):
        if side < 1:
            raise ValueError(f"side must be >= 1, got {side}")
        self.side = side
        self.stats = stats if stats is not None else NormalizationStats()

    @property
    def dim(self) -> int:
        return 3 * self.side * self.side

    def __call__(self, img: np.ndarray) -> np.ndarray:
        resized = ops.resize_bilinear(img, self.side, self.side)
        return normalize_image(resized, self.stats).ravel()


def softmax(logits) -> np.ndarray:
    """Max-subtracted exponential normalization of one logit vector."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise NonFiniteLogit(f"logits contain non-finite values: {logits}")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    if not np.isfinite(logits).all():
        raise NonFiniteLogit("logits contain non-finite values")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(batch_scores, labels) -> float:
    """Mean negative log-probability of the true class, floor 1e-12."""
    probs = np.asarray(batch_scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.ndim != 1 or probs.shape[0] != labels.shape[0]:
        raise LengthMismatch(f"scores {probs.shape} vs labels {labels.shape}")
    if probs.shape[0] == 0:
        raise LengthMismatch("empty batch")
    if np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError("probability rows must sum to 1 within 1e-6")
    true_p = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(true_p, 1e-12)).mean())


def predict_scores(head: LinearHead, features) -> np.ndarray:
    """Softmax(W h + b) for every feature row; returns (N, C) probabilities."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != head.W.shape[1]:
        raise DimensionMismatch(
            f"features {features.shape} vs W {head.W.shape}")
    return _softmax_rows(features @ head.W.T + head.b)


def head_gradient(head: LinearHead, features, labels) -> tuple:
    """Analytic cross-entropy gradient: ((p - onehot)^T h / B, mean residual)."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[1] != head.W.shape[1]:
        raise DimensionMismatch(f"features {features.shape} vs W {head.W.shape}")
    if labels.shape[0] != features.shape[0]:
        raise DimensionMismatch(f"{features.shape[0]} features vs {labels.shape[0]} labels")
    batch = features.shape[0]
    probs = _softmax_rows(features @ head.W.T + head.b)
    residual = probs
    residual[np.arange(batch), labels] -= 1.0
    grad_w = residual.T @ features / batch
    grad_b = residual.mean(axis=0)
    return grad_w, grad_b


def adam_step(params, grads, state: AdamState, cfg: TrainConfig) -> tuple:
    """One Adam update; returns (new_params, new_state) without mutation."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeMismatch(
            f"params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads * grads
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    new_params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return new_params, AdamState(m=m, v=v, t=t)


def _flatten_head(head: LinearHead) -> np.ndarray:
    return np.concatenate([head.W.ravel(), head.b])


def _unflatten_head(flat: np.ndarray, class_count: int, dim: int) -> LinearHead:
    w_size = class_count * dim
    return LinearHead(flat[:w_size].reshape(class_count, dim).copy(),
                      flat[w_size:].copy())


def _macro_f1_of(head: LinearHead, features: np.ndarray, labels: np.ndarray) -> float:
    probs = predict_scores(head, features)
    preds = np.argmax(probs, axis=1)
    cm = confusion_matrix(preds, labels, head.W.shape[0])
    return f1_scores(cm)[1]


def fit(train, validation, head: LinearHead, cfg: TrainConfig,
        val_scorer=None) -> tuple:
    """Train the head with Adam and early stopping on validation macro F1.

    ``train`` and ``validation`` are (features, labels) pairs.  Each epoch
    shuffles the training set with a generator seeded from (cfg.seed,
    epoch), steps Adam once per mini-batch, then scores validation macro F1.
    Strictly higher F1 marks a new best and resets patience; after
    ``cfg.patience`` consecutive non-improving epochs (or at max_epochs)
    training stops and the best epoch's snapshot is returned with the logs.

    ``val_scorer``, when given, replaces the validation scoring: it is
    called as val_scorer(head, epoch) and must return the score to monitor.
    """
    x_train, y_train = np.asarray(train[0], dtype=np.float64), np.asarray(train[1], dtype=np.int64)
    x_val, y_val = np.asarray(validation[0], dtype=np.float64), np.asarray(validation[1], dtype=np.int64)
    if x_train.shape[0] == 0:
        raise EmptyTrainSet("no training samples")
    if x_val.shape[0] == 0 or np.unique(y_val).size < 2:
        raise DegenerateValidation("validation needs >= 2 classes present")
    class_count, dim = head.W.shape
    if x_train.shape[1] != dim or x_val.shape[1] != dim:
        raise DimensionMismatch(f"features must have dimension {dim}")

    params = _flatten_head(head)
    state = AdamState.zeros(params.size)
    best_f1 = -np.inf
    best_params = params.copy()
    stall = 0
    logs = []
    n = x_train.shape[0]

    for epoch in range(1, cfg.max_epochs + 1):
        order = list(range(n))
        SplitMix64(derive_seed(cfg.seed, "train-epoch", epoch)).shuffle(order)
        order = np.array(order)

        batch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            current = _unflatten_head(params, class_count, dim)
            probs = predict_scores(current, x_train[idx])
            batch_losses.append(cross_entropy(probs, y_train[idx]))
            grad_w, grad_b = head_gradient(current, x_train[idx], y_train[idx])
            grads = np.concatenate([grad_w.ravel(), grad_b])
            params, state = adam_step(params, grads, state, cfg)

        epoch_head = _unflatten_head(params, class_count, dim)
        if val_scorer is not None:
            score = float(val_scorer(epoch_head, epoch))
        else:
            score = _macro_f1_of(epoch_head, x_val, y_val)

        improved = score > best_f1
        if improved:
            best_f1 = score
            best_params = params.copy()
            stall = 0
        else:
            stall += 1
        logs.append(EpochLog(epoch=epoch, train_loss=float(np.mean(batch_losses)),
                             val_macro_f1=score, is_best=improved))
        if stall >= cfg.patience:
            break

    return _unflatten_head(best_params, class_count, dim), logs


def write_epoch_log(path, logs) -> None:
    """Write epoch logs as JSONL, one object per epoch."""
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            fh.write(json.dumps({
                "epoch": log.epoch,
                "train_loss": log.train_loss,
                "val_macro_f1": log.val_macro_f1,
                "is_best": log.is_best,
            }, sort_keys=True) + "\n")


def save_checkpoint(path, head: LinearHead, seed: int, meta: dict | None = None) -> None:
    """Write the documented binary checkpoint; see the module docstring."""
    class_count, dim = head.W.shape
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    body = (
        CHECKPOINT_MAGIC
        + struct.pack("<HIIQI", CHECKPOINT_VERSION, dim, class_count,
                      seed & 0xFFFFFFFFFFFFFFFF, len(meta_blob))
        + meta_blob
        + head.W.astype("<f8").tobytes(order="C")
        + head.b.astype("<f8").tobytes()
    )
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path) -> tuple:
    """Read a checkpoint back; returns (LinearHead, seed, meta dict).

    Raises CorruptCheckpoint on bad magic, version, length, or checksum.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    header_size = 4 + struct.calcsize("<HIIQI")
    if len(blob) < header_size + 4:
        raise CorruptCheckpoint(f"{path}: file too short ({len(blob)} bytes)")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic {blob[:4]!r}")
    version, dim, class_count, seed, meta_len = struct.unpack(
        "<HIIQI", blob[4:header_size])
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported version {version}")
    expected = header_size + meta_len + 8 * (class_count * dim + class_count) + 4
    if len(blob) != expected:
        raise CorruptCheckpoint(
            f"{path}: length {len(blob)} != expected {expected}")
    body, crc_bytes = blob[:-4], blob[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(body):
        raise CorruptCheckpoint(f"{path}: checksum mismatch")
    try:
        meta = json.loads(blob[header_size:header_size + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable metadata") from exc
    offset = header_size + meta_len
    w_bytes = 8 * class_count * dim
    w = np.frombuffer(blob, dtype="<f8", count=class_count * dim,
                      offset=offset).reshape(class_count, dim).copy()
    b = np.frombuffer(blob, dtype="<f8", count=class_count,
                      offset=offset + w_bytes).copy()
    return LinearHead(w, b), seed, meta
