"""Mini-batch training with class-weighted loss and F1 threshold selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySplit, NoPositives, TrainingDiverged
from .metrics import f1_score
from .models import Network
from .nn import Adam, weighted_bce
from .windowing import BeatWindow, Window


@dataclass
class TrainConfig:
    epochs: int = 2
    batch_size: int = 32
    lr: float = 1e-3
    pos_weight: float | str = "auto"
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_f1: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    pos_weight: float = 1.0


def windows_to_arrays(windows: list[Window] | list[BeatWindow],
                      dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into model inputs [n, 1, len] and labels [n]."""
    if not windows:
        raise EmptySplit("no windows to assemble")
    values = [w.samples if isinstance(w, Window) else w.rr_s for w in windows]
    x = np.stack(values).astype(dtype)[:, None, :]
    y = np.array([w.label for w in windows], dtype=dtype)
    return x, y


def resolve_pos_weight(cfg_value: float | str, labels: np.ndarray) -> float:
    """'auto' = negative count / positive count on the training split."""
    if cfg_value != "auto":
        value = float(cfg_value)
        if value <= 0:
            raise ValueError(f"pos_weight must be > 0, got {value}")
        return value
    n_pos = int(np.sum(labels > 0.5))
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return 1.0
    return n_neg / n_pos


def predict_probs(model: Network, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode probabilities over a (possibly large) input array."""
    chunks = [
        model.forward(x[i : i + batch_size], train=False)
        for i in range(0, x.shape[0], batch_size)
    ]
    return np.concatenate(chunks) if chunks else np.empty(0, dtype=model.dtype)


def select_threshold(probs, labels) -> float:
    """Decision threshold maximizing F1 (prediction rule: prob >= threshold).

    Candidates are 0, 1, and the midpoints between consecutive distinct
    sorted probabilities; ties prefer the smallest threshold.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if p.size == 0 or p.size != y.size:
        raise ValueError("need equally many probs and labels, at least one")
    if not y.any():
        raise NoPositives("threshold selection needs at least one positive label")

    distinct = np.unique(p)
    candidates = np.concatenate(([0.0], (distinct[:-1] + distinct[1:]) / 2.0, [1.0]))
    best_t = 0.0
    best_f1 = -1.0
    for t in candidates:
        f1 = f1_score(p >= t, y)
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    return best_t


def train(model: Network, train_windows, val_windows, cfg: TrainConfig,
          ) -> tuple[Network, float, TrainHistory]:
    """Shuffled mini-batch Adam on weighted BCE; threshold from validation F1.

    Returns the trained model (updated in place), the selected decision
    threshold, and per-epoch history.  Raises TrainingDiverged on a
    non-finite loss.
    """
    if not train_windows or not val_windows:
        raise EmptySplit("both training and validation splits must be non-empty")
    x_train, y_train = windows_to_arrays(train_windows, dtype=model.dtype)
    x_val, y_val = windows_to_arrays(val_windows, dtype=model.dtype)

    pos_weight = resolve_pos_weight(cfg.pos_weight, y_train)
    history = TrainHistory(pos_weight=pos_weight)
    optimizer = Adam(model.named_params(), lr=cfg.lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))

    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            probs = model.forward(x_train[idx], train=True)
            loss, grad_logits = weighted_bce(probs, y_train[idx], pos_weight)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}: {loss}")
            model.zero_grads()
            model.backward(grad_logits, wrt="logits")
            optimizer.step(model.named_params(), model.named_grads())
            losses.append(loss)

        val_probs = predict_probs(model, x_val)
        if y_val.max() > 0:
            epoch_thr = select_threshold(val_probs, y_val)
            val_f1 = f1_score(val_probs >= epoch_thr, y_val)
        else:
            val_f1 = 0.0
        history.epochs.append(
            EpochStats(epoch=epoch, train_loss=float(np.mean(losses)), val_f1=val_f1)
        )

    val_probs = predict_probs(model, x_val)
    threshold = select_threshold(val_probs, y_val) if y_val.max() > 0 else 0.5
    return model, threshold, history
