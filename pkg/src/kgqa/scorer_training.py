"""AdamW training loop for the edge scorer with cosine warm restarts and early stopping."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Protocol

import numpy as np

from .edge_scorer import EdgeBatch, ScorerConfig, ScorerParams, bce_loss, forward, loss_and_gradients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    clip_norm: float = 1.0
    batch_size: int = 1024
    max_epochs: int = 50
    early_stop_patience: int = 10
    restart_T0: int = 10
    restart_Tmult: int = 2
    lr_min: float = 1e-6
    pos_weight: float | None = None  # None: negatives / positives of the training set
    threshold: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.clip_norm, self.batch_size, self.max_epochs, self.restart_T0, self.restart_Tmult) <= 0:
            raise ValueError("learning rate, clip norm, batch size, epochs and restart periods must be positive")
        if self.weight_decay < 0 or self.lr_min < 0 or self.early_stop_patience < 1:
            raise ValueError("invalid weight_decay / lr_min / patience")

    def to_dict(self) -> dict:
        return asdict(self)


def cosine_warm_restart_lr(epoch: float, lr_max: float, lr_min: float, T0: int, Tmult: int) -> float:
    """Learning rate at (possibly fractional) ``epoch``.

    Cycles have lengths ``T0, T0*Tmult, ...``; within a cycle of length ``T``
    at offset ``t``: ``lr_min + (lr_max - lr_min) * (1 + cos(pi t / T)) / 2``.
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    start, T = 0.0, float(T0)
    while epoch >= start + T:
        start += T
        T *= Tmult
    t = epoch - start
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / T))


def clip_global_norm(grads: ScorerParams, max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; return the pre-clip norm."""
    norm = grads.global_norm()
    coef = max_norm / (norm + 1e-6)
    if coef < 1.0:
        for v in grads.arrays.values():
            v *= coef
    return norm


class AdamW:
    """Adam with decoupled weight decay (applied to every array)."""

    def __init__(self, params: ScorerParams, weight_decay: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.wd = weight_decay
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: ScorerParams, grads: ScorerParams, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p *= 1.0 - lr * self.wd
            p -= (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


class ExampleSet(Protocol):
    labels: np.ndarray

    def __len__(self) -> int: ...

    def batch(self, idx: np.ndarray) -> EdgeBatch: ...


def binary_prf(pred: np.ndarray, labels: np.ndarray) -> tuple[float, float, float]:
    tp = float(np.sum((pred == 1) & (labels == 1)))
    n_pred = float(np.sum(pred == 1))
    n_pos = float(np.sum(labels == 1))
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_pos if n_pos else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def predict(params: ScorerParams, cfg: ScorerConfig, data: ExampleSet, batch_size: int = 4096) -> np.ndarray:
    out = [forward(params, cfg, data.batch(np.arange(i, min(i + batch_size, len(data))))) for i in range(0, len(data), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(params: ScorerParams, cfg: ScorerConfig, data: ExampleSet, pos_weight: float, threshold: float = 0.5) -> dict:
    s = predict(params, cfg, data)
    p, r, f = binary_prf((s >= threshold).astype(int), data.labels)
    return {"loss": bce_loss(s, data.labels, pos_weight), "precision": p, "recall": r, "f1": f}


def label_frequency_baseline_f1(train_labels: np.ndarray, val_labels: np.ndarray) -> float:
    """Best F1 of two label-frequency predictors: always-positive, or positive with the training positive rate."""
    p_train = float(np.mean(train_labels))
    p_val = float(np.mean(val_labels))
    always = 2 * p_val / (1 + p_val) if p_val else 0.0
    stratified = 2 * p_val * p_train / (p_val + p_train) if p_val + p_train else 0.0
    return max(always, stratified)


def train(
    params0: ScorerParams,
    cfg: ScorerConfig,
    train_set: ExampleSet,
    val_set: ExampleSet,
    tcfg: TrainConfig = TrainConfig(),
    progress=None,
) -> tuple[ScorerParams, list[dict]]:
    """Train from ``params0``; return the checkpoint with the best validation F1 and the per-epoch log."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be nonempty")
    n_pos = int(np.sum(train_set.labels == 1))
    n_neg = len(train_set) - n_pos
    if n_pos == 0:
        raise ValueError("training set has no positive examples")
    pos_weight = tcfg.pos_weight if tcfg.pos_weight is not None else n_neg / n_pos

    params = params0.copy()
    opt = AdamW(params, tcfg.weight_decay, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
    rng = np.random.default_rng(tcfg.seed)
    n_batches = math.ceil(len(train_set) / tcfg.batch_size)
    best = params.copy()
    best_f1 = -1.0
    stale = 0
    history = []
    for epoch in range(tcfg.max_epochs):
        order = rng.permutation(len(train_set))
        total = 0.0
        max_clipped = 0.0
        for b in range(n_batches):
            idx = order[b * tcfg.batch_size : (b + 1) * tcfg.batch_size]
            lr = cosine_warm_restart_lr(epoch + b / n_batches, tcfg.learning_rate, tcfg.lr_min, tcfg.restart_T0, tcfg.restart_Tmult)
            loss, grads = loss_and_gradients(params, cfg, train_set.batch(idx), train_set.labels[idx], pos_weight, True, rng)
            clip_global_norm(grads, tcfg.clip_norm)
            max_clipped = max(max_clipped, grads.global_norm())
            opt.step(params, grads, lr)
            total += loss * len(idx)
        val = evaluate(params, cfg, val_set, pos_weight, tcfg.threshold)
        row = {
            "epoch": epoch,
            "lr": cosine_warm_restart_lr(epoch, tcfg.learning_rate, tcfg.lr_min, tcfg.restart_T0, tcfg.restart_Tmult),
            "train_loss": total / len(train_set),
            "val_loss": val["loss"],
            "val_precision": val["precision"],
            "val_recall": val["recall"],
            "val_f1": val["f1"],
            "max_clipped_grad_norm": max_clipped,
        }
        history.append(row)
        if progress is not None:
            progress(row)
        log.info("epoch %d loss %.4f val_f1 %.4f", epoch, row["train_loss"], row["val_f1"])
        if val["f1"] > best_f1:
            best_f1 = val["f1"]
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= tcfg.early_stop_patience:
                break
    return best, history
