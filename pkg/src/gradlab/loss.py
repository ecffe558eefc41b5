"""Cross-entropy, MSE and the penalised objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .net import is_weight
from .regularize import RegularizerConfig

PROB_FLOOR = 1e-12
LOSSES = ("cross_entropy", "mse")


def cross_entropy(probs, label):
    """Negative log-likelihood of ``label`` under ``probs``."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[0]:
        raise ValueError(f"label {label} out of range for {probs.shape[0]} classes")
    return float(-np.log(max(probs[label], PROB_FLOOR)))


def batch_cross_entropy(probs_batch, labels):
    return float(np.mean([cross_entropy(p, y) for p, y in zip(probs_batch, labels)]))


def softmax_cross_entropy_grad(probs, label):
    """d(-ln p[label]) / d(logits) for a softmax output: ``p - onehot``."""
    g = np.array(probs, dtype=np.float64)
    g[label] -= 1.0
    return g


def mse(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - np.asarray(target, dtype=np.float64)) / pred.size


def onehot(label, k):
    v = np.zeros(k)
    v[label] = 1.0
    return v


def sample_loss(kind, probs, label):
    if kind == "cross_entropy":
        return cross_entropy(probs, label)
    if kind == "mse":
        return mse(probs, onehot(label, len(probs)))
    raise ValueError(f"unknown loss {kind!r}; expected one of {LOSSES}")


@dataclass(frozen=True)
class Objective:
    loss: str = "cross_entropy"
    penalty: RegularizerConfig = field(default_factory=RegularizerConfig)

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    @property
    def lam(self):
        return self.penalty.lam


def penalty_total(params, reg: RegularizerConfig):
    """Sum of R(w) over weight tensors; biases are exempt."""
    return sum(reg.value(v) for k, v in sorted(params.items()) if is_weight(k))


def penalty_total_grad(params, reg: RegularizerConfig):
    return {k: reg.grad(v) for k, v in params.items() if is_weight(k)}


def regularized_objective(data_loss, params, objective: Objective):
    """``data_loss + lambda * R(w)``."""
    lam = objective.lam
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0 or objective.penalty.penalty == "none":
        return float(data_loss)
    return float(data_loss + lam * penalty_total(params, objective.penalty))
