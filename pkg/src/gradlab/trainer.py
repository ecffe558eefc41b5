"""Training loop: splits, batching, one-epoch updates, evaluation and ``fit``.

Batch gradients are the mean of per-sample gradients, summed in ascending
sample-index order so the result does not depend on batch shuffling.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import optim
from .loss import Objective, penalty_total, penalty_total_grad, sample_loss
from .net import Network
from .regularize import EarlyStopMonitor, augment
from .tensor import Rng, shuffle

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class Dataset:
    samples: list
    num_classes: int

    def __post_init__(self):
        shapes = {np.shape(x) for x, _ in self.samples}
        if len(shapes) > 1:
            raise ValueError(f"samples have mixed input shapes {sorted(shapes)}")
        for i, (_, y) in enumerate(self.samples):
            if not 0 <= int(y) < self.num_classes:
                raise ValueError(f"sample {i}: label {y} not in [0, {self.num_classes})")

    def __len__(self):
        return len(self.samples)

    @property
    def input_shape(self):
        return np.shape(self.samples[0][0])

    def subset(self, indices):
        return Dataset([self.samples[i] for i in indices], self.num_classes)


@dataclass(frozen=True)
class BatchPolicy:
    kind: str = "full_batch"
    size: int | None = None

    def __post_init__(self):
        if self.kind not in ("full_batch", "stochastic", "mini_batch"):
            raise ConfigurationError(f"unknown batch policy {self.kind!r}")
        if self.kind == "mini_batch" and (self.size is None or self.size < 1):
            raise ConfigurationError("mini_batch needs a size >= 1")

    @classmethod
    def parse(cls, text):
        kind, _, size = text.strip().partition(":")
        return cls(kind, int(size) if size else None)

    def __str__(self):
        return f"mini_batch:{self.size}" if self.kind == "mini_batch" else self.kind


@dataclass
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: float
    elapsed_ms: float = 0.0


def split_dataset(data: Dataset, fractions=(0.8, 0.1, 0.1), rng: Rng | None = None):
    """Shuffle and cut into (train, val, test).

    Validation and test sizes are ``floor(n * fraction)``; train takes the rest.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigurationError(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"fractions sum to {sum(fractions)}, not 1")
    n = len(data)
    order = shuffle(range(n), rng if rng is not None else Rng(0).stream("split"))
    n_val = math.floor(n * fractions[1] + 1e-9)
    n_test = math.floor(n * fractions[2] + 1e-9)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ConfigurationError(
            f"{n} samples split {fractions} leaves an empty subset "
            f"(train={n_train}, val={n_val}, test={n_test})")
    return (data.subset(order[:n_train]), data.subset(order[n_train:n_train + n_val]),
            data.subset(order[n_train + n_val:]))


def iterate_batches(n, policy: BatchPolicy, rng: Rng | None = None):
    """Index batches for one epoch over ``n`` training samples."""
    if n < 1:
        raise ConfigurationError("training set is empty")
    if policy.kind == "full_batch":
        return [list(range(n))]
    if policy.kind == "stochastic":
        return [[i] for i in shuffle(range(n), rng)]
    if policy.size > n:
        raise ConfigurationError(f"mini-batch size {policy.size} exceeds {n} samples")
    order = shuffle(range(n), rng)
    return [order[i:i + policy.size] for i in range(0, n, policy.size)]


def _accuracy_hit(probs, label):
    return int(np.argmax(probs)) == label  # ties go to the lowest index


def batch_gradient(net: Network, data: Dataset, batch, objective: Objective, rngs):
    """Mean gradient of the penalised objective over ``batch`` in train mode.

    Returns ``(grads, sample_losses, hits)``.
    """
    reg = objective.penalty
    total = {k: np.zeros_like(v) for k, v in net.params.items()}
    losses, hits = [], 0
    for idx in sorted(batch):
        x, y = data.samples[idx]
        if reg.augment:
            x = augment(x, reg.augment, rngs["augment"])
        probs, cache = net.forward(x, mode="train", dropout=reg.dropout,
                                   dropconnect=reg.dropconnect,
                                   dropout_rng=rngs["dropout"],
                                   dropconnect_rng=rngs["dropconnect"])
        losses.append(sample_loss(objective.loss, probs, y))
        hits += _accuracy_hit(probs, y)
        for k, g in net.backward(cache, y, loss=objective.loss).items():
            total[k] += g
    grads = {k: v / len(batch) for k, v in total.items()}
    if reg.lam > 0 and reg.penalty != "none":
        for k, g in penalty_total_grad(net.params, reg).items():
            grads[k] = grads[k] + reg.lam * g
    return grads, losses, hits


def train_epoch(net: Network, data: Dataset, objective: Objective, kind, hyper,
                state, policy: BatchPolicy, rngs, epoch=0, clock=None):
    """One pass over ``data``; returns ``(net, state, MetricsRecord)``.

    ``rngs`` maps stream name to :class:`Rng` (``shuffle``, ``dropout``,
    ``dropconnect``, ``augment``).  ``clock`` is an optional zero-argument
    callable returning milliseconds; without it ``elapsed_ms`` is 0.
    """
    start = clock() if clock else 0.0
    losses, hits = [], 0
    for batch in iterate_batches(len(data), policy, rngs["shuffle"]):
        seen = {}

        def grad_fn(params, batch=batch, seen=seen):
            g, ls, h = batch_gradient(net.with_params(params), data, batch, objective, rngs)
            seen["losses"], seen["hits"] = ls, h
            return g

        new_params, state = optim.step(kind, net.params, grad_fn, state, hyper)
        batch_losses = seen["losses"]
        if not all(math.isfinite(v) for v in batch_losses):
            raise TrainingError(
                f"epoch {epoch}: non-finite loss in batch starting at sample {min(batch)}")
        losses.extend(batch_losses)
        hits += seen["hits"]
        net = net.with_params(new_params)
    rec = MetricsRecord(epoch, "train", float(np.mean(losses)), hits / len(data),
                        _lr_of(hyper), (clock() - start) if clock else 0.0)
    return net, state, rec


def _lr_of(hyper):
    return hyper.default.alpha if isinstance(hyper, optim.ParamGroups) else hyper.alpha


def evaluate(net: Network, data: Dataset, objective: Objective | None = None,
             epoch=0, split="val", lr=0.0, clock=None) -> MetricsRecord:
    """Inference-mode loss and accuracy; parameters are left untouched."""
    objective = objective or Objective()
    reg = objective.penalty
    start = clock() if clock else 0.0
    losses, hits = [], 0
    for x, y in data.samples:
        probs, _ = net.forward(x, mode="infer", dropout=reg.dropout, dropconnect=reg.dropconnect)
        losses.append(sample_loss(objective.loss, probs, y))
        hits += _accuracy_hit(probs, y)
    return MetricsRecord(epoch, split, float(np.mean(losses)), hits / len(data), lr,
                         (clock() - start) if clock else 0.0)


@dataclass
class FitConfig:
    layers: list
    data: Dataset | None = None
    splits: tuple | None = None
    fractions: tuple = (0.8, 0.1, 0.1)
    objective: Objective = field(default_factory=Objective)
    optimizer: str = "sgd"
    hyper: object = field(default_factory=optim.HyperParams)
    policy: BatchPolicy = field(default_factory=BatchPolicy)
    max_epochs: int = 10
    patience: int | None = None
    delta: float = 0.0
    schedule: str = "constant"
    anneal_k: float = 0.01
    seed: int = 0
    record_time: bool = False
    init_params: dict | None = None


@dataclass
class FitResult:
    net: Network
    state: optim.OptimizerState
    history: list
    stop_reason: str
    best_epoch: int | None = None
    splits: tuple = ()


def fit(cfg: FitConfig) -> FitResult:
    """Train for up to ``max_epochs`` with optional early stopping.

    On an early stop the best validation snapshot is restored.  A test-set
    record is appended after the last epoch.
    """
    rng = Rng(cfg.seed)
    rngs = rng.streams()
    if cfg.splits is not None:
        train, val, test = cfg.splits
    elif cfg.data is not None:
        train, val, test = split_dataset(cfg.data, cfg.fractions, rngs["split"])
    else:
        raise ConfigurationError("fit needs data or pre-made splits")
    net = Network(train.input_shape, cfg.layers, params=cfg.init_params, rng=rngs["init"])
    state = optim.init_state(cfg.optimizer, net.params)
    clock = (lambda: time.perf_counter() * 1e3) if cfg.record_time else None
    history = []
    if cfg.max_epochs <= 0:
        return FitResult(net, state, history, "max_epochs", None, (train, val, test))

    monitor = EarlyStopMonitor(cfg.patience, cfg.delta) if cfg.patience is not None else None
    base = _lr_of(cfg.hyper)
    plateaus, best_val = 0, math.inf
    reason, best_epoch, epoch = "max_epochs", None, 0
    for epoch in range(cfg.max_epochs):
        lr = optim.lr_schedule(cfg.schedule, base, epoch, plateaus, cfg.anneal_k) if base > 0 else 0.0
        hyper = cfg.hyper.scaled(lr / base) if base > 0 else cfg.hyper
        net, state, rec = train_epoch(net, train, cfg.objective, cfg.optimizer, hyper, state,
                                      cfg.policy, rngs, epoch, clock)
        rec.lr = lr
        history.append(rec)
        val_rec = evaluate(net, val, cfg.objective, epoch, "val", lr, clock)
        history.append(val_rec)
        log.info("epoch %d train loss %.6g acc %.4f | val loss %.6g acc %.4f",
                 epoch, rec.loss, rec.accuracy, val_rec.loss, val_rec.accuracy)
        if val_rec.loss < best_val:
            best_val = val_rec.loss
        else:
            plateaus += 1
        if monitor is not None:
            decision = monitor.update(epoch, val_rec.loss, net.params)
            best_epoch = monitor.best_epoch
            if decision.stop:
                net = net.with_params(decision.best_params)
                reason, best_epoch = "early_stop", decision.best_epoch
                break
    history.append(evaluate(net, test, cfg.objective, epoch, "test", history[-1].lr, clock))
    return FitResult(net, state, history, reason, best_epoch, (train, val, test))


def penalised_loss(net: Network, data: Dataset, objective: Objective):
    """Mean inference loss plus ``lambda * R(w)`` (diagnostic helper)."""
    rec = evaluate(net, data, objective)
    return rec.loss + objective.lam * penalty_total(net.params, objective.penalty)
