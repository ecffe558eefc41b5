"""Weight penalties, dropout, dropconnect, augmentation and early stopping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import GeometryError, Rng, pad_zero

PENALTIES = ("none", "l2", "l1", "l1_smooth", "elastic")


# -- penalties ----------------------------------------------------------------

def penalty_value(kind, w, smooth_eps=1e-6, l1_ratio=0.5):
    """Unweighted penalty R(w); the strength lambda is applied by the objective."""
    w = np.asarray(w, dtype=np.float64)
    if kind == "none":
        return 0.0
    if kind == "l2":
        return float(np.sum(w * w))
    if kind == "l1":
        return float(np.sum(np.abs(w)))
    if kind == "l1_smooth":
        return float(np.sum(np.sqrt(w * w + smooth_eps)))
    if kind == "elastic":
        return (l1_ratio * penalty_value("l1_smooth", w, smooth_eps)
                + (1.0 - l1_ratio) * penalty_value("l2", w))
    raise ValueError(f"unknown penalty {kind!r}; expected one of {PENALTIES}")


def penalty_grad(kind, w, smooth_eps=1e-6, l1_ratio=0.5):
    w = np.asarray(w, dtype=np.float64)
    if kind == "none":
        return np.zeros_like(w)
    if kind == "l2":
        return 2.0 * w
    if kind == "l1":
        return np.sign(w)  # subgradient 0 at w == 0
    if kind == "l1_smooth":
        return w / np.sqrt(w * w + smooth_eps)
    if kind == "elastic":
        return (l1_ratio * penalty_grad("l1_smooth", w, smooth_eps)
                + (1.0 - l1_ratio) * penalty_grad("l2", w))
    raise ValueError(f"unknown penalty {kind!r}; expected one of {PENALTIES}")


# -- augmentation ---------------------------------------------------------------

@dataclass(frozen=True)
class HFlip:
    prob: float = 0.5


@dataclass(frozen=True)
class VFlip:
    prob: float = 0.5


@dataclass(frozen=True)
class Rotate90:
    prob: float = 0.5


@dataclass(frozen=True)
class Crop:
    pad: int
    size: int


@dataclass(frozen=True)
class Jitter:
    magnitude: float


def hflip(image):
    return image[..., ::-1].copy()


def vflip(image):
    return image[..., ::-1, :].copy()


def rotate90(image):
    """Quarter turn of every map: ``[[1,2],[3,4]] -> [[3,1],[4,2]]``.

    Counter-clockwise when row 0 is drawn at the bottom (y axis up);
    clockwise in matrix display order.
    """
    if image.shape[-1] != image.shape[-2]:
        raise GeometryError(f"rotate90 needs square maps, got {image.shape[-2:]}")
    return np.rot90(image, k=-1, axes=(-2, -1)).copy()


def parse_recipe(text: str) -> tuple:
    """``"hflip:0.5,crop:1:8,jitter:0.05"`` -> tuple of augmentation steps."""
    steps = []
    for chunk in filter(None, (c.strip() for c in text.split(","))):
        tag, *args = [p.strip() for p in chunk.split(":")]
        try:
            if tag == "hflip":
                steps.append(HFlip(float(args[0]) if args else 0.5))
            elif tag == "vflip":
                steps.append(VFlip(float(args[0]) if args else 0.5))
            elif tag == "rotate90":
                steps.append(Rotate90(float(args[0]) if args else 0.5))
            elif tag == "crop":
                steps.append(Crop(int(args[0]), int(args[1])))
            elif tag == "jitter":
                steps.append(Jitter(float(args[0])))
            else:
                raise ValueError(f"unknown augmentation {tag!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"bad augmentation step {chunk!r}: {exc}") from None
    return tuple(steps)


def format_recipe(steps) -> str:
    out = []
    for st in steps:
        if isinstance(st, Crop):
            out.append(f"crop:{st.pad}:{st.size}")
        elif isinstance(st, Jitter):
            out.append(f"jitter:{st.magnitude!r}")
        else:
            name = {HFlip: "hflip", VFlip: "vflip", Rotate90: "rotate90"}[type(st)]
            out.append(f"{name}:{st.prob!r}")
    return ",".join(out)


def augment(image, recipe, rng: Rng):
    """Apply each step in order; the label is left alone by construction.

    Flip/rotate steps draw one uniform and fire when it is below ``prob``.
    Crop zero-pads by ``pad`` and cuts a random ``size`` x ``size`` window
    (two integer draws).  Jitter adds one uniform offset in
    ``[-magnitude, magnitude]`` per map (brightness jitter).
    """
    out = np.array(image, dtype=np.float64)
    for step in recipe:
        if isinstance(step, (HFlip, VFlip, Rotate90)):
            if rng.random() < step.prob:
                fn = {HFlip: hflip, VFlip: vflip, Rotate90: rotate90}[type(step)]
                out = fn(out)
        elif isinstance(step, Crop):
            padded = pad_zero(out, step.pad)
            h, w = padded.shape[-2:]
            if step.size > h or step.size > w:
                raise GeometryError(
                    f"crop size {step.size} exceeds padded image {h}x{w}")
            r = int(rng.integers(0, h - step.size + 1))
            c = int(rng.integers(0, w - step.size + 1))
            out = padded[..., r:r + step.size, c:c + step.size].copy()
        elif isinstance(step, Jitter):
            offs = rng.uniform(-step.magnitude, step.magnitude, out.shape[0])
            out = out + offs.reshape((-1,) + (1,) * (out.ndim - 1))
        else:
            raise TypeError(f"unknown augmentation step {step!r}")
    return out


# -- dropout / dropconnect --------------------------------------------------------

def _check_keep(p, what):
    if not 0.0 < p <= 1.0:
        raise ValueError(f"{what} keep-probability must be in (0, 1], got {p}")


def dropout_forward(x, p, mode="train", rng: Rng | None = None):
    """Classic dropout: units kept with probability ``p``, no rescale in training.

    At inference the output is ``p * x`` so both modes agree in expectation.
    """
    _check_keep(p, "dropout")
    x = np.asarray(x, dtype=np.float64)
    if mode == "infer":
        return p * x, np.ones_like(x)
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if p == 1.0:
        return x.copy(), np.ones_like(x)
    mask = rng.bernoulli(p, x.shape)
    return mask * x, mask


def dropout_backward(upstream, mask):
    upstream = np.asarray(upstream)
    if upstream.shape != mask.shape:
        raise ValueError(f"gradient {upstream.shape} and mask {mask.shape} differ")
    return upstream * mask


def dropconnect_forward(weights, q, mode="train", rng: Rng | None = None):
    """Zero a random subset of weights (kept with probability ``q``).

    Inference uses the mean-field weights ``q * W``.
    """
    _check_keep(q, "dropconnect")
    w = np.asarray(weights, dtype=np.float64)
    if mode == "infer":
        return q * w, np.ones_like(w)
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if q == 1.0:
        return w.copy(), np.ones_like(w)
    mask = rng.bernoulli(q, w.shape)
    return mask * w, mask


# -- config ---------------------------------------------------------------------

@dataclass(frozen=True)
class RegularizerConfig:
    penalty: str = "none"
    lam: float = 0.0
    smooth_eps: float = 1e-6
    l1_ratio: float = 0.5
    dropout: float = 1.0
    dropconnect: float = 1.0
    augment: tuple = ()

    def __post_init__(self):
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.smooth_eps <= 0:
            raise ValueError("smoothing epsilon must be > 0")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ValueError("elastic l1 fraction must be in [0, 1]")
        _check_keep(self.dropout, "dropout")
        _check_keep(self.dropconnect, "dropconnect")

    def value(self, w):
        return penalty_value(self.penalty, w, self.smooth_eps, self.l1_ratio)

    def grad(self, w):
        return penalty_grad(self.penalty, w, self.smooth_eps, self.l1_ratio)


# -- early stopping ---------------------------------------------------------------

@dataclass
class Decision:
    stop: bool
    best_params: dict | None = None
    best_epoch: int | None = None


@dataclass
class EarlyStopMonitor:
    """Track the best validation loss and snapshot the parameters that produced it.

    An epoch improves when its loss is below ``best - delta``.  After an
    epoch that does not improve, training stops once ``patience`` epochs in a
    row have failed to improve (``patience=0`` stops at the first one).
    """

    patience: int = 3
    delta: float = 0.0
    best_loss: float = math.inf
    best_epoch: int | None = None
    best_params: dict | None = None
    since_improvement: int = 0
    last_epoch: int | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.patience < 0 or self.delta < 0:
            raise ValueError("patience and delta must be non-negative")

    def update(self, epoch, val_loss, params) -> Decision:
        if self.last_epoch is not None and epoch <= self.last_epoch:
            raise ValueError(f"epoch {epoch} does not follow {self.last_epoch}")
        self.last_epoch = epoch
        if val_loss < self.best_loss - self.delta:
            self.best_loss = float(val_loss)
            self.best_epoch = epoch
            self.best_params = {k: np.array(v, copy=True) for k, v in params.items()}
            self.since_improvement = 0
            return Decision(False)
        self.since_improvement += 1
        if self.since_improvement >= self.patience:
            return Decision(True, self.best_params, self.best_epoch)
        return Decision(False)


def early_stop_update(monitor: EarlyStopMonitor, epoch, val_loss, params) -> Decision:
    return monitor.update(epoch, val_loss, params)
