"""Dense float64 arrays, sliding-window helpers and seeded random streams.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  The helpers in
this module validate shape and finiteness at construction time so the rest of
the package can rely on those invariants.
"""

from __future__ import annotations

from typing import Iterator, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

#: Named random streams.  The position in this tuple is the stream's spawn key.
STREAMS = ("init", "split", "shuffle", "dropout", "dropconnect", "augment", "data")


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class GeometryError(ValueError):
    """Window/stride/padding geometry does not tile the input."""


def tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Build a validated float64 tensor.

    ``data`` may be anything numpy understands.  If ``shape`` is given the
    data is reshaped row-major and its length must equal the product of the
    shape.
    """
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if arr.size != int(np.prod(shape)):
            raise DimensionError(
                f"data length {arr.size} does not match shape {shape}")
        arr = arr.reshape(shape)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(s < 1 for s in arr.shape):
        raise DimensionError(f"shape entries must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor values must be finite")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def slide_windows(x: np.ndarray, win: int,
                  stride: int = 1) -> Iterator[tuple[int, int, np.ndarray]]:
    """Yield ``(row, col, window)`` for each window, row-major by top-left corner.

    ``row`` and ``col`` are output indices, so the window starts at
    ``(row * stride, col * stride)`` in the input.  Windows are read-only views.
    """
    if x.ndim != 2:
        raise DimensionError(f"slide_windows needs a rank-2 input, got {x.shape}")
    if win < 1 or stride < 1:
        raise GeometryError("window and stride must be positive")
    h, w = x.shape
    if h < win or w < win:
        raise GeometryError(f"window {win} larger than input {x.shape}")
    for name, extent in (("rows", h), ("cols", w)):
        rem = (extent - win) % stride
        if rem:
            raise GeometryError(
                f"{name}: ({extent} - {win}) is not divisible by stride {stride}; "
                f"pad by {stride - rem} to fit")
    view = x.view()
    view.flags.writeable = False
    for r in range((h - win) // stride + 1):
        for c in range((w - win) // stride + 1):
            yield r, c, view[r * stride:r * stride + win, c * stride:c * stride + win]


def pad_zero(x: np.ndarray, p: int) -> np.ndarray:
    """Zero-pad the last two axes by ``p`` on every side."""
    if p < 0:
        raise GeometryError("padding must be non-negative")
    if p == 0:
        return x.copy()
    widths = [(0, 0)] * (x.ndim - 2) + [(p, p), (p, p)]
    return np.pad(x, widths, mode="constant", constant_values=0.0)


def crop(x: np.ndarray, p: int) -> np.ndarray:
    """Inverse of :func:`pad_zero` on the last two axes."""
    if p == 0:
        return x.copy()
    return x[..., p:-p, p:-p].copy()


class Rng:
    """Deterministic random source backed by numpy's PCG64.

    Identical seeds give identical streams on every platform numpy supports.
    Named sub-streams come from :meth:`stream`, which mixes the master seed
    with the stream's index in :data:`STREAMS` through ``numpy.random.SeedSequence``
    (``entropy=seed, spawn_key=(index,)``).  Each stream is therefore
    independent of how often the others are drawn from.
    """

    def __init__(self, seed: int = 0, spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        self.spawn_key = tuple(spawn_key)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def stream(self, name: str) -> "Rng":
        try:
            idx = STREAMS.index(name)
        except ValueError:
            raise KeyError(f"unknown rng stream {name!r}; known: {STREAMS}") from None
        return Rng(self.seed, self.spawn_key + (idx,))

    def streams(self, names=STREAMS) -> dict:
        return {n: self.stream(n) for n in names}

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def bernoulli(self, p: float, shape) -> np.ndarray:
        """0/1 float mask, each entry 1 with probability ``p``."""
        return (self.gen.random(shape) < p).astype(np.float64)

    def get_state(self) -> dict:
        return self.gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.gen.bit_generator.state = state


def shuffle(items: Sequence[T], rng: Rng) -> list[T]:
    """Return a shuffled copy of ``items``.

    Fisher-Yates, descending: for ``i`` from ``n-1`` down to 1 draw
    ``j = rng.integers(0, i + 1)`` and swap positions ``i`` and ``j``.
    """
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        out[i], out[j] = out[j], out[i]
    return out
