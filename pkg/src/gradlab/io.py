"""Metrics/trajectory CSV files and the GLB1 binary checkpoint format.

GLB1 layout (all integers unsigned 32-bit little-endian)::

    b"GLB1"
    repeated until EOF:
        name_length, name (utf-8), rank, dim_0 ... dim_{rank-1},
        product(dims) float64 little-endian values

Tensor names: ``param/<name>`` for network parameters,
``slot/<slot>/<name>`` for optimizer slots and ``optim/<kind>/t`` (a
length-1 tensor) for the optimizer kind and step counter.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .optim import OptimizerState
from .trainer import MetricsRecord

METRICS_HEADER = ("epoch", "split", "loss", "accuracy", "lr", "elapsed_ms")
MAGIC = b"GLB1"


class CheckpointError(ValueError):
    pass


def _fmt(x):
    return format(float(x), ".17g")


def write_metrics(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in history:
            w.writerow([r.epoch, r.split, _fmt(r.loss), _fmt(r.accuracy), _fmt(r.lr),
                        _fmt(r.elapsed_ms)])


def read_metrics(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != METRICS_HEADER:
        raise ValueError(f"{path}: not a metrics file")
    return [MetricsRecord(int(r[0]), r[1], float(r[2]), float(r[3]), float(r[4]), float(r[5]))
            for r in rows[1:]]


def write_trajectory(traj, path):
    """One row per iterate: ``step,f,grad_norm,x0,x1,...``."""
    dim = len(traj.points[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "f", "grad_norm"] + [f"x{i}" for i in range(dim)])
        for i, (p, f, g) in enumerate(zip(traj.points, traj.values, traj.grad_norms)):
            w.writerow([i, _fmt(f), _fmt(g)] + [_fmt(v) for v in p])


def read_trajectory(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return [[float(c) for c in r] for r in rows[1:]]


# -- checkpoints -------------------------------------------------------------------

def _pack(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    raw = name.encode("utf-8")
    head = struct.pack(f"<I{len(raw)}sI", len(raw), raw, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def checkpoint_bytes(params, state: OptimizerState | None = None) -> bytes:
    out = [MAGIC]
    for k in sorted(params):
        out.append(_pack(f"param/{k}", params[k]))
    if state is not None:
        out.append(_pack(f"optim/{state.kind}/t", np.array([float(state.t)])))
        for slot in sorted(state.slots):
            for k in sorted(state.slots[slot]):
                out.append(_pack(f"slot/{slot}/{k}", state.slots[slot][k]))
    return b"".join(out)


def checkpoint_save(params, state, path):
    Path(path).write_bytes(checkpoint_bytes(params, state))


def _parse(raw):
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    pos, tensors = 4, {}

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"truncated checkpoint at byte {pos} (need {n} more)")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    while pos < len(raw):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims)) if rank else 1
        vals = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
        tensors[name] = vals.reshape(dims)
    return tensors


def checkpoint_load(path, param_shapes=None):
    """Return ``(params, optimizer_state_or_None)``.

    ``param_shapes`` (e.g. ``Network.param_shapes()``) is checked against the
    stored parameters when given.  Nothing is returned on any error.
    """
    tensors = _parse(Path(path).read_bytes())
    params, slots, kind, t = {}, {}, None, 0
    for name, arr in tensors.items():
        head, _, rest = name.partition("/")
        if head == "param":
            params[rest] = arr
        elif head == "optim":
            kind, _, _ = rest.partition("/")
            t = int(arr[0])
        elif head == "slot":
            slot, _, pname = rest.partition("/")
            slots.setdefault(slot, {})[pname] = arr
        else:
            raise CheckpointError(f"unknown tensor {name!r}")
    if param_shapes is not None:
        want = {k: tuple(v) for k, v in param_shapes.items()}
        have = {k: v.shape for k, v in params.items()}
        if want != have:
            raise CheckpointError(f"checkpoint parameters {have} do not match architecture {want}")
    state = OptimizerState(kind, t, slots) if kind is not None else None
    return params, state
