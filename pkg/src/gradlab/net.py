"""ConvNet layers: convolution, mean pooling, flatten, dense, softmax output.

Feature stacks are laid out ``(maps, rows, cols)``.  Convolution is stride-1
cross-correlation over a zero-padded input; the bias of each output map is
added at every spatial position.  The backward pass is written out by hand and
assumes a softmax output fused with cross-entropy (or MSE on probabilities).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import DimensionError, GeometryError, Rng, crop, pad_zero


class Activation(str, Enum):
    LINEAR = "linear"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"


def activation_apply(kind, x):
    kind = Activation(kind)
    if kind is Activation.LINEAR:
        return np.asarray(x, dtype=np.float64) / 1.0
    if kind is Activation.SIGMOID:
        # split by sign so exp never overflows
        x = np.asarray(x, dtype=np.float64)
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    if kind is Activation.TANH:
        return np.tanh(x)
    return np.maximum(x, 0.0)


def activation_grad(kind, x):
    """Derivative of the activation evaluated at the pre-activation ``x``."""
    kind = Activation(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind is Activation.LINEAR:
        return np.ones_like(x)
    if kind is Activation.SIGMOID:
        y = activation_apply(kind, x)
        return y * (1.0 - y)
    if kind is Activation.TANH:
        y = np.tanh(x)
        return 1.0 - y * y
    return (x > 0).astype(np.float64)


# -- layer specifications ---------------------------------------------------

@dataclass(frozen=True)
class Conv:
    out_maps: int
    kernel: int
    padding: int = 0
    activation: Activation = Activation.RELU

    def __post_init__(self):
        if self.out_maps < 1 or self.kernel < 1 or self.padding < 0:
            raise ValueError(f"invalid conv layer {self}")
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass(frozen=True)
class MeanPool:
    s: int

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("pooling factor must be >= 1")


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    activation: Activation = Activation.TANH

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("dense units must be >= 1")
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass(frozen=True)
class SoftmaxOutput:
    classes: int

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("softmax output needs at least 2 classes")


LayerSpec = Union[Conv, MeanPool, Flatten, Dense, SoftmaxOutput]

_TAGS = {Conv: "conv", MeanPool: "pool", Flatten: "flatten", Dense: "dense",
         SoftmaxOutput: "softmax"}


def parse_layers(text: str) -> list:
    """Parse a compact architecture string.

    Layers are comma separated; fields inside a layer are colon separated::

        conv:<maps>:<kernel>[:<padding>[:<activation>]]
        pool:<s>
        flatten
        dense:<units>[:<activation>]
        softmax:<classes>
    """
    layers = []
    for chunk in text.split(","):
        parts = [p.strip() for p in chunk.strip().split(":")]
        tag, args = parts[0].lower(), parts[1:]
        try:
            if tag == "conv":
                pad = int(args[2]) if len(args) > 2 else 0
                act = args[3] if len(args) > 3 else "relu"
                layers.append(Conv(int(args[0]), int(args[1]), pad, Activation(act)))
            elif tag == "pool":
                layers.append(MeanPool(int(args[0])))
            elif tag == "flatten":
                layers.append(Flatten())
            elif tag == "dense":
                act = args[1] if len(args) > 1 else "tanh"
                layers.append(Dense(int(args[0]), Activation(act)))
            elif tag == "softmax":
                layers.append(SoftmaxOutput(int(args[0])))
            else:
                raise ValueError(f"unknown layer {tag!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"bad layer spec {chunk.strip()!r}: {exc}") from None
    return layers


def format_layers(layers) -> str:
    out = []
    for layer in layers:
        if isinstance(layer, Conv):
            out.append(f"conv:{layer.out_maps}:{layer.kernel}:{layer.padding}:"
                       f"{layer.activation.value}")
        elif isinstance(layer, MeanPool):
            out.append(f"pool:{layer.s}")
        elif isinstance(layer, Flatten):
            out.append("flatten")
        elif isinstance(layer, Dense):
            out.append(f"dense:{layer.units}:{layer.activation.value}")
        else:
            out.append(f"softmax:{layer.classes}")
    return ",".join(out)


# -- single-layer forward operations ----------------------------------------

def _windows(x: np.ndarray, k: int) -> np.ndarray:
    # [maps, H, W] -> [maps, H-k+1, W-k+1, k, k]
    return sliding_window_view(x, (k, k), axis=(1, 2))


def conv_pre(inputs, weights, biases, padding=0):
    if inputs.ndim != 3:
        raise DimensionError(f"conv input must be [maps, H, W], got {inputs.shape}")
    if weights.ndim != 4 or weights.shape[1] != inputs.shape[0]:
        raise DimensionError(
            f"weights {weights.shape} do not match {inputs.shape[0]} input maps")
    if biases.shape != (weights.shape[0],):
        raise DimensionError(f"biases {biases.shape} do not match weights {weights.shape}")
    k = weights.shape[2]
    x = pad_zero(inputs, padding)
    if x.shape[1] < k or x.shape[2] < k:
        raise GeometryError(
            f"kernel {k} larger than padded input {x.shape[1:]}; increase padding")
    z = np.tensordot(weights, _windows(x, k), axes=([1, 2, 3], [0, 3, 4]))
    return z + biases[:, None, None]


def conv_forward(inputs, weights, biases, padding=0, activation=Activation.LINEAR):
    """One convolutional layer: activation(sum_i input_i * w_ij + b_j)."""
    return activation_apply(activation, conv_pre(inputs, weights, biases, padding))


def meanpool_forward(x, s):
    d, h, w = x.shape
    if h % s or w % s:
        raise GeometryError(f"pooling factor {s} does not divide {h}x{w}")
    return x.reshape(d, h // s, s, w // s, s).sum(axis=(2, 4)) / (s * s)


def flatten_forward(x):
    """Map ``x[i, y, col]`` to ``v[i*C*C + y*C + col]`` (0-based, row-major)."""
    return x.reshape(-1).copy()


def unflatten(v, shape):
    return np.asarray(v).reshape(shape).copy()


def dense_forward(x, weights, bias, activation=Activation.LINEAR):
    if weights.ndim != 2 or weights.shape[1] != x.shape[0] or bias.shape != (weights.shape[0],):
        raise DimensionError(
            f"dense shapes disagree: W {weights.shape}, b {bias.shape}, x {x.shape}")
    return activation_apply(activation, weights @ x + bias)


def softmax_probs(logits):
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


# -- network ------------------------------------------------------------------

def is_weight(name: str) -> bool:
    """Weight-like parameters (penalised); biases are not."""
    return name.endswith(".w") or name.endswith(".theta")


@dataclass
class LayerTrace:
    inputs: np.ndarray
    pre: np.ndarray | None = None
    out: np.ndarray | None = None
    dropout_mask: np.ndarray | None = None
    connect_mask: np.ndarray | None = None
    connect_scale: float = 1.0


@dataclass
class ForwardCache:
    traces: list = field(default_factory=list)
    probs: np.ndarray | None = None

    def __len__(self):
        return len(self.traces)


class Network:
    """Ordered layer list plus named parameters.

    Parameter names are ``<tag><index>.<w|b|theta>``, e.g. ``conv0.w``.
    Shapes are validated layer by layer at construction.
    """

    def __init__(self, input_shape, layers, params=None, rng: Rng | None = None):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = list(layers)
        self.shapes = self._infer_shapes()
        specs = self.param_shapes()
        if params is None:
            params = self._init_params(specs, rng if rng is not None else Rng(0).stream("init"))
        else:
            params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
            if set(params) != set(specs):
                raise DimensionError(
                    f"parameter names {sorted(params)} do not match {sorted(specs)}")
            for k, shp in specs.items():
                if params[k].shape != shp:
                    raise DimensionError(f"{k}: expected {shp}, got {params[k].shape}")
        self.params = params

    def _infer_shapes(self):
        if not self.layers or not isinstance(self.layers[-1], SoftmaxOutput):
            raise ValueError("the last layer must be SoftmaxOutput")
        shape = self.input_shape
        shapes = []
        for i, layer in enumerate(self.layers):
            where = f"layer {i} ({_TAGS[type(layer)]})"
            if isinstance(layer, SoftmaxOutput) and i != len(self.layers) - 1:
                raise ValueError("SoftmaxOutput may only be the last layer")
            if isinstance(layer, (Conv, MeanPool, Flatten)) and len(shape) != 3:
                raise DimensionError(f"{where} needs a [maps, H, W] input, got {shape}")
            if isinstance(layer, (Dense, SoftmaxOutput)) and len(shape) != 1:
                raise DimensionError(f"{where} needs a vector input, got {shape}; add flatten")
            if isinstance(layer, Conv):
                h = shape[1] + 2 * layer.padding - layer.kernel + 1
                w = shape[2] + 2 * layer.padding - layer.kernel + 1
                if h < 1 or w < 1:
                    raise GeometryError(f"{where}: kernel larger than padded input")
                shape = (layer.out_maps, h, w)
            elif isinstance(layer, MeanPool):
                if shape[1] % layer.s or shape[2] % layer.s:
                    raise GeometryError(
                        f"{where}: factor {layer.s} does not divide {shape[1]}x{shape[2]}")
                shape = (shape[0], shape[1] // layer.s, shape[2] // layer.s)
            elif isinstance(layer, Flatten):
                shape = (shape[0] * shape[1] * shape[2],)
            elif isinstance(layer, Dense):
                shape = (layer.units,)
            else:
                shape = (layer.classes,)
            shapes.append(shape)
        return shapes

    def param_shapes(self):
        specs = {}
        prev = self.input_shape
        for i, (layer, shape) in enumerate(zip(self.layers, self.shapes)):
            tag = f"{_TAGS[type(layer)]}{i}"
            if isinstance(layer, Conv):
                specs[f"{tag}.w"] = (layer.out_maps, prev[0], layer.kernel, layer.kernel)
                specs[f"{tag}.b"] = (layer.out_maps,)
            elif isinstance(layer, Dense):
                specs[f"{tag}.w"] = (layer.units, prev[0])
                specs[f"{tag}.b"] = (layer.units,)
            elif isinstance(layer, SoftmaxOutput):
                specs[f"{tag}.theta"] = (layer.classes, prev[0])
            prev = shape
        return specs

    @staticmethod
    def _init_params(specs, rng):
        params = {}
        for name in sorted(specs):
            shp = specs[name]
            if is_weight(name):
                if len(shp) == 4:
                    field_size = shp[2] * shp[3]
                    fan_in, fan_out = shp[1] * field_size, shp[0] * field_size
                else:
                    fan_in, fan_out = shp[1], shp[0]
                a = np.sqrt(6.0 / (fan_in + fan_out))
                params[name] = rng.uniform(-a, a, shp)
            else:
                params[name] = np.zeros(shp)
        return params

    @property
    def num_classes(self):
        return self.layers[-1].classes

    def copy(self):
        return Network(self.input_shape, self.layers,
                       {k: v.copy() for k, v in self.params.items()})

    def with_params(self, params):
        return Network(self.input_shape, self.layers, params)

    # -- passes -------------------------------------------------------------

    def forward(self, x, mode="infer", dropout=1.0, dropconnect=1.0,
                dropout_rng: Rng | None = None, dropconnect_rng: Rng | None = None):
        """Run the network on one sample.

        ``dropout`` and ``dropconnect`` are keep-probabilities applied to every
        dense (hidden) layer: dropout to its outputs, dropconnect to its
        weights.  ``mode`` is ``"train"`` (random masks) or ``"infer"``
        (outputs/weights scaled by the keep-probability).
        """
        from .regularize import dropconnect_forward, dropout_forward

        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise DimensionError(f"input shape {x.shape} != network input {self.input_shape}")
        cache = ForwardCache()
        for i, layer in enumerate(self.layers):
            tag = f"{_TAGS[type(layer)]}{i}"
            tr = LayerTrace(inputs=x)
            if isinstance(layer, Conv):
                tr.pre = conv_pre(x, self.params[f"{tag}.w"], self.params[f"{tag}.b"],
                                  layer.padding)
                x = activation_apply(layer.activation, tr.pre)
            elif isinstance(layer, MeanPool):
                x = meanpool_forward(x, layer.s)
            elif isinstance(layer, Flatten):
                x = flatten_forward(x)
            elif isinstance(layer, Dense):
                w = self.params[f"{tag}.w"]
                if dropconnect < 1.0:
                    w, mask = dropconnect_forward(w, dropconnect, mode, dropconnect_rng)
                    if mode == "train":
                        tr.connect_mask = mask
                    else:
                        tr.connect_scale = dropconnect
                tr.pre = w @ x + self.params[f"{tag}.b"]
                x = activation_apply(layer.activation, tr.pre)
                if dropout < 1.0:
                    x, mask = dropout_forward(x, dropout, mode, dropout_rng)
                    if mode == "train":
                        tr.dropout_mask = mask
                    else:
                        tr.dropout_mask = np.full_like(x, dropout)
            else:
                tr.pre = self.params[f"{tag}.theta"] @ x
                x = softmax_probs(tr.pre)
            tr.out = x
            cache.traces.append(tr)
        cache.probs = x
        return x, cache

    def backward(self, cache: ForwardCache, label: int, loss="cross_entropy", scale=1.0,
                 input_grad=False):
        """Gradients of the per-sample loss with respect to every parameter.

        With ``input_grad=True`` returns ``(grads, d_loss/d_input)``.
        """
        if len(cache) != len(self.layers):
            raise DimensionError(
                f"cache has {len(cache)} layers, network has {len(self.layers)}")
        k = self.num_classes
        if not 0 <= label < k:
            raise ValueError(f"label {label} out of range for {k} classes")
        p = cache.probs
        onehot = np.zeros(k)
        onehot[label] = 1.0
        if loss == "cross_entropy":
            delta = p - onehot
        elif loss == "mse":
            dp = 2.0 * (p - onehot) / k
            delta = p * (dp - p @ dp)
        else:
            raise ValueError(f"unknown loss {loss!r}")
        delta = delta * scale

        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            layer, tr = self.layers[i], cache.traces[i]
            tag = f"{_TAGS[type(layer)]}{i}"
            if isinstance(layer, SoftmaxOutput):
                theta = self.params[f"{tag}.theta"]
                grads[f"{tag}.theta"] = np.outer(delta, tr.inputs)
                delta = theta.T @ delta
            elif isinstance(layer, Dense):
                if tr.dropout_mask is not None:
                    delta = delta * tr.dropout_mask
                dpre = delta * activation_grad(layer.activation, tr.pre)
                w = self.params[f"{tag}.w"]
                dw = np.outer(dpre, tr.inputs)
                if tr.connect_mask is not None:
                    w = w * tr.connect_mask
                    dw = dw * tr.connect_mask
                elif tr.connect_scale != 1.0:
                    w = w * tr.connect_scale
                    dw = dw * tr.connect_scale
                grads[f"{tag}.w"] = dw
                grads[f"{tag}.b"] = dpre
                delta = w.T @ dpre
            elif isinstance(layer, Flatten):
                delta = delta.reshape(tr.inputs.shape)
            elif isinstance(layer, MeanPool):
                s = layer.s
                delta = np.repeat(np.repeat(delta, s, axis=1), s, axis=2) / (s * s)
            else:
                dpre = delta * activation_grad(layer.activation, tr.pre)
                w = self.params[f"{tag}.w"]
                kk = layer.kernel
                padded = pad_zero(tr.inputs, layer.padding)
                grads[f"{tag}.w"] = np.tensordot(dpre, _windows(padded, kk),
                                                 axes=([1, 2], [1, 2]))
                grads[f"{tag}.b"] = dpre.sum(axis=(1, 2))
                if i > 0 or input_grad:
                    # full correlation with the flipped kernel
                    full = _windows(pad_zero(dpre, kk - 1), kk)
                    dpad = np.tensordot(w[:, :, ::-1, ::-1], full, axes=([0, 2, 3], [0, 3, 4]))
                    delta = crop(dpad, layer.padding)
        grads = {name: grads[name] for name in sorted(grads)}
        if input_grad:
            return grads, delta
        return grads


def network_forward(net: Network, x, **kwargs):
    return net.forward(x, **kwargs)


def network_backward(net: Network, cache: ForwardCache, label: int, **kwargs):
    return net.backward(cache, label, **kwargs)
