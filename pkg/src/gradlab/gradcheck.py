"""Finite-difference checks of the hand-written backward pass."""

from __future__ import annotations

import numpy as np

from .loss import sample_loss
from .net import Activation, Conv, Dense, Flatten, MeanPool, Network, SoftmaxOutput
from .tensor import Rng


def relative_error(analytic, numeric, floor=1e-8):
    a = np.asarray(analytic, dtype=np.float64)
    c = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(c)), floor)
    return float(np.max(np.abs(a - c) / denom)) if a.size else 0.0


def _loss(net, x, label, loss):
    probs, _ = net.forward(x)
    return sample_loss(loss, probs, label)


def check_network(net: Network, x, label, h=1e-5, loss="cross_entropy", inputs=False):
    """Worst relative error per parameter tensor (and ``"input"`` if asked)."""
    _, cache = net.forward(x)
    if inputs:
        grads, dx = net.backward(cache, label, loss=loss, input_grad=True)
    else:
        grads = net.backward(cache, label, loss=loss)
    report = {}
    for name, p in net.params.items():
        num = np.empty_like(p)
        for i in range(p.size):
            orig = p.flat[i]
            p.flat[i] = orig + h
            up = _loss(net, x, label, loss)
            p.flat[i] = orig - h
            down = _loss(net, x, label, loss)
            p.flat[i] = orig
            num.flat[i] = (up - down) / (2 * h)
        report[name] = relative_error(grads[name], num)
    if inputs:
        x = np.array(x, dtype=np.float64)
        num = np.empty_like(x)
        for i in range(x.size):
            orig = x.flat[i]
            x.flat[i] = orig + h
            up = _loss(net, x, label, loss)
            x.flat[i] = orig - h
            down = _loss(net, x, label, loss)
            x.flat[i] = orig
            num.flat[i] = (up - down) / (2 * h)
        report["input"] = relative_error(dx, num)
    return report


def layer_suite(seed=0):
    """Small networks isolating each layer kind, as ``(label, net, x, target)``."""
    rng = Rng(seed).stream("init")
    cases = []
    for act in Activation:
        cases.append((f"conv-{act.value}", [Conv(2, 3, 1, act), Flatten(), SoftmaxOutput(3)],
                      (2, 5, 5)))
        cases.append((f"dense-{act.value}", [Dense(4, act), SoftmaxOutput(3)], (6,)))
    cases += [
        ("meanpool", [MeanPool(2), Flatten(), SoftmaxOutput(3)], (2, 4, 4)),
        ("flatten", [Flatten(), SoftmaxOutput(3)], (2, 3, 3)),
        ("softmax", [SoftmaxOutput(4)], (5,)),
    ]
    out = []
    for label, layers, shape in cases:
        net = Network(shape, layers, rng=rng)
        x = rng.uniform(-1.0, 1.0, shape)
        out.append((label, net, x, int(rng.integers(0, net.num_classes))))
    return out


def run_suite(net: Network, seed=0, h=1e-5, samples=2):
    """Check every isolated layer kind plus ``net`` on random inputs.

    Returns ``{case: worst relative error}``.
    """
    rng = Rng(seed).stream("data")
    results = {}
    for label, lnet, x, y in layer_suite(seed):
        results[label] = max(check_network(lnet, x, y, h, inputs=True).values())
    for s in range(samples):
        x = rng.uniform(0.0, 1.0, net.input_shape)
        y = int(rng.integers(0, net.num_classes))
        results[f"network-{s}"] = max(check_network(net, x, y, h).values())
    return results
