"""Gradient-descent update rules as pure state transitions.

Every ``step_*`` function takes ``(params, grads, state, hyper)`` and returns
``(new_params, new_state)`` without touching its arguments.  ``params`` and
``grads`` are dicts of equally shaped float64 arrays keyed by parameter name.
Nesterov momentum needs the gradient at a look-ahead point, so ``step_nag``
takes a callable ``grad_fn(params) -> grads`` instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

KINDS = ("sgd", "momentum", "nag", "adagrad", "adadelta", "rmsprop", "adam", "nadam")

SLOTS = {
    "sgd": (),
    "momentum": ("v",),
    "nag": ("v",),
    "adagrad": ("G",),
    "adadelta": ("Eg2", "Edx2"),
    "rmsprop": ("Eg2",),
    "adam": ("m", "v"),
    "nadam": ("m", "v"),
}

# decay of the squared-gradient average in RMSprop (fixed, not tied to gamma)
RMSPROP_DECAY = 0.9


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class HyperParams:
    alpha: float = 0.01
    gamma: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {b}")
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")

    def for_param(self, name):
        return self

    def scaled(self, factor):
        return replace(self, alpha=self.alpha * factor)


@dataclass(frozen=True)
class ParamGroups:
    """Per-layer hyperparameters: the longest matching name prefix wins."""

    default: HyperParams
    overrides: tuple = ()

    def for_param(self, name):
        best, best_len = self.default, -1
        for prefix, hp in self.overrides:
            if name.startswith(prefix) and len(prefix) > best_len:
                best, best_len = hp, len(prefix)
        return best

    def scaled(self, factor):
        return ParamGroups(self.default.scaled(factor),
                           tuple((p, hp.scaled(factor)) for p, hp in self.overrides))


@dataclass
class OptimizerState:
    kind: str
    t: int = 0
    slots: dict = field(default_factory=dict)

    def copy(self):
        return OptimizerState(self.kind, self.t,
                              {s: {k: v.copy() for k, v in d.items()}
                               for s, d in self.slots.items()})


def init_state(kind, params) -> OptimizerState:
    if kind not in SLOTS:
        raise ValueError(f"unknown optimizer {kind!r}; expected one of {KINDS}")
    return OptimizerState(kind, 0, {s: {k: np.zeros_like(v, dtype=np.float64)
                                        for k, v in params.items()}
                                    for s in SLOTS[kind]})


def _check(params, grads, state, kind):
    if state.kind != kind:
        raise ValueError(f"state belongs to {state.kind!r}, not {kind!r}")
    if set(grads) != set(params):
        raise ValueError(f"gradient names {sorted(grads)} != parameter names {sorted(params)}")
    for k, p in params.items():
        g = grads[k]
        if np.shape(g) != p.shape:
            raise ValueError(f"{k}: gradient shape {np.shape(g)} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NonFiniteGradientError(f"{k}: {bad} non-finite gradient entries; step rejected")
        for s in state.slots.values():
            if s[k].shape != p.shape:
                raise ValueError(f"{k}: optimizer slot shape {s[k].shape} != {p.shape}")


def step_sgd(params, grads, state, hyper):
    _check(params, grads, state, "sgd")
    new = {k: p - hyper.for_param(k).alpha * grads[k] for k, p in params.items()}
    return new, OptimizerState("sgd", state.t + 1, {})


def step_momentum(params, grads, state, hyper):
    _check(params, grads, state, "momentum")
    new, vel = {}, {}
    for k, p in params.items():
        hp = hyper.for_param(k)
        vel[k] = hp.gamma * state.slots["v"][k] + hp.alpha * grads[k]
        new[k] = p - vel[k]
    return new, OptimizerState("momentum", state.t + 1, {"v": vel})


def step_nag(params, grad_fn: Callable[[Mapping], Mapping], state, hyper):
    if state.kind != "nag":
        raise ValueError(f"state belongs to {state.kind!r}, not 'nag'")
    ahead = {k: p - hyper.for_param(k).gamma * state.slots["v"][k] for k, p in params.items()}
    grads = grad_fn(ahead)
    _check(params, grads, state, "nag")
    new, vel = {}, {}
    for k, p in params.items():
        hp = hyper.for_param(k)
        vel[k] = hp.gamma * state.slots["v"][k] + hp.alpha * grads[k]
        new[k] = p - vel[k]
    return new, OptimizerState("nag", state.t + 1, {"v": vel})


def step_adagrad(params, grads, state, hyper):
    _check(params, grads, state, "adagrad")
    new, acc = {}, {}
    for k, p in params.items():
        hp, g = hyper.for_param(k), grads[k]
        acc[k] = state.slots["G"][k] + g * g
        new[k] = p - hp.alpha * g / (np.sqrt(acc[k]) + hp.eps)
    return new, OptimizerState("adagrad", state.t + 1, {"G": acc})


def step_adadelta(params, grads, state, hyper):
    """No learning rate: the step is scaled by RMS of past updates over RMS of gradients."""
    _check(params, grads, state, "adadelta")
    new, eg2, edx2 = {}, {}, {}
    for k, p in params.items():
        hp, g = hyper.for_param(k), grads[k]
        rho = hp.gamma
        eg2[k] = rho * state.slots["Eg2"][k] + (1.0 - rho) * g * g
        dx = -(np.sqrt(state.slots["Edx2"][k] + hp.eps) / np.sqrt(eg2[k] + hp.eps)) * g
        edx2[k] = rho * state.slots["Edx2"][k] + (1.0 - rho) * dx * dx
        new[k] = p + dx
    return new, OptimizerState("adadelta", state.t + 1, {"Eg2": eg2, "Edx2": edx2})


def step_rmsprop(params, grads, state, hyper):
    _check(params, grads, state, "rmsprop")
    new, eg2 = {}, {}
    for k, p in params.items():
        hp, g = hyper.for_param(k), grads[k]
        eg2[k] = RMSPROP_DECAY * state.slots["Eg2"][k] + (1.0 - RMSPROP_DECAY) * g * g
        new[k] = p - hp.alpha * g / (np.sqrt(eg2[k]) + hp.eps)
    return new, OptimizerState("rmsprop", state.t + 1, {"Eg2": eg2})


def _moments(state, grads, hyper, t):
    m, v = {}, {}
    for k, g in grads.items():
        hp = hyper.for_param(k)
        m[k] = hp.beta1 * state.slots["m"][k] + (1.0 - hp.beta1) * g
        v[k] = hp.beta2 * state.slots["v"][k] + (1.0 - hp.beta2) * g * g
    return m, v


def step_adam(params, grads, state, hyper):
    _check(params, grads, state, "adam")
    t = state.t + 1
    m, v = _moments(state, grads, hyper, t)
    new = {}
    for k, p in params.items():
        hp = hyper.for_param(k)
        m_hat = m[k] / (1.0 - hp.beta1 ** t)
        v_hat = v[k] / (1.0 - hp.beta2 ** t)
        new[k] = p - hp.alpha * m_hat / (np.sqrt(v_hat) + hp.eps)
    return new, OptimizerState("adam", t, {"m": m, "v": v})


def step_nadam(params, grads, state, hyper):
    """Adam whose momentum term looks one step ahead using the current gradient."""
    _check(params, grads, state, "nadam")
    t = state.t + 1
    m, v = _moments(state, grads, hyper, t)
    new = {}
    for k, p in params.items():
        hp, g = hyper.for_param(k), grads[k]
        corr1 = 1.0 - hp.beta1 ** t
        m_hat = m[k] / corr1
        v_hat = v[k] / (1.0 - hp.beta2 ** t)
        lookahead = hp.beta1 * m_hat + (1.0 - hp.beta1) * g / corr1
        new[k] = p - hp.alpha / (np.sqrt(v_hat) + hp.eps) * lookahead
    return new, OptimizerState("nadam", t, {"m": m, "v": v})


_STEPS = {
    "sgd": step_sgd, "momentum": step_momentum, "adagrad": step_adagrad,
    "adadelta": step_adadelta, "rmsprop": step_rmsprop, "adam": step_adam,
    "nadam": step_nadam,
}


def step(kind, params, grads_or_fn, state, hyper):
    """Dispatch on ``kind``; ``grads_or_fn`` may be a gradient dict or a callable."""
    if kind == "nag":
        if not callable(grads_or_fn):
            raise TypeError("nag needs a gradient callable evaluated at the look-ahead point")
        return step_nag(params, grads_or_fn, state, hyper)
    if kind not in _STEPS:
        raise ValueError(f"unknown optimizer {kind!r}; expected one of {KINDS}")
    grads = grads_or_fn(params) if callable(grads_or_fn) else grads_or_fn
    return _STEPS[kind](params, grads, state, hyper)


SCHEDULES = ("constant", "halving", "annealing")


def lr_schedule(kind, base_alpha, epoch, plateaus=0, k=0.01):
    """Learning rate for ``epoch``.

    ``plateaus`` counts how many times the plateau signal has fired so far
    (halving divides by two per firing); annealing is ``base / (1 + k*epoch)``.
    """
    if not base_alpha > 0:
        raise ValueError("base learning rate must be > 0")
    if kind == "constant":
        return base_alpha
    if kind == "halving":
        return base_alpha / 2.0 ** plateaus
    if kind == "annealing":
        return base_alpha / (1.0 + k * epoch)
    raise ValueError(f"unknown schedule {kind!r}; expected one of {SCHEDULES}")
