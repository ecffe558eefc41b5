"""Analytic test functions, derivative oracles and optimizer trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import optim

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class ScalarField:
    name: str
    dim: int
    f: Callable
    grad: Callable
    minimizer: np.ndarray | None = None
    minimum: float | None = None

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=np.float64))


def quadratic(scales=(1.0, 1.0)) -> ScalarField:
    """Bowl ``0.5 * sum(scales_i * x_i**2)`` with its minimum at the origin."""
    lam = np.asarray(scales, dtype=np.float64)
    return ScalarField(
        name="quadratic", dim=lam.size,
        f=lambda x: 0.5 * float(np.sum(lam * x * x)),
        grad=lambda x: lam * np.asarray(x, dtype=np.float64),
        minimizer=np.zeros(lam.size), minimum=0.0)


def _rosen(x):
    return float((1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2)


def _rosen_grad(x):
    x = np.asarray(x, dtype=np.float64)
    return np.array([-2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] ** 2),
                     200.0 * (x[1] - x[0] ** 2)])


def rosenbrock() -> ScalarField:
    return ScalarField("rosenbrock", 2, _rosen, _rosen_grad, np.array([1.0, 1.0]), 0.0)


FIELDS = {"quadratic": quadratic, "rosenbrock": rosenbrock}


def fd_gradient(f, x, h=1e-5):
    """Central differences, one coordinate at a time."""
    if not h > 0:
        raise ValueError("step h must be > 0")
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def directional_derivative(f, x, v):
    """Rate of change of ``f`` at ``x`` along the unit vector of ``v``.

    ``f`` may be a :class:`ScalarField` (analytic gradient) or a plain callable
    (central-difference gradient).
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("direction must be non-zero")
    grad = f.grad(x) if isinstance(f, ScalarField) else fd_gradient(f, x)
    return float(np.dot(grad, v / norm))


def difference_quotient(f, x, v, h=1e-6):
    """One-sided ``(f(x + h*u) - f(x)) / h`` with ``u = v/|v|``."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(v, dtype=np.float64) / np.linalg.norm(v)
    return (f(x + h * u) - f(x)) / h


@dataclass
class Trajectory:
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    converged: bool = False
    steps: int = 0
    reason: str = ""


# Step sizes the convergence battery uses on the unit quadratic bowl.
DEFAULT_HYPER = {
    "sgd": optim.HyperParams(alpha=0.1),
    "momentum": optim.HyperParams(alpha=0.1, gamma=0.9),
    "nag": optim.HyperParams(alpha=0.1, gamma=0.9),
    "adagrad": optim.HyperParams(alpha=0.5),
    "adadelta": optim.HyperParams(gamma=0.9, eps=1e-6),
    "rmsprop": optim.HyperParams(alpha=0.01),
    "adam": optim.HyperParams(alpha=0.01),
    "nadam": optim.HyperParams(alpha=0.01),
}


def gd_trajectory(fld: ScalarField, kind, hyper, x0, max_steps=10_000, tol=1e-6):
    """Run an optimizer on ``fld`` until ``|grad| < tol`` or the budget runs out."""
    x = np.array(x0, dtype=np.float64)
    params = {"x": x}
    state = optim.init_state(kind, params)
    traj = Trajectory()

    def record(p):
        g = fld.grad(p)
        traj.points.append(p.copy())
        traj.values.append(fld(p))
        gn = float(np.linalg.norm(g))
        traj.grad_norms.append(gn)
        return gn

    gn = record(x)
    grad_fn = lambda p: {"x": fld.grad(p["x"])}
    for k in range(max_steps):
        if gn < tol:
            traj.converged, traj.steps, traj.reason = True, k, "tolerance"
            return traj
        params, state = optim.step(kind, params, grad_fn, state, hyper)
        x = params["x"]
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            traj.steps, traj.reason = k + 1, "diverged"
            traj.points.append(x.copy())
            traj.values.append(float("nan"))
            traj.grad_norms.append(float("nan"))
            return traj
        gn = record(x)
    traj.steps = max_steps
    if gn < tol:
        traj.converged, traj.reason = True, "tolerance"
    else:
        traj.reason = "max_steps"
    return traj

# Rosenbrock step sizes for the bench report, picked to stay stable from (-1.2, 1).
ROSENBROCK_HYPER = {
    "sgd": optim.HyperParams(alpha=1e-3),
    "momentum": optim.HyperParams(alpha=1e-3, gamma=0.9),
    "nag": optim.HyperParams(alpha=1e-3, gamma=0.9),
    "adagrad": optim.HyperParams(alpha=0.1),
    "adadelta": optim.HyperParams(gamma=0.9, eps=1e-6),
    "rmsprop": optim.HyperParams(alpha=1e-4),
    "adam": optim.HyperParams(alpha=0.01),
    "nadam": optim.HyperParams(alpha=0.01),
}
