import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradlab import optim
from gradlab.testfns import (DEFAULT_HYPER, difference_quotient, directional_derivative,
                             fd_gradient, gd_trajectory, quadratic, rosenbrock)


def test_fd_gradient_examples():
    np.testing.assert_array_equal(fd_gradient(lambda x: 4.0, np.array([1.0, 2.0])), [0.0, 0.0])
    assert fd_gradient(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)[0] == pytest.approx(6.0, abs=1e-8)
    r = rosenbrock()
    np.testing.assert_allclose(fd_gradient(r, np.array([0.5, 0.5])), r.grad([0.5, 0.5]), atol=1e-6)
    with pytest.raises(ValueError):
        fd_gradient(r, np.zeros(2), 0.0)


@pytest.mark.parametrize("fld", [quadratic((1.0, 3.0, 0.5)), rosenbrock()], ids=["quadratic", "rosenbrock"])
def test_analytic_gradient_matches_fd(fld):
    g = np.random.default_rng(0)
    for _ in range(100):
        x = g.uniform(-2, 2, fld.dim)
        a, n = fld.grad(x), fd_gradient(fld, x, 1e-6)
        assert np.linalg.norm(a - n) <= 1e-6 * max(np.linalg.norm(a), 1.0)


def test_directional_derivative_examples():
    f = lambda x: float(x[0])
    assert directional_derivative(f, np.array([0.3, -1.0]), np.array([2.0, 0.0])) == pytest.approx(1.0, abs=1e-8)
    q = quadratic()
    x = np.array([1.0, 2.0])
    assert abs(directional_derivative(q, x, np.array([2.0, -1.0]))) < 1e-8
    with pytest.raises(ValueError):
        directional_derivative(q, x, np.zeros(2))


def test_directional_derivative_matches_limit_quotient():
    g = np.random.default_rng(1)
    q = quadratic((2.0, 0.5, 1.0))
    for _ in range(20):
        x, v = g.normal(size=3), g.normal(size=3)
        assert directional_derivative(q, x, v) == pytest.approx(difference_quotient(q, x, v, 1e-6), abs=1e-4)


def test_sgd_trajectory_geometric_decay():
    traj = gd_trajectory(quadratic(), "sgd", optim.HyperParams(alpha=0.1), [1.0, 1.0], 10_000, 1e-6)
    assert traj.converged and traj.steps <= 150
    for k, p in enumerate(traj.points[:20]):
        np.testing.assert_allclose(p, [0.9 ** k] * 2, rtol=1e-13)


def test_trajectory_from_minimizer_and_divergence():
    traj = gd_trajectory(quadratic(), "sgd", optim.HyperParams(alpha=0.1), [0.0, 0.0])
    assert traj.converged and traj.steps == 0
    bad = gd_trajectory(quadratic(), "sgd", optim.HyperParams(alpha=2.5), [1.0, 1.0])
    assert not bad.converged and bad.reason == "diverged"


@settings(max_examples=50)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2).filter(lambda v: any(abs(c) > 1e-3 for c in v)),
       st.floats(1e-3, 1.9))
def test_descent_property_on_quadratic(x, alpha):
    q = quadratic()
    x = np.array(x)
    assert q(x - alpha * q.grad(x)) < q(x)


@pytest.mark.parametrize("kind", optim.KINDS)
def test_default_hyper_converges_on_bowl(kind):
    traj = gd_trajectory(quadratic(), kind, DEFAULT_HYPER[kind], [1.0, 1.0], 10_000, 1e-6)
    assert traj.converged
