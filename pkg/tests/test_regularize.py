import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradlab.regularize import (Crop, EarlyStopMonitor, HFlip, Jitter, RegularizerConfig,
                                Rotate90, VFlip, augment, dropconnect_forward, dropout_backward,
                                dropout_forward, early_stop_update, format_recipe, hflip,
                                parse_recipe, penalty_grad, penalty_value, rotate90, vflip)
from gradlab.tensor import GeometryError, Rng


def test_penalty_examples():
    w = np.array([3.0, 4.0])
    assert penalty_value("l2", w) == 25.0
    np.testing.assert_array_equal(penalty_grad("l2", w), [6.0, 8.0])
    assert penalty_value("l1", np.array([3.0, -4.0])) == 7.0
    np.testing.assert_array_equal(penalty_grad("l1", np.array([3.0, 0.0, -4.0])), [1, 0, -1])
    assert penalty_value("l1_smooth", np.array([3.0, -4.0]), smooth_eps=1e-14) == pytest.approx(7.0, rel=1e-12)
    np.testing.assert_allclose(penalty_grad("l1_smooth", np.array([3.0, -4.0]), smooth_eps=1e-14),
                               [1.0, -1.0], rtol=1e-12)
    assert penalty_value("none", w) == 0.0
    assert penalty_value("elastic", w, smooth_eps=1e-14, l1_ratio=0.25) == pytest.approx(0.25 * 7 + 0.75 * 25)


def fd(f, w, h=1e-6):
    out = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e.flat[i] = h
        out.flat[i] = (f(w + e) - f(w - e)) / (2 * h)
    return out


@pytest.mark.parametrize("kind", ["l2", "l1", "l1_smooth", "elastic"])
def test_penalty_grad_matches_fd_away_from_zero(kind):
    w = np.random.default_rng(0).uniform(0.1, 2.0, 10) * np.array([1, -1] * 5)
    num = fd(lambda v: penalty_value(kind, v, smooth_eps=1e-2), w)
    np.testing.assert_allclose(penalty_grad(kind, w, smooth_eps=1e-2), num, atol=1e-8)


def test_smooth_l1_grad_matches_fd_everywhere():
    w = np.linspace(-1e-3, 1e-3, 21)
    num = fd(lambda v: penalty_value("l1_smooth", v, smooth_eps=1e-2), w)
    np.testing.assert_allclose(penalty_grad("l1_smooth", w, smooth_eps=1e-2), num, atol=1e-8)


def test_dropout_examples():
    x = np.array([2.0, 4.0])
    y, mask = dropout_forward(x, 1.0, "train", Rng(0))
    np.testing.assert_array_equal(y, x)
    np.testing.assert_array_equal(mask, 1.0)
    y, _ = dropout_forward(x, 0.5, "infer")
    np.testing.assert_array_equal(y, [1.0, 2.0])
    with pytest.raises(ValueError):
        dropout_forward(x, 0.0, "train", Rng(0))


def test_dropout_monte_carlo_expectation():
    x = np.array([1.0, -2.0, 0.5, 3.0])
    p, n = 0.5, 10_000
    rng = Rng(1).stream("dropout")
    samples = np.array([dropout_forward(x, p, "train", rng)[0] for _ in range(n)])
    se = np.abs(x) * np.sqrt(p * (1 - p) / n)
    infer, _ = dropout_forward(x, p, "infer")
    assert np.all(np.abs(samples.mean(axis=0) - infer) < 3 * se)


def test_dropout_backward():
    up = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(dropout_backward(up, np.ones(3)), up)
    np.testing.assert_array_equal(dropout_backward(up, np.array([1.0, 0.0, 1.0])), [1, 0, 3])
    with pytest.raises(ValueError):
        dropout_backward(up, np.ones(2))


def test_dropconnect_examples_and_expectation():
    w = np.array([[0.5, -1.0], [2.0, 0.25]])
    out, _ = dropconnect_forward(w, 1.0, "train", Rng(0))
    np.testing.assert_array_equal(out, w)
    q, n = 0.7, 10_000
    rng = Rng(2).stream("dropconnect")
    mean = np.mean([dropconnect_forward(w, q, "train", rng)[0] for _ in range(n)], axis=0)
    se = np.abs(w) * np.sqrt(q * (1 - q) / n)
    assert np.all(np.abs(mean - q * w) < 3 * se)
    np.testing.assert_array_equal(dropconnect_forward(w, q, "infer")[0], q * w)


def test_dropconnect_equals_dropout_for_single_weight():
    """With one weight and one output, masking the weight or the output is the same event."""
    w, x, q = np.array([[1.7]]), np.array([0.6]), 0.4
    a = Rng(5).stream("dropout")
    b = Rng(5).stream("dropout")
    for _ in range(50):
        wm, _ = dropconnect_forward(w, q, "train", a)
        y, _ = dropout_forward(w @ x, q, "train", b)
        np.testing.assert_array_equal(wm @ x, y)


def test_flip_and_rotate_examples():
    img = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    np.testing.assert_array_equal(hflip(img), [[[2.0, 1.0], [4.0, 3.0]]])
    np.testing.assert_array_equal(hflip(hflip(img)), img)
    np.testing.assert_array_equal(rotate90(img), [[[3.0, 1.0], [4.0, 2.0]]])
    r = img
    for _ in range(4):
        r = rotate90(r)
    np.testing.assert_array_equal(r, img)
    with pytest.raises(GeometryError):
        rotate90(np.zeros((1, 2, 3)))


@given(st.integers(0, 2**32 - 1))
def test_augment_preserves_shape_and_multiset(seed):
    img = np.random.default_rng(seed).uniform(size=(2, 4, 4))
    out = augment(img, (HFlip(0.5), VFlip(0.5), Rotate90(0.5)), Rng(seed).stream("augment"))
    assert out.shape == img.shape
    np.testing.assert_array_equal(np.sort(out, axis=None), np.sort(img, axis=None))
    cropped = augment(img, (Crop(1, 4),), Rng(seed).stream("augment"))
    assert cropped.shape == img.shape
    small = augment(img, (Crop(0, 3),), Rng(seed).stream("augment"))
    assert small.shape == (2, 3, 3)


def test_augment_jitter_and_errors():
    img = np.zeros((2, 3, 3))
    out = augment(img, (Jitter(0.1),), Rng(0))
    for m in range(2):
        assert np.all(out[m] == out[m, 0, 0]) and abs(out[m, 0, 0]) <= 0.1
    with pytest.raises(GeometryError):
        augment(img, (Crop(0, 4),), Rng(0))


def test_recipe_roundtrip():
    text = "hflip:0.5,vflip:0.25,rotate90:0.5,crop:1:8,jitter:0.05"
    assert format_recipe(parse_recipe(text)) == text
    with pytest.raises(ValueError):
        parse_recipe("shear:0.3")


def test_config_validation():
    with pytest.raises(ValueError):
        RegularizerConfig(dropout=0.0)
    with pytest.raises(ValueError):
        RegularizerConfig(lam=-1.0)
    with pytest.raises(ValueError):
        RegularizerConfig(penalty="l3")


def params_at(epoch):
    return {"w": np.array([float(epoch)])}


def test_early_stop_hand_trace():
    mon = EarlyStopMonitor(patience=1, delta=0.0)
    decisions = [early_stop_update(mon, e, v, params_at(e)) for e, v in enumerate([1.0, 0.8, 0.9])]
    assert [d.stop for d in decisions] == [False, False, True]
    assert decisions[-1].best_epoch == 1
    assert decisions[-1].best_params["w"][0] == 1.0


def test_early_stop_never_on_strict_decrease():
    mon = EarlyStopMonitor(patience=0)
    for e, v in enumerate(np.linspace(2.0, 0.1, 30)):
        assert not mon.update(e, v, params_at(e)).stop


def test_early_stop_patience_zero_stops_immediately():
    mon = EarlyStopMonitor(patience=0)
    assert not mon.update(0, 1.0, params_at(0)).stop
    d = mon.update(1, 1.0, params_at(1))
    assert d.stop and d.best_epoch == 0


def test_early_stop_delta_and_epoch_order():
    mon = EarlyStopMonitor(patience=5, delta=0.1)
    mon.update(0, 1.0, params_at(0))
    mon.update(1, 0.95, params_at(1))
    assert mon.best_epoch == 0 and mon.since_improvement == 1
    mon.update(2, 0.85, params_at(2))
    assert mon.best_epoch == 2 and mon.since_improvement == 0
    with pytest.raises(ValueError):
        mon.update(2, 0.5, params_at(2))


@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=30), st.integers(0, 4))
def test_early_stop_snapshot_is_minimum(losses, patience):
    mon = EarlyStopMonitor(patience=patience)
    for e, v in enumerate(losses):
        d = mon.update(e, v, params_at(e))
        if d.stop:
            break
    seen = losses[:e + 1]
    assert mon.best_loss == min(seen)
    assert mon.best_params["w"][0] == seen.index(min(seen))
