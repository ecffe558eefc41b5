"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np

from gradlab import optim
from gradlab.cli import main
from gradlab.config import RunConfig
from gradlab.gradcheck import check_network
from gradlab.net import Activation, Conv, Dense, Flatten, MeanPool, Network, SoftmaxOutput, parse_layers
from gradlab.optim import HyperParams, init_state, step
from gradlab.regularize import (EarlyStopMonitor, dropconnect_forward, dropout_forward,
                                penalty_grad, penalty_value)
from gradlab.tensor import Rng
from gradlab.testfns import DEFAULT_HYPER, gd_trajectory, quadratic, rosenbrock
from gradlab.trainer import BatchPolicy, Dataset, fit, train_epoch


def test_1_gradient_check(verdict):
    start = time.perf_counter()
    layers = [Conv(4, 3, 0, Activation.RELU), MeanPool(2), Flatten(),
              Dense(16, Activation.TANH), SoftmaxOutput(2)]
    worst = 0.0
    for seed in range(3):
        rng = Rng(seed)
        net = Network((1, 8, 8), layers, rng=rng.stream("init"))
        x = rng.stream("data").uniform(0.0, 1.0, (1, 8, 8))
        worst = max(worst, *check_network(net, x, seed % 2, h=1e-5).values())
    elapsed = time.perf_counter() - start
    ok = verdict("1 gradient check", worst < 1e-6 and elapsed < 30,
                 f"worst relative error {worst:.2e} (< 1e-6), {elapsed:.1f}s (< 30s)")
    assert ok


def first_step(kind, g, hyper):
    params = {"p": np.array([0.0])}
    grads = {"p": np.array([g])}
    fn = (lambda _p: grads) if kind == "nag" else grads
    new, _ = step(kind, params, fn, init_state(kind, params), hyper)
    return float(new["p"][0])


def test_2_optimizer_oracles(verdict):
    # Oracles are written out from the update rules by hand, independent of the package code.
    a, eps = 0.01, 1e-8
    cases = []
    for g in (0.5, -2.0):
        s = math.copysign(1.0, g)
        cases.append((f"adam g={g}", first_step("adam", g, HyperParams(alpha=a)), -a * g / (abs(g) + eps)))
        cases.append((f"adagrad g={g}", first_step("adagrad", g, HyperParams(alpha=a)), -a * g / (abs(g) + eps)))
        cases.append((f"rmsprop g={g}", first_step("rmsprop", g, HyperParams(alpha=a)),
                      -a * g / (math.sqrt(0.1 * g * g) + eps)))
        assert abs(-a * g / (math.sqrt(0.1 * g * g) + eps) / (-a * s) - 3.16227766) < 1e-6
    cases.append(("adadelta g=1", first_step("adadelta", 1.0, HyperParams(gamma=0.9, eps=1e-6)),
                  -math.sqrt(1e-6) / math.sqrt(0.1 + 1e-6)))
    # Nadam, t=1, g=0.5: m_hat = g, inner = 0.9*0.5 + 0.1*0.5/0.1 = 0.95, v_hat = 0.25
    cases.append(("nadam g=0.5", first_step("nadam", 0.5, HyperParams(alpha=a)),
                  -a * 0.95 / (math.sqrt(0.25) + eps)))
    worst_name, worst = None, 0.0
    for name, got, want in cases:
        rel = abs(got - want) / abs(want)
        if rel >= worst:
            worst_name, worst = name, rel
    ok = verdict("2 optimizer oracles", worst < 1e-6,
                 f"{len(cases)} first steps, worst relative error {worst:.1e} ({worst_name})")
    assert ok


def tiny_data(g, n):
    return Dataset([(g.uniform(size=(1, 3, 3)), int(g.integers(0, 2))) for _ in range(n)], 2)


def test_3_reduction_lattice(verdict):
    from gradlab.loss import Objective
    from gradlab.regularize import RegularizerConfig

    g = np.random.default_rng(2024)
    counts = {"momentum(0)=sgd": 0, "nag(0)=sgd": 0, "mini_batch(1)=stochastic": 0,
              "mini_batch(N)=full_batch": 0}
    for _ in range(100):
        params = {"a": g.normal(size=(3, 4)), "b": g.normal(size=5)}
        grads = {k: g.normal(size=v.shape) for k, v in params.items()}
        hp = HyperParams(alpha=float(g.uniform(1e-3, 1.0)), gamma=0.0)
        ref, _ = step("sgd", params, grads, init_state("sgd", params), hp)
        mom, _ = step("momentum", params, grads, init_state("momentum", params), hp)
        nag, _ = step("nag", params, lambda p: grads, init_state("nag", params), hp)
        counts["momentum(0)=sgd"] += all(ref[k].tobytes() == mom[k].tobytes() for k in params)
        counts["nag(0)=sgd"] += all(ref[k].tobytes() == nag[k].tobytes() for k in params)

    layers = parse_layers("flatten,dense:3:tanh,softmax:2")
    obj = Objective(penalty=RegularizerConfig("l2", 1e-3, dropout=1.0))
    for trial in range(100):
        n = int(g.integers(2, 9))
        data = tiny_data(g, n)
        net = Network(data.input_shape, layers, rng=Rng(trial).stream("init"))
        hp = HyperParams(alpha=float(g.uniform(1e-3, 1.0)))

        def epoch(policy):
            out, _, _ = train_epoch(net, data, obj, "sgd", hp, init_state("sgd", net.params),
                                    policy, Rng(trial).streams())
            return out.params

        for label, p, q in (("mini_batch(1)=stochastic", BatchPolicy("mini_batch", 1), BatchPolicy("stochastic")),
                            ("mini_batch(N)=full_batch", BatchPolicy("mini_batch", n), BatchPolicy("full_batch"))):
            a, b = epoch(p), epoch(q)
            counts[label] += all(a[k].tobytes() == b[k].tobytes() for k in a)
    ok = verdict("3 reduction lattice", all(c == 100 for c in counts.values()),
                 ", ".join(f"{k} {v}/100" for k, v in counts.items()))
    assert ok


def test_4_convergence_battery(verdict):
    start = time.perf_counter()
    steps = {}
    for kind in optim.KINDS:
        tr = gd_trajectory(quadratic(), kind, DEFAULT_HYPER[kind], [1.0, 1.0], 10_000, 1e-6)
        steps[kind] = tr.steps if tr.converged else None
    tr = gd_trajectory(rosenbrock(), "adam", HyperParams(alpha=0.01), [-1.2, 1.0], 50_000, 1e-6)
    below = [i for i, v in enumerate(tr.values) if v < 1e-3]
    elapsed = time.perf_counter() - start
    ok = (all(s is not None for s in steps.values()) and bool(below) and elapsed < 60)
    verdict("4 convergence battery", ok,
            "bowl steps " + " ".join(f"{k}={v}" for k, v in steps.items())
            + f"; rosenbrock adam f<1e-3 at step {below[0] if below else 'never'}; {elapsed:.1f}s (< 60s)")
    assert ok


def test_5_desk_scale_training(verdict):
    start = time.perf_counter()
    cfg = RunConfig()  # adam, dropout 0.5, l2 1e-4, early stopping, 20 epochs, 1000 samples
    accs = []
    for seed in (0, 1, 2):
        cfg.set("seed", seed)
        a, b = fit(cfg.fit_config()), fit(cfg.fit_config())
        assert a.history == b.history, f"seed {seed} not deterministic"
        epochs = sum(r.split == "train" for r in a.history)
        assert epochs <= 20
        accs.append(a.history[-1].accuracy)
    elapsed = time.perf_counter() - start
    ok = verdict("5 desk-scale training", min(accs) >= 0.95 and elapsed < 300,
                 f"test accuracy {', '.join(f'{x:.3f}' for x in accs)} for seeds 0-2 (>= 0.95), "
                 f"deterministic, {elapsed:.1f}s (< 300s)")
    assert ok


def test_6_regularizer_statistics(verdict):
    n = 10_000
    x = np.array([1.0, -2.0, 0.5, 3.0, -0.25])
    p = 0.5
    rng = Rng(11).stream("dropout")
    mean = np.mean([dropout_forward(x, p, "train", rng)[0] for _ in range(n)], axis=0)
    z_drop = np.max(np.abs(mean - p * x) / (np.abs(x) * math.sqrt(p * (1 - p) / n)))

    w = np.array([[0.5, -1.0, 2.0], [0.25, 1.5, -0.75]])
    q = 0.7
    rng = Rng(12).stream("dropconnect")
    mean = np.mean([dropconnect_forward(w, q, "train", rng)[0] for _ in range(n)], axis=0)
    z_conn = np.max(np.abs(mean - q * w) / (np.abs(w) * math.sqrt(q * (1 - q) / n)))

    g = np.random.default_rng(13)
    v = g.uniform(0.1, 2.0, 20) * np.where(g.random(20) < 0.5, -1, 1)
    h = 1e-6
    fd_err = 0.0
    for kind in ("l2", "l1", "l1_smooth", "elastic"):
        ana = penalty_grad(kind, v, smooth_eps=1e-2)
        for i in range(v.size):
            e = np.zeros_like(v)
            e[i] = h
            num = (penalty_value(kind, v + e, smooth_eps=1e-2) - penalty_value(kind, v - e, smooth_eps=1e-2)) / (2 * h)
            fd_err = max(fd_err, abs(ana[i] - num))
    ok = verdict("6 regularizer statistics", z_drop < 3 and z_conn < 3 and fd_err < 1e-8,
                 f"dropout max |z| {z_drop:.2f}, dropconnect max |z| {z_conn:.2f} (< 3); "
                 f"penalty gradient max abs error {fd_err:.1e} (< 1e-8)")
    assert ok


def test_7_early_stopping_traces(verdict):
    def trace(losses, patience):
        mon = EarlyStopMonitor(patience=patience, delta=0.0)
        for e, v in enumerate(losses):
            d = mon.update(e, v, {"w": np.array([v])})
            if d.stop:
                return e, d.best_epoch, float(d.best_params["w"][0])
        return None, mon.best_epoch, None

    a = trace([1.0, 0.8, 0.9, 0.95], 1)
    b = trace(list(np.linspace(1.0, 0.1, 50)), 1)
    c = trace([1.0, 1.0], 0)
    ok = a == (2, 1, 0.8) and b[0] is None and c[:2] == (1, 0)
    verdict("7 early stopping", ok,
            f"trace stops at index {a[0]} with best epoch {a[1]} (loss {a[2]}); "
            f"decreasing trace stops: {b[0] is not None}; patience 0 stops at index {c[0]}")
    assert ok


def test_8_cli_determinism(verdict, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("seed = 3\noutput.figures = false\n")
    codes = [main(["train", str(conf), "--out-dir", str(tmp_path / d)]) for d in ("a", "b")]
    same = {n: (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
            for n in ("metrics.csv", "model.glb")}
    ok = verdict("8 determinism", codes == [0, 0] and all(same.values()),
                 ", ".join(f"{n} {'identical' if s else 'differs'}" for n, s in same.items()))
    assert ok
