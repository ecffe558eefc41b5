"""``gradlab`` command line: train, eval, gradcheck, bench, defaults.

Exit status: 0 success/pass, 1 check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, optim, testfns
from .config import ConfigError, RunConfig, emit_defaults, parse_config
from .datasets import DataFormatError
from .gradcheck import run_suite
from .net import Network, parse_layers
from .tensor import Rng
from .trainer import ConfigurationError, evaluate, fit, split_dataset

log = logging.getLogger("gradlab")


class UsageError(Exception):
    pass


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.set("seed", args.seed)
    if getattr(args, "out_dir", None) is not None:
        cfg.set("output.dir", str(Path(args.out_dir).resolve()))
    if getattr(args, "max_epochs", None) is not None:
        cfg.set("train.max_epochs", args.max_epochs)
    return cfg


def _out_dir(cfg):
    out = cfg.path("output.dir")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args):
    cfg = _load(args)
    out = _out_dir(cfg)
    result = fit(cfg.fit_config())
    io.write_metrics(result.history, out / "metrics.csv")
    io.checkpoint_save(result.net.params, result.state, out / "model.glb")
    if cfg["output.figures"]:
        from .plotting import plot_training
        plot_training(result.history, out / "training.png")
    test = [r for r in result.history if r.split == "test"]
    print(f"stop reason: {result.stop_reason}; best epoch: {result.best_epoch}")
    if test:
        print(f"test loss {test[-1].loss:.6g}  accuracy {test[-1].accuracy:.4f}")
    print(f"wrote {out / 'metrics.csv'} and {out / 'model.glb'}")
    return 0


def cmd_eval(args):
    cfg = _load(args)
    out = _out_dir(cfg)
    fc = cfg.fit_config()
    rngs = Rng(cfg["seed"]).streams()
    _, _, test = split_dataset(fc.data, fc.fractions, rngs["split"])
    probe = Network(test.input_shape, fc.layers)
    params, _ = io.checkpoint_load(args.checkpoint, probe.param_shapes())
    rec = evaluate(probe.with_params(params), test, fc.objective, 0, "test")
    io.write_metrics([rec], out / "eval_metrics.csv")
    print(f"test loss {rec.loss:.6g}  accuracy {rec.accuracy:.4f}  ({len(test)} samples)")
    return 0


def cmd_gradcheck(args):
    cfg = _load(args)
    layers = parse_layers(cfg["net.layers"])
    shape = (1, cfg["data.side"], cfg["data.side"])
    if cfg["data.source"] != "synthetic":
        shape = cfg.dataset().input_shape
    net = Network(shape, layers, rng=Rng(cfg["seed"]).stream("init"))
    results = run_suite(net, seed=cfg["seed"], h=cfg["gradcheck.h"])
    tol = cfg["gradcheck.tolerance"]
    for name, err in results.items():
        print(f"{name:16s} {err:.3e}  {'ok' if err < tol else 'FAIL'}")
    worst = max(results.values())
    print(f"worst relative error: {worst:.3e} (tolerance {tol:g})")
    return 0 if worst < tol else 1


def cmd_bench(args):
    cfg = _load(args)
    out = _out_dir(cfg)
    tol = cfg["bench.tolerance"]
    runs = {
        "quadratic": (testfns.quadratic(), [1.0, 1.0], testfns.DEFAULT_HYPER,
                      cfg["bench.max_steps"]),
        "rosenbrock": (testfns.rosenbrock(), [-1.2, 1.0], testfns.ROSENBROCK_HYPER,
                       cfg["bench.rosenbrock_steps"]),
    }
    summary = []
    for fname, (fld, x0, table, budget) in runs.items():
        trajs = {}
        for kind in optim.KINDS:
            hp = table[kind]
            tr = testfns.gd_trajectory(fld, kind, hp, x0, budget, tol)
            trajs[kind] = tr
            io.write_trajectory(tr, out / f"trajectory_{fname}_{kind}.csv")
            vals = np.asarray(tr.values)
            below = np.flatnonzero(vals < 1e-3)
            summary.append([fname, kind, "" if kind == "adadelta" else repr(hp.alpha),
                            str(tr.converged).lower(), tr.steps,
                            format(tr.values[-1], ".17g"), format(tr.grad_norms[-1], ".17g"),
                            int(below[0]) if below.size else -1, tr.reason])
        if cfg["output.figures"]:
            from .plotting import plot_convergence, plot_trajectories
            plot_trajectories(fld, trajs, out / f"trajectories_{fname}.png")
            plot_convergence(trajs, out / f"convergence_{fname}.png", fname)
    header = ["field", "optimizer", "alpha", "converged", "steps", "final_f",
              "final_grad_norm", "first_step_f_below_1e-3", "reason"]
    with open(out / "bench_summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(summary)
    print(f"{'field':11s} {'optimizer':9s} {'conv':5s} {'steps':>6s} {'final f':>12s}")
    for row in summary:
        print(f"{row[0]:11s} {row[1]:9s} {row[3]:5s} {row[4]:6d} {float(row[5]):12.3e}")
    return 0


def cmd_defaults(args):
    text = emit_defaults()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="gradlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="key = value configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir")
        sp.add_argument("--max-epochs", type=int)

    sp = sub.add_parser("train", help="fit a network; write metrics, checkpoint, figures")
    common(sp)
    sp.set_defaults(func=cmd_train)
    sp = sub.add_parser("eval", help="test-set metrics for a checkpoint")
    common(sp)
    sp.add_argument("checkpoint")
    sp.set_defaults(func=cmd_eval)
    sp = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    common(sp)
    sp.set_defaults(func=cmd_gradcheck)
    sp = sub.add_parser("bench", help="optimizer battery on analytic test functions")
    common(sp)
    sp.set_defaults(func=cmd_bench)
    sp = sub.add_parser("defaults", help="print the configuration reference")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_defaults)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, DataFormatError, io.CheckpointError,
            FileNotFoundError) as exc:
        print(f"gradlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
