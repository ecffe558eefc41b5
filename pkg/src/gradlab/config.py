"""Flat ``key = value`` run configuration.

One pair per line, ``#`` starts a comment, dotted keys group related settings
(``optimizer.alpha = 0.001``).  Unknown keys are rejected.  Relative paths are
resolved against the directory of the config file.  ``emit_defaults()``
produces the reference file listing every key with its default.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from . import net as netmod
from . import optim
from .loss import LOSSES, Objective
from .regularize import PENALTIES, RegularizerConfig, format_recipe, parse_recipe
from .trainer import BatchPolicy, ConfigurationError, FitConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _choice(*options):
    def check(v):
        return None if v in options else f"must be one of {', '.join(options)}"
    return check


def _range(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}"
        return None
    return check


def _layers_ok(v):
    try:
        netmod.parse_layers(v)
    except ValueError as exc:
        return str(exc)
    return None


def _recipe_ok(v):
    try:
        parse_recipe(v)
    except ValueError as exc:
        return str(exc)
    return None


def _batch_ok(v):
    try:
        BatchPolicy.parse(v)
    except (ValueError, ConfigurationError) as exc:
        return str(exc)
    return None


@dataclass(frozen=True)
class Key:
    name: str
    default: Any
    parse: Callable
    check: Callable | None = None
    doc: str = ""


KEYS = [
    Key("seed", 0, int, _range(0), "master seed; every random stream derives from it"),
    Key("data.source", "synthetic", str, _choice("synthetic", "idx", "csv"),
        "synthetic | idx | csv"),
    Key("data.images", "", str, None, "IDX image file (data.source = idx)"),
    Key("data.labels", "", str, None, "IDX label file (data.source = idx)"),
    Key("data.csv", "", str, None, "CSV file label,p1,...,pN (data.source = csv)"),
    Key("data.side", 8, int, _range(2), "image side for csv and synthetic data"),
    Key("data.samples", 1000, int, _range(3), "synthetic sample count"),
    Key("data.noise", 0.05, float, _range(0.0), "synthetic pixel noise std"),
    Key("data.classes", 0, int, _range(0), "class count; 0 infers it from the labels"),
    Key("data.train_fraction", 0.8, float, _range(0.0, 1.0, lo_open=True, hi_open=True), ""),
    Key("data.val_fraction", 0.1, float, _range(0.0, 1.0, lo_open=True, hi_open=True), ""),
    Key("data.test_fraction", 0.1, float, _range(0.0, 1.0, lo_open=True, hi_open=True), ""),
    Key("net.layers", "conv:4:3:0:relu,pool:2,flatten,dense:16:tanh,softmax:2", str,
        _layers_ok, "comma-separated layers: conv:maps:kernel[:pad[:act]], pool:s, "
        "flatten, dense:units[:act], softmax:classes"),
    Key("loss.kind", "cross_entropy", str, _choice(*LOSSES), "cross_entropy | mse"),
    Key("optimizer.kind", "adam", str, _choice(*optim.KINDS), " | ".join(optim.KINDS)),
    Key("optimizer.alpha", 0.01, float, _range(0.0), "learning rate (ignored by adadelta)"),
    Key("optimizer.gamma", 0.9, float, _range(0.0, 1.0),
        "momentum coefficient; decay rate for adadelta"),
    Key("optimizer.beta1", 0.9, float, _range(0.0, 1.0, hi_open=True), ""),
    Key("optimizer.beta2", 0.999, float, _range(0.0, 1.0, hi_open=True), ""),
    Key("optimizer.eps", 1e-8, float, _range(0.0, lo_open=True), ""),
    Key("regularize.penalty", "l2", str, _choice(*PENALTIES), " | ".join(PENALTIES)),
    Key("regularize.lambda", 1e-4, float, _range(0.0), "penalty strength"),
    Key("regularize.smooth_eps", 1e-6, float, _range(0.0, lo_open=True),
        "smoothing term of the differentiable l1 penalty"),
    Key("regularize.l1_ratio", 0.5, float, _range(0.0, 1.0), "elastic-net l1 share"),
    Key("regularize.dropout", 0.5, float, _range(0.0, 1.0, lo_open=True),
        "dropout keep-probability on dense layers"),
    Key("regularize.dropconnect", 1.0, float, _range(0.0, 1.0, lo_open=True),
        "dropconnect keep-probability on dense weights"),
    Key("regularize.augment", "", str, _recipe_ok,
        "e.g. hflip:0.5,vflip:0.5,rotate90:0.5,crop:1:8,jitter:0.05"),
    Key("train.batch", "mini_batch:32", str, _batch_ok,
        "full_batch | stochastic | mini_batch:<n>"),
    Key("train.max_epochs", 20, int, _range(0), ""),
    Key("early_stop.patience", 3, int, _range(-1), "-1 disables early stopping"),
    Key("early_stop.delta", 0.0, float, _range(0.0), "minimum improvement"),
    Key("schedule.kind", "constant", str, _choice(*optim.SCHEDULES),
        " | ".join(optim.SCHEDULES)),
    Key("schedule.k", 0.01, float, _range(0.0), "annealing rate: alpha / (1 + k * epoch)"),
    Key("output.dir", "out", str, None, "directory for metrics, checkpoints and figures"),
    Key("output.record_time", False, _bool, None,
        "write wall-clock ms to metrics (breaks byte-identical reruns)"),
    Key("output.figures", True, _bool, None, "render PNG figures next to the CSV files"),
    Key("gradcheck.h", 1e-5, float, _range(0.0, lo_open=True), "central-difference step"),
    Key("gradcheck.tolerance", 1e-6, float, _range(0.0, lo_open=True),
        "maximum relative error"),
    Key("bench.max_steps", 10000, int, _range(1), "quadratic-bowl step budget"),
    Key("bench.rosenbrock_steps", 50000, int, _range(1), "Rosenbrock step budget"),
    Key("bench.tolerance", 1e-6, float, _range(0.0, lo_open=True), "gradient-norm tolerance"),
]
KEY_MAP = {k.name: k for k in KEYS}
_PATH_KEYS = ("data.images", "data.labels", "data.csv", "output.dir")


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class RunConfig:
    """Validated mapping from dotted key to typed value."""

    def __init__(self, values=None, base_dir="."):
        self.values = {k.name: k.default for k in KEYS}
        self.base_dir = Path(base_dir)
        for name, value in (values or {}).items():
            self.set(name, value)

    def set(self, name, value, line=None):
        where = f"line {line}: " if line is not None else ""
        key = KEY_MAP.get(name)
        if key is None:
            raise ConfigError(f"{where}unknown key {name!r}")
        try:
            if isinstance(value, str) or key.parse is not _bool:
                v = key.parse(value)
            else:
                v = bool(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}{name}: {exc}") from None
        if key.check is not None:
            msg = key.check(v)
            if msg:
                raise ConfigError(f"{where}{name} = {value!r}: {msg}")
        self.values[name] = v

    def __getitem__(self, name):
        return self.values[name]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def path(self, name):
        p = Path(self.values[name])
        return p if p.is_absolute() else self.base_dir / p

    def validate(self):
        fr = (self["data.train_fraction"], self["data.val_fraction"], self["data.test_fraction"])
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"data fractions sum to {sum(fr)}, not 1")
        src = self["data.source"]
        needed = {"idx": ("data.images", "data.labels"), "csv": ("data.csv",)}.get(src, ())
        for name in needed:
            if not self[name]:
                raise ConfigError(f"{name} is required when data.source = {src}")
            if not self.path(name).is_file():
                raise ConfigError(f"{name}: file not found: {self.path(name)}")
        return self

    # -- builders ---------------------------------------------------------------

    def hyper(self):
        return optim.HyperParams(alpha=self["optimizer.alpha"], gamma=self["optimizer.gamma"],
                                 beta1=self["optimizer.beta1"], beta2=self["optimizer.beta2"],
                                 eps=self["optimizer.eps"])

    def regularizer(self):
        return RegularizerConfig(
            penalty=self["regularize.penalty"], lam=self["regularize.lambda"],
            smooth_eps=self["regularize.smooth_eps"], l1_ratio=self["regularize.l1_ratio"],
            dropout=self["regularize.dropout"], dropconnect=self["regularize.dropconnect"],
            augment=parse_recipe(self["regularize.augment"]))

    def objective(self):
        return Objective(self["loss.kind"], self.regularizer())

    def dataset(self):
        from . import datasets

        k = self["data.classes"] or None
        src = self["data.source"]
        if src == "idx":
            return datasets.load_idx(self.path("data.images"), self.path("data.labels"), k)
        if src == "csv":
            return datasets.load_csv(self.path("data.csv"), self["data.side"], k)
        return datasets.quadrant_task(self["data.samples"], self["data.side"], self["seed"],
                                      self["data.noise"])

    def fit_config(self, data=None):
        patience = self["early_stop.patience"]
        return FitConfig(
            layers=netmod.parse_layers(self["net.layers"]),
            data=data if data is not None else self.dataset(),
            fractions=(self["data.train_fraction"], self["data.val_fraction"],
                       self["data.test_fraction"]),
            objective=self.objective(), optimizer=self["optimizer.kind"], hyper=self.hyper(),
            policy=BatchPolicy.parse(self["train.batch"]), max_epochs=self["train.max_epochs"],
            patience=None if patience < 0 else patience, delta=self["early_stop.delta"],
            schedule=self["schedule.kind"], anneal_k=self["schedule.k"], seed=self["seed"],
            record_time=self["output.record_time"])


def parse_text(text, base_dir="."):
    cfg = RunConfig(base_dir=base_dir)
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw.strip()!r}")
        name, _, value = line.partition("=")
        cfg.set(name.strip(), value.strip(), line=line_no)
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_text(text, base_dir=path.parent).validate()


def emit(cfg: RunConfig | None = None, comments=True) -> str:
    cfg = cfg or RunConfig()
    lines = []
    for key in KEYS:
        if comments and key.doc:
            lines.append(f"# {key.doc}")
        lines.append(f"{key.name} = {_format(cfg[key.name])}")
    return "\n".join(lines) + "\n"


def emit_defaults() -> str:
    return ("# gradlab run configuration: every key with its default value\n"
            "# Optimizer step sizes for the bench battery live in gradlab.testfns.DEFAULT_HYPER:\n"
            + "".join(f"#   {k}: alpha={hp.alpha!r} gamma={hp.gamma!r} eps={hp.eps!r}\n"
                      for k, hp in _bench_defaults().items())
            + emit())


def _bench_defaults():
    from .testfns import DEFAULT_HYPER
    return DEFAULT_HYPER


__all__ = ["ConfigError", "RunConfig", "KEYS", "parse_config", "parse_text", "emit",
           "emit_defaults", "format_recipe"]
