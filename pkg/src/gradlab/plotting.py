"""PNG figures for training runs and optimizer benchmarks."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings, so reruns write identical bytes
_PNG_META = {"Software": None}

STYLE = {
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def plot_training(history, path):
    """Loss and accuracy per epoch for the train and validation splits."""
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(8, 3))
        for split, style in (("train", "-o"), ("val", "-s")):
            recs = [r for r in history if r.split == split]
            if not recs:
                continue
            ep = [r.epoch for r in recs]
            ax_loss.plot(ep, [r.loss for r in recs], style, ms=3, label=split)
            ax_acc.plot(ep, [r.accuracy for r in recs], style, ms=3, label=split)
        for r in history:
            if r.split == "test":
                ax_loss.plot([r.epoch], [r.loss], "k*", ms=8, label="test")
                ax_acc.plot([r.epoch], [r.accuracy], "k*", ms=8, label="test")
        ax_loss.set(xlabel="epoch", ylabel="mean loss", yscale="log", title="loss")
        ax_acc.set(xlabel="epoch", ylabel="accuracy", ylim=(0, 1.02), title="accuracy")
        ax_loss.legend()
        _save(fig, path)


def plot_trajectories(fld, trajectories, path, bounds=None):
    """Iterates of each optimizer over contour lines of a 2-D field."""
    pts = [np.asarray(t.points) for t in trajectories.values()]
    if bounds is None:
        allp = np.concatenate([p[np.all(np.isfinite(p), axis=1) & (np.abs(p).max(axis=1) < 1e3)]
                               for p in pts])
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        pad = 0.15 * np.maximum(hi - lo, 0.5)
        bounds = (lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1])
    xs = np.linspace(bounds[0], bounds[1], 200)
    ys = np.linspace(bounds[2], bounds[3], 200)
    zz = np.array([[fld(np.array([x, y])) for x in xs] for y in ys])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.contour(xs, ys, np.log10(zz + 1e-12), levels=20, cmap="viridis", linewidths=0.6)
        for kind, p in zip(trajectories, pts):
            ax.plot(p[:, 0], p[:, 1], lw=0.9, label=kind)
        if fld.minimizer is not None:
            ax.plot(*fld.minimizer, "r*", ms=9)
        ax.set(xlim=bounds[:2], ylim=bounds[2:], xlabel="x0", ylabel="x1", title=fld.name)
        ax.legend(loc="best")
        _save(fig, path)


def plot_convergence(trajectories, path, title=""):
    """Gradient norm against step, log scale."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for kind, t in trajectories.items():
            g = np.asarray(t.grad_norms)
            ax.semilogy(np.arange(g.size), g, label=kind)
        ax.set(xlabel="step", ylabel="|grad f|", title=title)
        ax.legend(loc="best")
        _save(fig, path)
