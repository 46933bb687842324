"""Report figures written next to the CSV/JSON outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .histograms import CHANNELS  # noqa: E402

CHANNEL_TITLES = {"h": "hue", "s": "saturation", "dc": "dark channel", "bc": "bright channel"}

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def histogram_figure(dists, path):
    """Natural, fake and absolute-difference histograms, one row per channel."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(CHANNELS), 3, figsize=(10, 9), squeeze=False)
        for row, ch in enumerate(CHANNELS):
            n, f = dists.natural[ch], dists.fake[ch]
            x = n.centers()
            width = (n.hi - n.lo) / n.k
            panels = ((n.bins, "natural", "C0"), (f.bins, "fake", "C3"), (np.abs(n.bins - f.bins), "|difference|", "k"))
            for col, (vals, name, color) in enumerate(panels):
                ax = axes[row, col]
                ax.bar(x, vals, width=width, color=color, linewidth=0)
                ax.set_title(f"{CHANNEL_TITLES[ch]}: {name}")
                ax.set_xlim(n.lo, n.hi)
        return _save(fig, path)


def roc_figure(roc, auc, path, label=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 4))
        pts = np.asarray(roc)
        ax.plot(pts[:, 0], pts[:, 1], color="C0", label=f"{label or 'model'} (AUC {auc:.4f})")
        ax.plot([0, 1], [0, 1], color="0.7", linestyle=":", linewidth=1)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def threshold_figure(sweep, path, chosen=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(sweep.thresholds, sweep.hter, color="C0")
        ax.axvline(sweep.best_threshold, color="C3", linestyle="--", linewidth=1,
                   label=f"optimum {sweep.best_threshold:.2f}")
        if chosen is not None:
            ax.axvline(chosen, color="0.4", linestyle=":", linewidth=1, label=f"model {chosen:.3f}")
        ax.set_xlabel("threshold")
        ax.set_ylabel("HTER")
        ax.legend(frameon=False)
        return _save(fig, path)


def _pow2_label(v):
    e = np.log2(v)
    if np.isclose(e, round(e)):
        e = int(round(e))
        return f"{2 ** e}" if e >= 0 else f"1/{2 ** -e}"
    return f"{v:g}"


def grid_figure(result, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 6))
        im = ax.imshow(np.ma.masked_invalid(result.hter) * 100, cmap="viridis_r", origin="upper")
        ax.set_xticks(range(len(result.g_grid)), [_pow2_label(g) for g in result.g_grid], rotation=90)
        ax.set_yticks(range(len(result.c_grid)), [_pow2_label(c) for c in result.c_grid])
        ax.set_xlabel("g")
        ax.set_ylabel("c")
        i = result.c_grid.index(result.best_c)
        j = result.g_grid.index(result.best_g)
        ax.plot(j, i, marker="s", markerfacecolor="none", markeredgecolor="r", markersize=12)
        fig.colorbar(im, ax=ax, label="HTER (%)")
        return _save(fig, path)


def cv_figure(cv, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        folds = np.arange(1, len(cv.fold_hter) + 1)
        ax.bar(folds, np.asarray(cv.fold_hter) * 100, color="C0")
        ax.axhline(cv.mean_hter * 100, color="C3", linestyle="--", linewidth=1,
                   label=f"mean {cv.mean_hter * 100:.3f}%")
        ax.set_xticks(folds)
        ax.set_xlabel("fold")
        ax.set_ylabel("HTER (%)")
        ax.legend(frameon=False)
        return _save(fig, path)


def bins_figure(study: dict, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ks = sorted(study)
        ax.plot(ks, [study[k] * 100 for k in ks], marker="o", color="C0")
        ax.set_xlabel("bins per channel")
        ax.set_ylabel("HTER (%)")
        return _save(fig, path)


def channels_figure(planes, path, title=None):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(10, 2.8))
        cmaps = ("hsv", "magma", "gray", "gray")
        for ax, ch, plane, cmap in zip(axes, CHANNELS, planes, cmaps):
            ax.imshow(plane.values, cmap=cmap, vmin=plane.lo, vmax=plane.hi)
            ax.set_title(CHANNEL_TITLES[ch])
            ax.axis("off")
        if title:
            fig.suptitle(title)
        return _save(fig, path)
