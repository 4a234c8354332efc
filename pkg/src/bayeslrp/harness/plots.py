"""Matplotlib figures written next to the CSV tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
params = {
    "axes.labelsize": 9,
    "font.size": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "figure.dpi": 150,
    "lines.markersize": 3,
    "lines.linewidth": 1,
}
# Agg writes no timestamp; pinning Software keeps reruns byte-identical
PNG_META = {"Software": None}


def _style():
    plt.rcParams.update(params)


def _groups(records):
    out = {}
    for r in records:
        out.setdefault((r.model_kind, r.sample_count), []).append(r)
    return dict(sorted(out.items(), key=lambda kv: (kv[0][0] != "deterministic", kv[0])))


def robustness_histograms(records, path):
    """One row per model, one column per (layer, k): k-LRP distributions."""
    _style()
    groups = _groups(records)
    keys = sorted(records[0].klrp)
    fig, axes = plt.subplots(len(groups), len(keys), figsize=(1.6 * len(keys), 1.2 * len(groups) + 0.6),
                             sharex=True, squeeze=False)
    bins = np.linspace(0, 1, 21)
    for i, ((kind, n), rs) in enumerate(groups.items()):
        for j, key in enumerate(keys):
            ax = axes[i, j]
            ax.hist([r.klrp[key] for r in rs], bins=bins, color="C0" if kind == "deterministic" else "C1")
            if i == 0:
                ax.set_title(f"layer {key[0]}, k={key[1]}", fontsize=7)
            if j == 0:
                ax.set_ylabel(f"{kind}\nN={n}", fontsize=7)
    for ax in axes[-1]:
        ax.set_xlabel("k-LRP robustness")
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)


def robustness_scatter(records, key, path):
    """k-LRP robustness against softmax robustness per model."""
    _style()
    groups = _groups(records)
    fig, axes = plt.subplots(1, len(groups), figsize=(2.2 * len(groups), 2.4), sharey=True, squeeze=False)
    for ax, ((kind, n), rs) in zip(axes[0], groups.items()):
        ax.scatter([r.softmax_robustness for r in rs], [r.klrp[key] for r in rs], s=4, alpha=0.5,
                   color="C0" if kind == "deterministic" else "C1")
        ax.set_title(f"{kind} N={n}", fontsize=7)
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("softmax robustness")
    axes[0, 0].set_ylabel(f"{key[1]}-LRP robustness (layer {key[0]})")
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)


def heatmap_pair(hm_x, hm_adv, x, x_adv, k, path, side=28):
    """Clean and adversarial images with their top-k relevant pixels."""
    _style()
    fig, axes = plt.subplots(1, 4, figsize=(6.4, 1.9))
    for ax, img, title in ((axes[0], x, "x"), (axes[2], x_adv, "adversarial")):
        ax.imshow(np.reshape(img, (side, side)), cmap="gray", vmin=0, vmax=1)
        ax.set_title(title, fontsize=7)
    for ax, hm, title in ((axes[1], hm_x, "R(x)"), (axes[3], hm_adv, "R(adversarial)")):
        shown = np.zeros_like(hm)
        top = np.argsort(-hm, kind="stable")[:k]
        shown[top] = hm[top]
        lim = np.abs(shown).max() or 1.0
        ax.imshow(np.reshape(shown, (side, side)), cmap="seismic", vmin=-lim, vmax=lim)
        ax.set_title(f"{title}, top {k}", fontsize=7)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)


def ratio_curve(rows, path):
    """Zero-averaging ratio against posterior sample count."""
    _style()
    fig, ax = plt.subplots(figsize=(3.4, 3.4 * golden_mean))
    ns = [r["sample_count"] for r in rows]
    ax.plot(ns, [r["ratio"] for r in rows], "o-")
    ax.set_xscale("log")
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("posterior samples N")
    ax.set_ylabel("normal-gradient ratio")
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)


def render_figures(records, out_dir) -> dict:
    from .report import scatter_key

    out = Path(out_dir)
    paths = {"hist_fig": out / "klrp_histograms.png", "scatter_fig": out / "klrp_vs_softmax.png"}
    robustness_histograms(records, paths["hist_fig"])
    robustness_scatter(records, scatter_key(records), paths["scatter_fig"])
    return paths
