"""Report figures, written next to the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evalharness import CATEGORIES, LISTS  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.dpi": 100,
}

# no timestamps or version strings, so reruns produce the same file
PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def confusion_figure(original, transformed, path):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(7, 3.2))
        for ax, mat, title in zip(axes, (original, transformed), ("original", "transformed")):
            mat = np.asarray(mat, dtype=float)
            rows = mat.sum(axis=1, keepdims=True)
            frac = np.divide(mat, rows, out=np.zeros_like(mat), where=rows > 0)
            ax.imshow(frac, cmap="Blues", vmin=0, vmax=1)
            for i in range(3):
                for j in range(3):
                    ax.text(j, i, f"{int(mat[i, j])}", ha="center", va="center",
                            color="white" if frac[i, j] > 0.5 else "black")
            ax.set_xticks(range(3), CATEGORIES)
            ax.set_yticks(range(3), CATEGORIES)
            ax.set_xlabel("predicted")
            ax.set_ylabel("true")
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def f1_figure(report, path):
    names = [name for name, _ in LISTS]
    x = np.arange(len(names))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        ax.bar(x - 0.18, [report.original_f1[n] for n in names], 0.36, label="original (OF1)")
        ax.bar(x + 0.18, [report.transformed_f1[n] for n in names], 0.36, label="transformed (TF1)")
        ax.set_xticks(x, names)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("macro F1")
        ax.legend(loc="lower left")
        fig.tight_layout()
        return _save(fig, path)


def evaluation_figures(report, out):
    return {
        "confusion_png": confusion_figure(report.original_confusion, report.transformed_confusion,
                                          out / "confusion.png"),
        "f1_png": f1_figure(report, out / "f1.png"),
    }


def attack_figure(report, path, title):
    epochs = sorted(report.rows)
    cats = [c for c in ("real_gray", "fake_gray", "generated", "top10_generated") if c in report.rows[epochs[0]]]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for cat in cats:
            ax.plot(epochs, [report.rows[e][cat] for e in epochs], marker="o", ms=3, label=cat.replace("_", " "))
        ax.set_xlabel("GAN epoch")
        ax.set_ylabel("discriminator accuracy")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(title)
        ax.legend(loc="best")
        fig.tight_layout()
        return _save(fig, path)


def attack_figures(reports, out):
    paths = {}
    if "same_user" in reports:
        paths["attack_same_png"] = attack_figure(reports["same_user"], out / "attack_same_user.png",
                                                 "attacker holds this user's gray data")
    if "cross_user" in reports:
        paths["attack_cross_png"] = attack_figure(reports["cross_user"], out / "attack_cross_user.png",
                                                  "attacker holds another user's gray data")
    return paths
