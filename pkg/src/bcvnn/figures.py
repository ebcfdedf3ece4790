"""Figure rendering for the CLI reports.

Every subcommand that emits a CSV also renders a PNG next to it; these
helpers own the plotting so the command layer stays declarative. The
Agg backend is forced because the CLI runs headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .hw import MappingScheme

DPI = 120


def save_trace_figure(path, rows):
    """Training loss and accuracy per epoch on twin axes."""
    epochs = [r[0] for r in rows]
    losses = [r[1] for r in rows]
    accs = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, losses, marker="o", color="tab:red", label="loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss", color="tab:red")
    ax.tick_params(axis="y", labelcolor="tab:red")
    ax2 = ax.twinx()
    ax2.plot(epochs, accs, marker="s", color="tab:blue", label="accuracy")
    ax2.set_ylabel("training accuracy", color="tab:blue")
    ax2.tick_params(axis="y", labelcolor="tab:blue")
    ax2.set_ylim(0.0, 1.02)
    ax.set_title("training trace")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_prediction_figure(path, prediction, labels=None):
    """Confidence histogram beside a confidence/uncertainty scatter."""
    conf = np.atleast_1d(prediction.confidence)
    std = np.atleast_2d(prediction.std_probs).max(axis=-1)
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
    left.hist(conf, bins=20, range=(0.0, 1.0), color="tab:blue", edgecolor="black")
    left.set_xlabel("confidence")
    left.set_ylabel("count")
    left.set_title("prediction confidence")
    if labels is not None:
        correct = np.atleast_1d(prediction.predicted_class) == np.asarray(labels)
        right.scatter(conf[correct], std[correct], s=12, color="tab:green", label="correct")
        right.scatter(conf[~correct], std[~correct], s=12, color="tab:red", label="wrong")
        right.legend()
    else:
        right.scatter(conf, std, s=12, color="tab:blue")
    right.set_xlabel("confidence")
    right.set_ylabel("max per-class std")
    right.set_title("uncertainty vs confidence")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def _genome_label(record):
    return "-".join(m.value for m in record.genome)


def save_search_figure(path, records, front, best=None):
    """Objective-space scatter with the Pareto front traced through it."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.scatter([r.ece for r in records], [r.accuracy for r in records],
               s=18, color="lightgray", label="evaluated")
    if front:
        ordered = sorted(front, key=lambda r: r.ece)
        ax.plot([r.ece for r in ordered], [r.accuracy for r in ordered],
                marker="o", color="tab:blue", label="Pareto front")
    if best is not None:
        ax.scatter([best.ece], [best.accuracy], marker="*", s=180,
                   color="tab:orange", zorder=5, label=f"best {_genome_label(best)}")
    ax.set_xlabel("ECE (lower is better)")
    ax.set_ylabel("accuracy")
    ax.set_title("design-space objectives")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_space_figure(path, records):
    """Full-enumeration scatter colored by dropout count."""
    counts = np.array([r.dropout_count for r in records])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    sc = ax.scatter([r.ece for r in records], [r.accuracy for r in records],
                    c=counts, cmap="viridis", s=24)
    fig.colorbar(sc, ax=ax, label="dropout count")
    ax.set_xlabel("ECE (lower is better)")
    ax.set_ylabel("accuracy")
    ax.set_title("enumerated design space")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_scheme_figure(path, comparison):
    """Per-layer latency bars for both mapping schemes."""
    lat = comparison.latency_opt.layers
    res = comparison.resource_opt.layers
    idx = np.arange(len(lat))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(idx - width / 2, [lc.estimate.latency_units for lc in lat], width,
           label=MappingScheme.LATENCY_OPT.value, color="tab:blue")
    ax.bar(idx + width / 2, [lc.estimate.latency_units for lc in res], width,
           label=MappingScheme.RESOURCE_OPT.value, color="tab:orange")
    ax.set_xticks(idx)
    ax.set_xticklabels([f"{lc.index}\n{lc.layer_class.value}" for lc in lat], fontsize=7)
    ax.set_xlabel("layer")
    ax.set_ylabel("latency units")
    ax.set_yscale("log")
    ax.set_title("per-layer latency by mapping scheme")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def save_preview_figure(path, dataset, count=16):
    """Sample grid (magnitudes) for image data, first-two-feature scatter otherwise."""
    n = min(count, len(dataset))
    shape = dataset.feature_shape
    if len(shape) == 3:
        cols = int(np.ceil(np.sqrt(n)))
        rows = int(np.ceil(n / cols))
        fig, axes = plt.subplots(rows, cols, figsize=(1.6 * cols, 1.8 * rows))
        axes = np.atleast_1d(axes).ravel()
        mags = np.hypot(dataset.images.real[:n], dataset.images.imag[:n])
        for i in range(n):
            axes[i].imshow(mags[i, 0], cmap="gray")
            axes[i].set_title(str(int(dataset.labels[i])), fontsize=8)
        for ax in axes:
            ax.axis("off")
    else:
        fig, ax = plt.subplots(figsize=(5, 4.5))
        flat_r = dataset.images.real.reshape(len(dataset), -1)
        flat_i = dataset.images.imag.reshape(len(dataset), -1)
        sc = ax.scatter(flat_r[:, 0], flat_i[:, 0], c=dataset.labels, cmap="tab10", s=14)
        fig.colorbar(sc, ax=ax, label="class")
        ax.set_xlabel("feature 0, real part")
        ax.set_ylabel("feature 0, imag part")
        ax.set_title("dataset preview")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
