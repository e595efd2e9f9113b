"""Figure rendering for CLI reports.

Every figure accompanies a CSV/JSON artifact carrying the same numbers;
plots are a convenience view, the delimited files are the interchange
contract.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_coefficients(names, median, lower, upper, path) -> None:
    """Interval plot of coefficient medians, largest magnitudes on top."""
    order = np.argsort(np.abs(median))
    k = len(order)
    height = max(2.5, 0.22 * k + 1.2)
    fig, ax = plt.subplots(figsize=(6.4, min(height, 18.0)))
    ypos = np.arange(k)
    ax.errorbar(
        median[order],
        ypos,
        xerr=np.vstack([median[order] - lower[order], upper[order] - median[order]]),
        fmt="o",
        markersize=3,
        lw=1,
        color="#1f5fa8",
        ecolor="#9db8d2",
        capsize=0,
    )
    ax.axvline(0.0, color="0.6", lw=0.8, zorder=0)
    ax.set_yticks(ypos)
    ax.set_yticklabels([names[i] for i in order], fontsize=7)
    ax.set_xlabel("posterior median and credible interval")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_gam_curves(curves, path) -> None:
    """Small-multiple grid of fitted covariate effects with interval bands.

    ``curves`` maps column name -> (x, median, lower, upper).
    """
    k = len(curves)
    ncols = min(4, max(1, k))
    nrows = (k + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.0 * ncols, 2.4 * nrows), squeeze=False, sharex=True
    )
    for ax in axes.ravel()[k:]:
        ax.set_visible(False)
    for ax, (name, (x, med, lo, hi)) in zip(axes.ravel(), curves.items()):
        ax.fill_between(x, lo, hi, color="#9db8d2", alpha=0.5, lw=0)
        ax.plot(x, med, color="#1f5fa8", lw=1.4)
        ax.axhline(0.0, color="0.6", lw=0.7, zorder=0)
        ax.set_title(name, fontsize=8)
    fig.supxlabel("covariate (unit scale)", fontsize=9)
    fig.supylabel("effect on linear predictor", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_roc(fpr, tpr, area, path) -> None:
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.plot(fpr, tpr, color="#1f5fa8", lw=1.5, label=f"AUC = {area:.3f}")
    ax.plot([0, 1], [0, 1], color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("false-positive rate")
    ax.set_ylabel("true-positive rate")
    ax.legend(loc="lower right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_predictions(pred, y, path) -> None:
    """Per-observation mean predictions, colored by observed class when known."""
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    idx = np.arange(len(pred))
    if y is None or np.any(np.isnan(y)):
        ax.scatter(idx, pred, s=14, color="#1f5fa8")
    else:
        for value, color, label in ((0.0, "#1f5fa8", "class 0"), (1.0, "#c23b22", "class 1")):
            mask = y == value
            ax.scatter(idx[mask], pred[mask], s=14, color=color, label=label)
        ax.legend(frameon=False, fontsize=8)
    ax.set_xlabel("observation")
    ax.set_ylabel("posterior mean prediction")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_estimate_vs_truth(truth, estimate, path) -> None:
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    lim = 1.08 * max(1e-9, np.abs(np.concatenate([truth, estimate])).max())
    ax.plot([-lim, lim], [-lim, lim], color="0.6", lw=0.8, ls="--")
    ax.scatter(truth, estimate, s=18, color="#1f5fa8", alpha=0.85)
    ax.set_xlabel("true coefficient")
    ax.set_ylabel("estimated coefficient")
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
