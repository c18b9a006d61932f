"""PNG figures for training and prediction runs (headless backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps reruns byte-stable
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_loss(report, path, title=None):
    """Batch MSE per epoch on a log scale, with the LM damping trace when present."""
    loss = np.asarray(report.loss_trace, dtype=float)
    epochs = np.arange(1, loss.size + 1)
    if report.mu_trace:
        fig, (ax, ax_mu) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    else:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax_mu = None
    ax.semilogy(epochs, np.maximum(loss, 1e-300), lw=1.2)
    ax.set_ylabel("MSE")
    ax.set_title(title or f"{report.algorithm} ({report.stop_reason})")
    ax.grid(True, which="both", alpha=0.3)
    if ax_mu is not None:
        mu = np.asarray(report.mu_trace, dtype=float)
        ok = np.asarray(report.accepted, dtype=bool)
        ax_mu.semilogy(epochs, mu, lw=1.0, color="0.4")
        ax_mu.scatter(epochs[~ok], mu[~ok], s=8, color="tab:red", label="rejected", zorder=3)
        ax_mu.set_ylabel("mu")
        ax_mu.grid(True, which="both", alpha=0.3)
        if np.any(~ok):
            ax_mu.legend(loc="best", fontsize=8)
        ax_mu.set_xlabel("epoch")
    else:
        ax.set_xlabel("epoch")
    return _save(fig, path)


def plot_prediction(targets, predictions, path, cut=None, title="one-step prediction"):
    """Targets against predictions; ``cut`` marks where the held-out segment begins."""
    b = np.asarray(targets, dtype=float).ravel()
    p = np.asarray(predictions, dtype=float).ravel()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    t = np.arange(b.size)
    ax.plot(t, b, lw=1.0, color="0.3", label="target")
    ax.plot(t, p, lw=1.0, color="tab:blue", label="prediction")
    if cut is not None:
        ax.axvline(cut, color="tab:red", ls="--", lw=0.8, label="held-out")
    ax.set_xlabel("step")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)
