"""Figures written next to the CSV outputs (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_theory_sweep(sweep: dict, path, title=None) -> Path:
    """Efficiency versus output back-off, plus the main-device load trajectory."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
        ax1.plot(sweep["pout_dbc"], 100 * sweep["eff"], color="C0")
        ax1.axhline(25 * np.pi, color="0.5", lw=0.8, ls="--")
        ax1.set_xlabel("output power (dB below peak)")
        ax1.set_ylabel("drain efficiency (%)")
        zm = sweep["zm"]
        ok = np.isfinite(zm)
        ax2.plot(sweep["beta"][ok], zm[ok].real, label="Re Zm")
        ax2.plot(sweep["beta"][ok], zm[ok].imag, label="Im Zm")
        za = sweep["za"]
        ok = np.isfinite(za)
        ax2.plot(sweep["beta"][ok], za[ok].real, ls="--", label="Re Za")
        ax2.plot(sweep["beta"][ok], za[ok].imag, ls="--", label="Im Za")
        ax2.set_xlabel("normalized drive")
        ax2.set_ylabel("load impedance (ohm)")
        ax2.legend()
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_overlay(rows, path, title=None) -> Path:
    """Predicted versus re-simulated S-parameters of the winning layout."""
    params = ["S11", "S12", "S22"]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(10.0, 3.4), sharey=True)
        for ax, name in zip(axes, params):
            sel = [r for r in rows if r["param"] == name]
            f = np.array([r["freq"] for r in sel]) / 1e9
            for key, color in (("re", "C0"), ("im", "C1")):
                ax.plot(f, [r[f"{key}_oracle"] for r in sel], color=color, label=f"{key} oracle")
                ax.plot(f, [r[f"{key}_pred"] for r in sel], color=color, ls="--", marker="o", ms=3,
                        label=f"{key} surrogate")
            ax.set_title(name)
            ax.set_xlabel("frequency (GHz)")
        axes[0].set_ylabel("S-parameter")
        axes[0].legend(fontsize=7)
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_ga_history(history, path) -> Path:
    g = [h["generation"] for h in history]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(g, [h["best_e"] for h in history], label="best e")
        ax.set_xlabel("generation")
        ax.set_ylabel("error e")
        ax2 = ax.twinx()
        ax2.plot(g, [h["mean_f"] for h in history], color="C1", alpha=0.7, label="mean F")
        ax2.set_ylabel("mean fitness")
        ax.legend(loc="upper right")
        return _save(fig, path)


def plot_loss_history(history, path) -> Path:
    ep = [h["epoch"] for h in history]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(ep, [h["train_mae"] for h in history], label="train")
        val = [h["val_mae"] for h in history]
        if np.any(np.isfinite(val)):
            ax.plot(ep, val, label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MAE")
        ax.legend()
        return _save(fig, path)


def plot_layout(layout, path, title=None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.6))
        ax.imshow(layout.cells, cmap="copper_r", vmin=0, vmax=1)
        for p in layout.ports:
            for r, c in p.cells:
                ax.plot(c, r, "s", mfc="none", mec="C0", ms=9)
            r, c = p.cell
            ax.annotate(p.role.value, (c, r), color="C0", fontsize=7, ha="center", va="center",
                        xytext=(0, 10 if r == 0 else -10), textcoords="offset points")
        ax.set_xticks([])
        ax.set_yticks([])
        ax.grid(False)
        if title:
            ax.set_title(title)
        return _save(fig, path)
