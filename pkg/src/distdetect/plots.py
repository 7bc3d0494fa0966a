"""Figures written next to the CSV reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (5.0, 3.2),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "distdetect",
}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no software/date metadata, so reruns are byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def value_function(path, grid, values, stop, title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for x, row in enumerate(values):
            line, = ax.plot(grid, row, lw=1.2, label=f"x = {x}")
            s = stop[x]
            ax.plot(grid[s], row[s], ".", ms=2, color=line.get_color())
        ax.plot(grid, 1 - grid, "k--", lw=0.8, label="stop payoff 1 - pi")
        ax.set_xlabel("posterior pi")
        ax.set_ylabel("minimal risk")
        ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def posterior_paths(path, obs, pis, thetas, names):
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 4.0))
        n = np.arange(obs.shape[0])
        for r, name in enumerate(names):
            line, = ax1.plot(n, pis[:, r], lw=1.2, label=name)
            ax0.step(n, obs[:, r] + 0.05 * r, where="mid", lw=1.0, color=line.get_color())
            if thetas[r] <= n[-1]:
                ax1.axvline(thetas[r], color=line.get_color(), ls=":", lw=0.8)
        ax0.set_ylabel("observation")
        ax1.set_ylabel("P(theta <= n | F_n)")
        ax1.set_xlabel("n")
        ax1.set_ylim(-0.02, 1.02)
        ax1.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def risk_bars(path, names, series: dict, ylabel="risk"):
    """Grouped bars with 1-sigma error bars; ``series`` maps label -> (means, ses)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        width = 0.8 / max(len(series), 1)
        x = np.arange(len(names))
        for k, (label, (means, ses)) in enumerate(series.items()):
            ses = np.nan_to_num(np.asarray(ses, dtype=float))
            ax.bar(x + k * width, means, width, yerr=ses, capsize=2, label=label)
        ax.set_xticks(x + width * (len(series) - 1) / 2)
        ax.set_xticklabels(names)
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def value_by_horizon(path, values, names):
    """Equilibrium risk at the initial state against the number of steps to go."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        values = np.asarray(values)
        for r, name in enumerate(names):
            ax.plot(np.arange(len(values)), values[:, r], marker=".", lw=1.2, label=name)
        ax.set_xlabel("horizon")
        ax.set_ylabel("equilibrium risk")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
