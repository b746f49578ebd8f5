"""Matplotlib rendering of the report tables.

Each function turns one of the CSV-exported artifacts (epidemic curves,
posterior summaries, correlation matrices, predictive bands) into a PNG
next to the delimited output. Rendering is headless and deterministic.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import CorrelationResult, PosteriorSummary, PredictiveBand
from .summaries import SummaryMatrix

_FIGSIZE = (6.4, 4.0)
_DPI = 150


def _save(fig, path):
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def epidemic_curve_figure(sm: SummaryMatrix, path, title="Simulated epidemic") -> None:
    """Rescaled summary columns over time, one line per statistic."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    steps = np.arange(1, sm.horizon + 1)
    for j, name in enumerate(sm.column_names):
        lw = 2.0 if j == 0 else 1.0
        ax.plot(steps, sm.values[:, j], label=name, linewidth=lw)
    ax.set_xlabel("week")
    ax.set_ylabel("rescaled count")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    if len(sm.column_names) <= 10:
        ax.legend(fontsize=8, ncol=2)
    _save(fig, path)


def posterior_summary_figure(summary: PosteriorSummary, path,
                             truth=None, title="Posterior estimates") -> None:
    """Point estimates with quantile-interval whiskers per component."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    pos = np.arange(len(summary.labels))
    err = np.vstack([summary.mean - summary.q_lo, summary.q_hi - summary.mean])
    ax.errorbar(pos, summary.mean, yerr=err, fmt="o", capsize=4,
                label="posterior mean / interval")
    if truth is not None:
        ax.plot(pos, np.asarray(truth), "x", color="crimson", markersize=9,
                label="true value")
    ax.set_xticks(pos)
    ax.set_xticklabels(summary.labels, rotation=30, ha="right")
    ax.set_ylabel("rate")
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, path)


def correlation_figure(corr: CorrelationResult, labels, path,
                       title="Posterior correlations") -> None:
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(corr.matrix, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(len(labels)))
    ax.set_yticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_yticklabels(labels, fontsize=8)
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, f"{corr.matrix[i, j]:.2f}", ha="center", va="center",
                    fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(title)
    _save(fig, path)


def bands_figure(bands: list[PredictiveBand], path, observed=None,
                 title="Posterior predictive") -> None:
    """Scenario means as lines; individual draws as faint trajectories."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    colors = plt.cm.tab10.colors
    for j, band in enumerate(bands):
        color = colors[j % len(colors)]
        steps = np.arange(1, band.mean.size + 1)
        if len(bands) == 1:
            for row in band.trajectories:
                ax.plot(steps, row, color=color, alpha=0.12, linewidth=0.7)
        ax.plot(steps, band.mean, color=color, linewidth=2.0, label=band.scenario)
    if observed is not None:
        steps = np.arange(1, len(observed) + 1)
        ax.plot(steps, observed, "k--", linewidth=1.6, label="observed")
    ax.set_xlabel("week")
    ax.set_ylabel(bands[0].column + " (rescaled)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, path)
