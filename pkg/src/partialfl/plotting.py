"""Figures written next to the metrics files.

Everything renders off-screen with the Agg backend and returns the path
written.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SCHEME_COLORS = {"rolling": "#1f77b4", "static": "#2ca02c", "random": "#d62728"}


def _figure(width=5.0, height=None):
    height = height or width * 0.7
    fig, ax = plt.subplots(figsize=(width, height))
    ax.tick_params(labelsize=9)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def accuracy_curves(series: dict, path, metric: str = "global_acc") -> Path:
    """``series`` maps a label to a list of metrics dicts (or records) from one run."""
    fig, ax = _figure()
    for label, recs in series.items():
        rows = [r if isinstance(r, dict) else vars(r) for r in recs]
        if not rows:
            continue
        ax.plot([r["round"] for r in rows], [r[metric] for r in rows], label=str(label), lw=1.2)
    ax.set_xlabel("round")
    ax.set_ylabel(metric.replace("_", " "))
    ax.set_ylim(0, 1)
    if series:
        ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)


def sweep_plot(xs, results: dict, path, xlabel: str) -> Path:
    """``results`` maps scheme to ``(means, stds)`` aligned with ``xs``."""
    fig, ax = _figure()
    for scheme, (means, stds) in results.items():
        ax.errorbar(xs, means, yerr=stds, label=scheme, color=SCHEME_COLORS.get(scheme), capsize=3, marker="o", ms=3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("final global accuracy")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)


def lemma_plot(rows, path) -> Path:
    fig, ax = _figure()
    I = [r.I for r in rows]
    ax.plot(I, [r.closed_form for r in rows], "-", color="k", lw=1.2, label="integral form")
    ax.errorbar(I, [r.monte_carlo for r in rows], yerr=[3 * r.std_error for r in rows], fmt="o", ms=3,
                color=SCHEME_COLORS["random"], label="Monte Carlo (3 s.e.)")
    ax.plot(I, [r.rolling for r in rows], "--", color=SCHEME_COLORS["rolling"], label="cyclic, m*I")
    ax.set_xlabel("number of indices I")
    ax.set_ylabel(f"rounds until every index seen {rows[0].m}x" if rows else "rounds")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)


def coverage_plot(counts: dict, path) -> Path:
    """Bar chart of per-index training counts for each scheme."""
    fig, ax = _figure(width=6.0)
    n = len(counts)
    width = 0.8 / max(n, 1)
    for k, (scheme, c) in enumerate(counts.items()):
        x = np.arange(len(c)) + (k - (n - 1) / 2) * width
        ax.bar(x, c, width=width, label=scheme, color=SCHEME_COLORS.get(scheme))
    ax.set_xlabel("node index")
    ax.set_ylabel("rounds trained")
    ax.legend(fontsize=8, frameon=False)
    return _save(fig, path)


def local_accuracy_hist(per_client, path, bins: int = 10) -> Path:
    fig, ax = _figure()
    ax.hist(per_client, bins=bins, range=(0, 1), color="0.5", edgecolor="white")
    ax.set_xlabel("local accuracy")
    ax.set_ylabel("clients")
    return _save(fig, path)
