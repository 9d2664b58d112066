"""Matplotlib figures written next to the text reports."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import EvalReport, PRCurve  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "legend.fontsize": 8,
    "lines.linewidth": 1.4,
}

# PNG metadata otherwise embeds the matplotlib version string
_PNG_META = {"Software": None}

MAX_CURVES = 10


def _save(fig, path: os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_PNG_META, bbox_inches="tight")
    plt.close(fig)
    return path


def _envelope(curve: PRCurve) -> Tuple[np.ndarray, np.ndarray]:
    r = np.concatenate([[0.0], curve.recall, [curve.recall[-1] if curve.recall.size else 0.0]])
    p = np.concatenate([[1.0], curve.precision, [0.0]])
    env = np.maximum.accumulate(p[::-1])[::-1]
    return r, env


def plot_pr_curves(
    report: EvalReport,
    path: os.PathLike,
    names: Optional[Dict[int, str]] = None,
    max_curves: int = MAX_CURVES,
) -> Path:
    """Precision envelopes at IoU 0.5 for up to ``max_curves`` categories."""
    names = names or {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 4.0))
        shown = [r for r in report.categories if r.category in report.curves][:max_curves]
        for res in shown:
            curve = report.curves[res.category]
            if curve.recall.size == 0:
                continue
            r, env = _envelope(curve)
            label = f"{names.get(res.category, res.category)} (AP {res.ap50:.3f})"
            ax.step(r, env, where="post", label=label)
        hidden = len(report.categories) - len(shown)
        title = f"PR envelope @ IoU 0.5, mAP {report.map50:.4f}"
        if hidden > 0:
            title += f" ({hidden} categories not drawn)"
        ax.set_title(title)
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.05)
        if shown:
            ax.legend(loc="lower left")
        return _save(fig, path)


def plot_map_by_threshold(report: EvalReport, path: os.PathLike) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ts = list(report.map_by_threshold)
        ax.plot(ts, [report.map_by_threshold[t] for t in ts], marker="o")
        ax.axhline(report.map5095, ls="--", lw=1.0, color="0.4", label=f"mAP 0.5:0.95 = {report.map5095:.4f}")
        ax.set_xlabel("IoU threshold")
        ax.set_ylabel("mAP")
        ax.set_ylim(0.0, 1.05)
        ax.legend(loc="lower left")
        return _save(fig, path)


def plot_comparison(
    rows: Sequence[Tuple[str, Optional[float], Optional[float]]],
    path: os.PathLike,
    title: str = "",
) -> Path:
    """Grouped bars of mAP 0.5 and mAP 0.5:0.95 per arm; failed rows are skipped."""
    ok = [(n, a, b) for n, a, b in rows if a is not None and b is not None]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(ok) + 2.0), 3.5))
        x = np.arange(len(ok))
        ax.bar(x - 0.2, [r[1] for r in ok], width=0.4, label="mAP 0.5")
        ax.bar(x + 0.2, [r[2] for r in ok], width=0.4, label="mAP 0.5:0.95")
        ax.set_xticks(x)
        ax.set_xticklabels([r[0] for r in ok], rotation=20, ha="right")
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel("mAP")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right")
        return _save(fig, path)
