"""Static SVG figures for experiment reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402


def phase_curves_figure(curves: list[np.ndarray], max_curves: int = 3000, seed: int = 0, title: str | None = None):
    """Remaining messages after each phase, one line per A(1) instance.

    ``curves`` are (instances, phases + 1) blocks; column 0 is the initial
    message count. Curves stop at the phase their instance finished in.
    Large runs are subsampled to ``max_curves`` lines.
    """
    rows = [r for block in curves for r in block] if curves else []
    rng = np.random.default_rng(seed)
    if len(rows) > max_curves:
        rows = [rows[i] for i in np.sort(rng.choice(len(rows), size=max_curves, replace=False))]
    segments = []
    longest = 1
    for r in rows:
        r = np.asarray(r)
        nz = np.flatnonzero(r)
        end = int(nz[-1]) + 2 if nz.size else 1
        end = min(end, r.size)
        longest = max(longest, end)
        segments.append(np.column_stack([np.arange(end), r[:end]]))
    fig, ax = plt.subplots(figsize=(6, 4))
    if segments:
        ax.add_collection(LineCollection(segments, linewidths=0.4, alpha=0.25, colors="tab:blue"))
        top = max(float(s[:, 1].max()) for s in segments)
    else:
        top = 1.0
    ax.set_xlim(0, max(1, longest - 1))
    ax.set_ylim(0, top * 1.05 if top else 1.0)
    ax.set_xlabel("phase")
    ax.set_ylabel("remaining messages")
    ax.set_xticks(range(0, longest))
    ax.set_title(title or f"A(1) instances ({len(rows)} shown)")
    fig.tight_layout()
    return fig


def save_phase_curves(curves, path, **kwargs):
    fig = phase_curves_figure(curves, **kwargs)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
