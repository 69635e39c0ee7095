"""Figure rendering for the CLI report paths.

All figures are written straight to files with a fixed style so repeated
runs produce identical images. The Agg backend is forced because the tool
runs headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .curves import FINAL_WINDOW, CurveId, CurveSpec, progress_fraction, progress_rate
from .stats import PseTable

_STYLE = {
    "figure.dpi": 150,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "lines.linewidth": 1.6,
}

_CURVE_COLOR = {
    CurveId.CONSTANT: "#555555",
    CurveId.BEZIER: "#1f77b4",
    CurveId.SPEED_UP: "#d62728",
    CurveId.SLOW_DOWN: "#2ca02c",
    CurveId.ELASTICITY: "#9467bd",
}

_CURVE_LABEL = {
    CurveId.CONSTANT: "constant",
    CurveId.BEZIER: "Bezier",
    CurveId.SPEED_UP: "speed-up",
    CurveId.SLOW_DOWN: "slow-down",
    CurveId.ELASTICITY: "elasticity",
}


def _save(fig, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, metadata={"Software": "pse-lab"})
    plt.close(fig)
    return out_path


def progress_figure(specs: Sequence[CurveSpec], out_path: str | Path,
                    samples: int = 501) -> Path:
    """Normalized completion vs normalized time for each curve."""
    u = np.linspace(0.0, 1.0, samples)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2), layout="constrained")
        for spec in specs:
            y = [progress_fraction(spec, float(t)) for t in u]
            ax.plot(u, y, color=_CURVE_COLOR[spec.id], label=_CURVE_LABEL[spec.id])
        ax.set_xlabel("normalized time")
        ax.set_ylabel("completion fraction")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.02)
        ax.legend(loc="upper left")
        return _save(fig, out_path)


def velocity_figure(specs: Sequence[CurveSpec], out_path: str | Path,
                    samples: int = 501) -> Path:
    """Normalized velocity vs time, with the final comparison window shaded."""
    u = np.linspace(0.0, 1.0, samples)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2), layout="constrained")
        for spec in specs:
            v = [progress_rate(spec, float(t)) for t in u]
            ax.plot(u, v, color=_CURVE_COLOR[spec.id], label=_CURVE_LABEL[spec.id])
        ax.axvspan(*FINAL_WINDOW, color="0.92", zorder=0)
        ax.set_xlabel("normalized time")
        ax.set_ylabel("normalized velocity")
        ax.set_xlim(0, 1)
        ax.legend(loc="upper left", ncols=2)
        return _save(fig, out_path)


def pse_means_figure(
    summary: Mapping[CurveId, tuple[float, float]],
    n_participants: int,
    out_path: str | Path,
    standard_s: float = 5.0,
) -> Path:
    """Mean PSE per curve with standard-error bars and the standard marked."""
    curves = list(summary)
    means = [summary[c][0] for c in curves]
    ses = [summary[c][1] / np.sqrt(n_participants) for c in curves]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2), layout="constrained")
        x = np.arange(len(curves))
        colors = [_CURVE_COLOR[c] for c in curves]
        ax.bar(x, means, yerr=ses, capsize=3, color=colors, width=0.62)
        ax.axhline(standard_s, color="0.3", linestyle="--", linewidth=1.0,
                   label=f"{standard_s:g} s standard")
        ax.set_xticks(x, [_CURVE_LABEL[c] for c in curves])
        ax.set_ylabel("PSE (s)")
        low = min(min(means) - 3 * max(ses, default=0.1), standard_s) - 0.2
        high = max(max(means) + 3 * max(ses, default=0.1), standard_s) + 0.2
        ax.set_ylim(low, high)
        ax.legend(loc="upper left")
        return _save(fig, out_path)


def pse_table_figure(table: PseTable, out_path: str | Path,
                     standard_s: float = 5.0) -> Path:
    """Per-participant PSE spread behind the per-curve means."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.2), layout="constrained")
        x = np.arange(table.k)
        rng = np.random.default_rng(0)  # jitter only, cosmetic but seeded
        for i in range(table.n):
            jitter = (rng.random(table.k) - 0.5) * 0.18
            ax.plot(x + jitter, table.values[i], "o", color="0.75",
                    markersize=2.5, zorder=1)
        means = table.values.mean(axis=0)
        ax.plot(x, means, "s-", color="#1f77b4", zorder=3, label="mean")
        ax.axhline(standard_s, color="0.3", linestyle="--", linewidth=1.0)
        ax.set_xticks(x, [_CURVE_LABEL[c] for c in table.curves])
        ax.set_ylabel("PSE (s)")
        ax.legend(loc="upper left")
        return _save(fig, out_path)
