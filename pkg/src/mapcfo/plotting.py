"""Figure rendering for sweep results and bound tables.

Each CLI report writes a PNG next to its CSV; these helpers do the
drawing. Headless-safe (Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simulation import SweepResult

_XLABELS = {
    "snr": "SNR (dB)",
    "range": "true frequency offset (cycles/symbol)",
    "track": "frame index",
}

_MODE_STYLE = {"map": ("o-", "C0"), "ml": ("s--", "C3")}


def plot_sweep(result: SweepResult, path, title: str = "") -> None:
    """MSE curves per mode with the matching bound curves, log-y."""
    fig, ax = plt.subplots(figsize=(7, 5))
    for mode in ("map", "ml"):
        recs = result.for_mode(mode)
        if not recs:
            continue
        x = np.array([r.x for r in recs])
        mse = np.array([r.mse for r in recs])
        marker, color = _MODE_STYLE[mode]
        ax.semilogy(x, mse, marker, color=color, ms=4, label=f"{mode.upper()} MSE")
        bound = np.array([r.bcrlb for r in recs])
        if np.all(np.isfinite(bound)):
            label = "BCRLB" if mode == "map" else "CRLB"
            ax.semilogy(x, bound, ":", color=color, lw=1.2, label=label)
    ax.set_xlabel(_XLABELS.get(result.kind, "x"))
    ax.set_ylabel("mean square error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3, linestyle=":")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bounds(rows: list, path, title: str = "") -> None:
    """Bound-table curves: CRLB and BCRLB against SNR per pilot kind."""
    fig, ax = plt.subplots(figsize=(7, 5))
    kinds = sorted({row["pilot_kind"] for row in rows})
    for i, kind in enumerate(kinds):
        sub = [row for row in rows if row["pilot_kind"] == kind]
        snr = np.array([row["snr_db"] for row in sub])
        crlb = np.array([row["crlb"] for row in sub])
        bcrlb = np.array([row["bcrlb"] for row in sub])
        ax.semilogy(snr, crlb, "--", color=f"C{i}", label=f"{kind} CRLB")
        ax.semilogy(snr, bcrlb, "-", color=f"C{i}", label=f"{kind} BCRLB")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("bound on mean square error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3, linestyle=":")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
