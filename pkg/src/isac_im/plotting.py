"""PNG figures for sweep reports: CEE versus SNR and the DoF tradeoff hull."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0
WIDTH_IN = 6.0

STYLE = {
    "proposed": {"color": "tab:blue", "marker": "o", "label": "proposed"},
    "tin": {"color": "tab:red", "marker": "s", "label": "TIN"},
    "sic": {"color": "tab:green", "marker": "^", "label": "SIC"},
}

RC = {
    "font.size": 10,
    "axes.labelsize": 11,
    "legend.fontsize": 9,
    "lines.linewidth": 1.6,
    "lines.markersize": 5,
    "savefig.dpi": 150,
}


def _axes():
    fig, ax = plt.subplots(figsize=(WIDTH_IN, WIDTH_IN * GOLDEN), facecolor="w")
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    ax.xaxis.set_ticks_position("bottom")
    ax.yaxis.set_ticks_position("left")
    ax.grid(True, alpha=0.3, linestyle=":")
    return fig, ax


def _save(fig, path: str) -> str:
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_cee_vs_snr(result, path: str) -> str:
    from .harness import METHODS

    with plt.rc_context(RC):
        fig, ax = _axes()
        snr = [r.snr_db for r in result.rows]
        for m in METHODS:
            ax.plot(snr, [r.cee_db[m] for r in result.rows], **STYLE[m])
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("CEE (dB)")
        ax.set_title(f"{result.config.scheme}, {result.config.n_trials} trials", fontsize=10)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_tradeoff(hull, point, path: str) -> str:
    with plt.rc_context(RC):
        fig, ax = _axes()
        xs = [float(v.sdof) for v in hull.vertices]
        ys = [float(v.cdof) for v in hull.vertices]
        ax.plot(xs, ys, color="tab:blue", marker="o", label="achievable boundary")
        c_max = max((float(v.cdof) for v in hull.vertices if v.sdof == 0), default=0.0)
        ax.plot([0.0, 1.0], [c_max, 0.0], color="0.5", linestyle="--", label="time sharing")
        ax.plot([float(point.sdof)], [float(point.cdof)], color="tab:red", marker="*", markersize=11,
                linestyle="none", label=f"scheme ({point.sdof}, {point.cdof})")
        ax.set_xlabel("sDoF")
        ax.set_ylabel("cDoF")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(bottom=0)
        ax.legend(frameon=False)
        return _save(fig, path)
