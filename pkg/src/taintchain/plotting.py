"""Matplotlib rendering of diffusion reports to image files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analysis import DiffusionReport

POLICY_STYLE = {
    "fifo": ("#2ca02c", "-"),
    "haircut": ("#ff7f0e", "--"),
    "poison": ("#d62728", ":"),
}


def render_diffusion_figure(report: DiffusionReport, path: str, dpi: int = 150) -> None:
    """Plot tainted-address fraction per block height, one line per policy."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for policy, series in report.series.items():
        color, linestyle = POLICY_STYLE.get(policy, ("#555555", "-"))
        ax.plot(report.heights, [float(f) for f in series],
                label=policy, color=color, linestyle=linestyle, linewidth=1.6)
    ax.set_xlabel("block height")
    ax.set_ylabel("tainted address fraction")
    ax.set_ylim(bottom=0)
    ax.legend(loc="upper left", frameon=False)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
