"""Figure rendering for the report path.

Turns aggregated sweep records into the two standard plots, written next to
the .dat files they mirror: NMSE vs data block index, and BLER vs SNR.
Headless backend; nothing here ever opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import SweepRecord, bler_by_point

_STYLE = {
    "conventional": dict(color="tab:gray", marker="s"),
    "soft": dict(color="tab:orange", marker="^"),
    "proposed": dict(color="tab:blue", marker="o"),
    "genie": dict(color="tab:green", marker="d"),
}


def _style(arm: str) -> dict:
    return _STYLE.get(arm, dict(marker="x"))


def render_fig1(records: list[SweepRecord], path: Path) -> None:
    """NMSE against block index, one curve per (arm, SNR, pilot length)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    keys = sorted({(r.arm, r.ebn0_db, r.t_p) for r in records})
    for arm, ebn0_db, t_p in keys:
        rows = sorted(
            (r for r in records if (r.arm, r.ebn0_db, r.t_p) == (arm, ebn0_db, t_p)),
            key=lambda r: r.b,
        )
        ax.semilogy(
            [r.b for r in rows],
            [r.nmse_mean for r in rows],
            label=f"{arm}, {ebn0_db:g} dB, T_p={t_p}",
            markersize=3.5,
            **_style(arm),
        )
    ax.set_xlabel("data block index b")
    ax.set_ylabel("NMSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_fig2(records: list[SweepRecord], path: Path) -> None:
    """BLER against Eb/N0, one curve per (arm, pilot length)."""
    bler = bler_by_point(records)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for arm, t_p in sorted({(a, t) for (a, _, t) in bler}):
        pts = sorted(
            (e, v) for (a, e, t), v in bler.items() if (a, t) == (arm, t_p)
        )
        ax.semilogy(
            [p[0] for p in pts],
            [max(p[1], 1e-12) for p in pts],  # keep zero-error points on the axis
            label=f"{arm}, T_p={t_p}",
            markersize=4,
            **_style(arm),
        )
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("BLER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_all(records: list[SweepRecord], out_dir: Path) -> list[Path]:
    """Render both figures into out_dir; returns the written paths."""
    out_dir = Path(out_dir)
    paths = [out_dir / "fig1_nmse_vs_block.png", out_dir / "fig2_bler_vs_snr.png"]
    render_fig1(records, paths[0])
    render_fig2(records, paths[1])
    return paths
