"""SVG line plots of sweep results (fidelity band and coherence line)."""

from __future__ import annotations

import io

import numpy as np

AXES = ("gamma", "sigma", "tau_sig")


def swept_axis(rows: list[dict]) -> str:
    """Name of the grid axis that varies across the aggregate rows."""
    for axis in AXES:
        if len({float(r[axis]) for r in rows}) > 1:
            return axis
    return AXES[0]


def sweep_svg(rows: list[dict], header: str) -> str:
    """Render aggregate sweep rows as SVG text.

    ``F_mean`` is drawn with a band of one ``F_sd``, ``R_mean`` as a dashed
    line. ``header`` is embedded as an XML comment after the declaration.
    """
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    agg = [r for r in rows if r.get("state_label") == "all"] or rows
    axis = swept_axis(agg)
    agg = sorted(agg, key=lambda r: float(r[axis]))
    x = np.array([float(r[axis]) for r in agg])
    F = np.array([float(r["F_mean"]) for r in agg])
    Fsd = np.array([float(r["F_sd"]) for r in agg])
    R = np.array([float(r["R_mean"]) for r in agg])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.fill_between(x, F - Fsd, F + Fsd, alpha=0.3, label="F +/- sd")
    ax.plot(x, F, "o-", label="F")
    ax.plot(x, R, "s--", label="R")
    ax.axhline(1.0, color="gray", lw=0.5)
    ax.set_xlabel(axis)
    ax.set_title(agg[0].get("sweep", ""))
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    text = buf.getvalue()
    comment = "<!-- " + header.replace("--", "- -") + " -->\n"
    if text.startswith("<?xml"):
        end = text.index("?>") + 2
        return text[:end] + "\n" + comment + text[end:].lstrip("\n")
    return comment + text
