"""Figures rendered next to the experiment CSV (error and runtime vs budget)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["render_figures"]


def _summary(rows, stat):
    out = {}
    for r in rows:
        if r["trial"] != stat:
            continue
        key = (r["mechanism"], r["level"])
        out.setdefault(key, []).append((float(r["epsilon"]), r))
    for series in out.values():
        series.sort(key=lambda t: t[0])
    return out


def render_figures(rows, csv_path) -> list[Path]:
    """Render the L1-error and runtime figures for an experiment's rows.

    Returns the written file paths (``<stem>_l1.png`` and
    ``<stem>_runtime.png`` next to the CSV).
    """
    csv_path = Path(csv_path)
    means = _summary(rows, "mean")
    stds = _summary(rows, "std")
    mechanisms = sorted({m for m, _ in means})
    levels = sorted(
        {lv for _, lv in means}, key=lambda s: (s == "total", s)
    )
    written = []

    fig, axes = plt.subplots(
        1, len(levels), figsize=(3.2 * len(levels), 3.0), sharex=True
    )
    if len(levels) == 1:
        axes = [axes]
    for ax, level in zip(axes, levels):
        for mech in mechanisms:
            series = means.get((mech, level), [])
            if not series:
                continue
            eps = [e for e, _ in series]
            l1 = [float(r["l1"]) for _, r in series]
            err = [float(r["l1"]) for _, r in stds.get((mech, level), [])] or None
            ax.errorbar(eps, l1, yerr=err, marker="o", capsize=2, label=mech)
        ax.set_title(f"level {level}" if level != "total" else "total")
        ax.set_xlabel("epsilon")
        ax.set_xscale("log")
        ax.set_yscale("symlog")
    axes[0].set_ylabel("mean L1 error")
    axes[-1].legend(fontsize=8)
    fig.tight_layout()
    l1_path = csv_path.with_name(csv_path.stem + "_l1.png")
    fig.savefig(l1_path, dpi=150)
    plt.close(fig)
    written.append(l1_path)

    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    for mech in mechanisms:
        series = means.get((mech, "total"), [])
        if not series:
            continue
        eps = [e for e, _ in series]
        secs = [float(r["post_process_s"]) for _, r in series]
        ax.plot(eps, secs, marker="o", label=mech)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("mean post-process time (s)")
    ax.set_xscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    rt_path = csv_path.with_name(csv_path.stem + "_runtime.png")
    fig.savefig(rt_path, dpi=150)
    plt.close(fig)
    written.append(rt_path)
    return written
