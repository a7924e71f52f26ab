"""Matplotlib figure rendering for the CLI report paths.

Figures are a convenience layer on top of the byte-exact PGM/CSV artifacts;
matplotlib is imported lazily with the Agg backend so library use stays
headless-safe.
"""

from __future__ import annotations

import numpy as np


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def flops_figure(report, path) -> None:
    """Token timeline and per-layer MAC split."""
    plt = _plt()
    layers = [l.layer for l in report.layers]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.step(range(len(report.token_timeline)), report.token_timeline, where="post")
    ax1.set_xlabel("layer")
    ax1.set_ylabel("tokens")
    ax1.set_title("token timeline")
    ax2.bar(layers, [l.attn_macs / 1e6 for l in report.layers], label="attention")
    ax2.bar(layers, [l.mlp_macs / 1e6 for l in report.layers],
            bottom=[l.attn_macs / 1e6 for l in report.layers], label="mlp")
    ax2.set_xlabel("layer")
    ax2.set_ylabel("MMACs")
    ax2.set_title(f"total {report.gmacs:.2f} GMACs")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def prune_summary_figure(trace, grid_side: int, path) -> None:
    """One row per scheduled layer: score heatmap and kept mask."""
    plt = _plt()
    pruned = [lt for lt in trace.layers if lt.decision is not None and lt.scores is not None]
    if not pruned:
        return
    fig, axes = plt.subplots(len(pruned), 2, figsize=(6, 3 * len(pruned)), squeeze=False)
    for row, lt in enumerate(pruned):
        cells = grid_side * grid_side
        scores = np.full(cells, np.nan)
        scores[list(lt.decision.candidate_patch_ids)] = lt.scores.values
        mask = np.zeros(cells)
        mask[list(lt.decision.kept_original_patch_ids)] = 1.0
        axes[row][0].imshow(scores.reshape(grid_side, grid_side), cmap="hot")
        axes[row][0].set_title(f"layer {lt.layer} scores ({lt.scores.metric.value})")
        axes[row][1].imshow(mask.reshape(grid_side, grid_side), cmap="gray",
                            vmin=0.0, vmax=1.0)
        axes[row][1].set_title(f"kept {len(lt.decision.kept_original_patch_ids)}")
        for ax in axes[row]:
            ax.set_xticks([])
            ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def compare_figure(summary_rows: list[dict], path) -> None:
    """Per-schedule agreement bars and the GFLOPs line from the compare run."""
    plt = _plt()
    if not summary_rows:
        return
    schedules = [r["schedule"] for r in summary_rows]
    x = np.arange(len(summary_rows))
    metric_keys = sorted({k for r in summary_rows for k in r if k.startswith("overlap_")})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    width = 0.8 / max(len(metric_keys), 1)
    for i, key in enumerate(metric_keys):
        vals = [r.get(key, np.nan) for r in summary_rows]
        ax1.bar(x + i * width, vals, width, label=key.removeprefix("overlap_"))
    ax1.set_xticks(x + 0.4 - width / 2, schedules, rotation=20)
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("final kept-set overlap vs column-norm")
    ax1.legend(fontsize=8)
    ax2.plot(x, [r["gmacs"] for r in summary_rows], marker="o")
    ax2.set_xticks(x, schedules, rotation=20)
    ax2.set_ylabel("GMACs")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
