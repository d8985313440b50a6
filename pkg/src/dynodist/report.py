"""Figure rendering for run artifacts: every delimited output the CLI
writes (metrics JSONL, heatmap CSV, branch-analysis CSV) gets a matplotlib
figure saved next to it."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_learning_curve(metrics: list[dict], path) -> None:
    episodes = [m["episode"] for m in metrics]
    final_d = [m["final_distance_to_goal"] for m in metrics]
    losses = [m["distance_loss"] for m in metrics]
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    xs = [e for e, d in zip(episodes, final_d) if d is not None]
    ys = [d for d in final_d if d is not None]
    axes[0].plot(xs, ys, lw=0.8, color="tab:blue")
    axes[0].set_ylabel("final distance to goal")
    axes[0].grid(alpha=0.3)
    xl = [e for e, l in zip(episodes, losses) if l is not None]
    yl = [l for l in losses if l is not None]
    axes[1].plot(xl, yl, lw=0.8, color="tab:orange")
    axes[1].set_ylabel("distance fit loss")
    axes[1].set_xlabel("episode")
    axes[1].grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_heatmap_figure(matrix: np.ndarray, env, goal: int, path) -> None:
    data = np.array(matrix, dtype=float)
    masked = np.ma.masked_where(data < 0, data)
    fig, ax = plt.subplots(figsize=(6, 6))
    cmap = plt.cm.viridis.copy()
    cmap.set_bad("black")
    im = ax.imshow(masked, cmap=cmap, origin="upper")
    gr, gc = env.state_to_cell(goal)
    ax.scatter([gc], [gr], marker="*", s=180, color="red", edgecolors="white")
    fig.colorbar(im, ax=ax, label="estimated steps to goal")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_branch_analysis_figure(analysis, path) -> None:
    ps = [r.p for r in analysis.rows]
    risky = [r.risky_return for r in analysis.rows]
    safe = [r.safe_return for r in analysis.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ps, risky, "o-", label="risky branch return")
    ax.plot(ps, safe, "s-", label="safe branch return")
    ax.axvline(analysis.crossover_p, color="gray", ls="--",
               label=f"crossover p*={analysis.crossover_p:.4f}")
    ax.set_xlabel("risky success probability p")
    ax.set_ylabel("exact expected return")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
