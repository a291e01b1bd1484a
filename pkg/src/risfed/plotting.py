"""Figures rendered from a run directory's CSV output.

Each run directory gets ``training_curve.png``, ``trajectories.png`` and
``rates.png`` written next to its CSVs. Several runs can also be overlaid in
one ``comparison.png``.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import load_config  # noqa: E402
from .metrics import moving_average, read_episodes, read_metrics  # noqa: E402

golden = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0

params = {
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (fig_width, fig_width * golden),
    "figure.dpi": 150,
    "lines.linewidth": 1.0,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
}

MOVING_WINDOW = 50


def _episode_rewards(run_dir: Path) -> np.ndarray:
    return np.array([float(r["total_reward"]) for r in read_episodes(run_dir / "episodes.csv")])


def plot_training_curve(run_dir, ax=None, label=None):
    run_dir = Path(run_dir)
    rewards = _episode_rewards(run_dir)
    own = ax is None
    if own:
        fig, ax = plt.subplots()
    ep = np.arange(1, len(rewards) + 1)
    line = ax.plot(ep, moving_average(rewards, MOVING_WINDOW), label=label or run_dir.name)[0]
    if own:
        ax.plot(ep, rewards, color=line.get_color(), alpha=0.25, lw=0.6)
        ax.set_xlabel("episode")
        ax.set_ylabel(f"total reward ({MOVING_WINDOW}-episode mean)")
        fig.savefig(run_dir / "training_curve.png")
        plt.close(fig)
    return ax


def _rows_by_robot(rows, episode: int):
    out = defaultdict(list)
    for r in rows:
        if int(r["episode"]) == episode:
            out[int(r["robot"])].append(r)
    return out


def plot_trajectories(run_dir, episode: int = 1):
    """Greedy-evaluation paths over the map, walls, AP and RIS."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.yaml")
    grid = cfg.grid()
    rows = read_metrics(run_dir / "eval.csv")
    fig, ax = plt.subplots(figsize=(fig_width, fig_width))
    for x0, y0, x1, y1 in grid.walls:
        ax.plot([x0, x1], [y0, y1], color="0.2", lw=2.5, solid_capstyle="butt")
    ax.plot(*grid.ap_position[:2], "k^", ms=8, label="AP")
    ax.plot(*grid.ris_position[:2], "ks", ms=7, label="RIS")
    for k, path in sorted(_rows_by_robot(rows, episode).items()):
        xs = [float(path[0]["x"])] + [float(r["next_x"]) for r in path]
        ys = [float(path[0]["y"])] + [float(r["next_y"]) for r in path]
        line = ax.plot(xs, ys, marker=".", ms=3, label=f"robot {k}")[0]
        ax.plot(xs[0], ys[0], "o", color=line.get_color(), mfc="none")
    for dest in cfg.fleet.destinations or []:
        ax.plot(*dest, "*", color="C3", ms=10)
    ax.set_xlim(grid.x_min, grid.x_max)
    ax.set_ylim(grid.y_min, grid.y_max)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(loc="upper left", frameon=False)
    fig.savefig(run_dir / "trajectories.png")
    plt.close(fig)


def plot_rates(run_dir, episode: int = 1):
    run_dir = Path(run_dir)
    rows = read_metrics(run_dir / "eval.csv")
    fig, ax = plt.subplots()
    for k, path in sorted(_rows_by_robot(rows, episode).items()):
        ax.step([int(r["slot"]) for r in path], [float(r["rate"]) for r in path], where="post", label=f"robot {k}")
    ax.set_xlabel("slot")
    ax.set_ylabel("rate (bit/s/Hz)")
    ax.legend(frameon=False)
    fig.savefig(run_dir / "rates.png")
    plt.close(fig)


def plot_comparison(run_dirs, out_path):
    fig, ax = plt.subplots()
    for d in run_dirs:
        plot_training_curve(d, ax=ax, label=Path(d).name)
    ax.set_xlabel("episode")
    ax.set_ylabel(f"total reward ({MOVING_WINDOW}-episode mean)")
    ax.legend(frameon=False)
    fig.savefig(out_path)
    plt.close(fig)


def render_report(run_dirs, comparison_path=None) -> list[Path]:
    """Write the per-run figures and, for several runs, a comparison plot."""
    written = []
    with plt.rc_context(params):
        for d in map(Path, run_dirs):
            plot_training_curve(d)
            written.append(d / "training_curve.png")
            if (d / "eval.csv").exists():
                plot_trajectories(d)
                plot_rates(d)
                written += [d / "trajectories.png", d / "rates.png"]
        if len(run_dirs) > 1:
            target = Path(comparison_path) if comparison_path else Path(run_dirs[0]) / "comparison.png"
            plot_comparison(run_dirs, target)
            written.append(target)
    return written
