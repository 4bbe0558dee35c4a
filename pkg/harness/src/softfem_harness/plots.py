"""Trajectory plots: marker heights, energy breakdown, lowest-vertex height."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trajectories import min_height_series, read_trajectory  # noqa: E402


def plot_trajectory(traj_path, out_path, panel: str = "markers") -> str:
    """Render one panel of a trajectory file to an image; returns the path."""
    traj = read_trajectory(traj_path)
    t = traj["t"]
    fig, ax = plt.subplots(figsize=(7, 4))
    if panel == "markers":
        if len(t):
            heights = np.array([m[:, 2] for m in traj["markers"]])
            for j, name in enumerate(traj["header"].get("marker_names", [])):
                ax.plot(t, heights[:, j], label=name, lw=1.2)
            if heights.shape[1] and heights.shape[1] <= 8:
                ax.legend(fontsize=7)
        ax.set_ylabel("marker height [m]")
    elif panel == "energy":
        keys = ("kinetic", "elastic", "gravity", "muscle")
        if len(t) and traj["energies"][0] is not None:
            for key in keys:
                ax.plot(t, [e[key] for e in traj["energies"]], label=key, lw=1.2)
            ax.legend(fontsize=8)
        ax.set_ylabel("energy [J]")
    elif panel == "min-height":
        if len(t):
            ax.plot(t, min_height_series(traj), lw=1.5)
        ax.set_ylabel("lowest vertex height [m]")
    else:
        raise ValueError(f"unknown panel {panel!r}")
    ax.set_xlabel("time [s]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return str(out_path)


def plot_actuation(best: dict, duration: float, out_path) -> str:
    """Step-function actuation signals of the two leg muscle groups."""
    a_v, a_d, t_v, t_d = (best[k] for k in ("a_v", "a_d", "t_v", "t_d"))
    fig, ax = plt.subplots(figsize=(7, 3))
    ax.step([0.0, t_v, duration], [a_v, 0.0, 0.0], where="post",
            label="ventral", lw=1.6)
    ax.step([0.0, t_d, duration], [0.0, a_d, a_d], where="post",
            label="dorsal", lw=1.6)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("activation [-]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return str(out_path)


def plot_min_height_comparison(series: dict, out_path) -> str:
    """Lowest-vertex height traces for several labelled trajectories."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, path in series.items():
        traj = read_trajectory(path)
        ax.plot(traj["t"], min_height_series(traj), label=label, lw=1.6)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("lowest vertex height [m]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return str(out_path)
