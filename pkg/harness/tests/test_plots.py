import json

import pytest

from softfem_harness.cli import main
from softfem_harness.plots import plot_actuation, plot_trajectory

HEADER = {"scene_hash": "x", "dof_count": 9, "marker_names": ["m:0"],
          "marker_vertices": [0]}


def write_traj(path, frames):
    lines = [json.dumps(HEADER)]
    lines += [json.dumps(f) for f in frames]
    path.write_text("\n".join(lines) + "\n")


def test_header_only_trajectory_plots(tmp_path):
    traj = tmp_path / "empty.jsonl"
    write_traj(traj, [])
    out = tmp_path / "empty.png"
    assert main(["plot", "--trajectory", str(traj), "--out", str(out)]) == 0
    assert out.exists() and out.stat().st_size > 0


def test_marker_and_energy_panels(tmp_path):
    frames = [
        {"t": 0.01 * i, "markers": [[0.0, 0.0, 0.1 + 0.01 * i]],
         "positions": [[0.0, 0.0, 0.1 * i], [0, 0, 1.0]],
         "energies": {"kinetic": float(i), "elastic": 0.5, "gravity": -1.0,
                      "muscle": 0.0}}
        for i in range(1, 6)
    ]
    traj = tmp_path / "t.jsonl"
    write_traj(traj, frames)
    for panel in ("markers", "energy", "min-height"):
        out = tmp_path / f"{panel}.png"
        assert main(["plot", "--trajectory", str(traj), "--out", str(out),
                     "--panel", panel]) == 0
        assert out.stat().st_size > 0


def test_unreadable_file_errors(tmp_path, capsys):
    assert main(["plot", "--trajectory", str(tmp_path / "nope.jsonl"),
                 "--out", str(tmp_path / "o.png")]) == 1
    assert "error" in capsys.readouterr().err


def test_actuation_plot(tmp_path):
    out = tmp_path / "act.png"
    plot_actuation({"a_v": 0.69, "a_d": 1.05, "t_v": 0.54, "t_d": 0.27}, 1.5, out)
    assert out.stat().st_size > 0
