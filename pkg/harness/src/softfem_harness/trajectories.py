"""Minimal reader for the engine's line-oriented trajectory files.

Kept local on purpose: the harness talks to the engine only through its
documented file formats, never through its Python API.
"""
from __future__ import annotations

import json

import numpy as np


def read_trajectory(path) -> dict:
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = json.loads(lines[0])
    frames = [json.loads(line) for line in lines[1:]]
    out = {
        "header": header,
        "t": np.array([f["t"] for f in frames]),
        "markers": [np.asarray(f["markers"], dtype=float) for f in frames],
        "positions": [np.asarray(f["positions"], dtype=float)
                      if "positions" in f else None for f in frames],
        "energies": [f.get("energies") for f in frames],
    }
    return out


def min_height_series(traj: dict) -> np.ndarray:
    """Per-frame height of the lowest vertex (positions required)."""
    if any(p is None for p in traj["positions"]) or not traj["positions"]:
        raise ValueError("trajectory lacks full vertex positions")
    return np.array([p[:, 2].min() for p in traj["positions"]])
