"""External force generators: chamber pressure and scheduled point loads.

Both contribute to the gradient of the step potential only; pressure is
evaluated on the deformed geometry, so normals follow the current
iterate.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .mesh import surface_normals


class Schedule:
    """Common validation for time-indexed schedules."""

    def __init__(self, times, values):
        self.times = [float(t) for t in times]
        self.values = list(values)
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("schedule needs matching, non-empty times/values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("schedule times must be strictly increasing")


class PiecewiseConstant(Schedule):
    """Left-continuous steps; before the first knot the first value holds."""

    def value(self, t: float):
        i = bisect.bisect_right(self.times, t) - 1
        return self.values[max(i, 0)]


class PiecewiseLinear(Schedule):
    """Linear interpolation, clamped outside the knot range."""

    def __init__(self, times, values):
        super().__init__(times, values)
        self.values = [float(v) for v in values]

    def value(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))


@dataclass
class PressureActuator:
    """Uniform pressure p(t) on an oriented chamber triangle set.

    Triangles are wound so their normals point from the material into
    the pressurized cavity; the nodal force -p n / 3 then pushes the
    wall away from the cavity.
    """

    triangle_set: str
    schedule: PiecewiseLinear

    def pressure(self, t: float) -> float:
        return self.schedule.value(t)


@dataclass
class PointLoad:
    """Per-vertex force vector on a vertex set, optionally released.

    The scheduled force applies to every vertex in the set; from
    `release_time` on the load vanishes.
    """

    vertex_set: str
    schedule: PiecewiseConstant  # values are 3-vectors
    release_time: float | None = None

    def force(self, t: float) -> np.ndarray:
        if self.release_time is not None and t >= self.release_time:
            return np.zeros(3)
        return np.asarray(self.schedule.value(t), dtype=float)


def pressure_forces(triangles: np.ndarray, positions: np.ndarray, p: float) -> np.ndarray:
    """Stacked nodal forces of pressure p on the triangle set.

    Each triangle contributes -p n / 3 to its three vertices, with the
    area-weighted normal n recomputed from the current positions.
    """
    x3 = positions.reshape(-1, 3)
    out = np.zeros_like(x3)
    if p != 0.0 and triangles.shape[0]:
        f_tri = (-p / 3.0) * surface_normals(x3, triangles)
        for corner in range(3):
            np.add.at(out, triangles[:, corner], f_tri)
    return out.reshape(-1)


def point_load_forces(loads, vertex_sets: dict, t: float, num_vertices: int) -> np.ndarray:
    """Stacked nodal forces of all point loads active at time t."""
    out = np.zeros((num_vertices, 3))
    for load in loads:
        f = load.force(t)
        if np.any(f):
            out[vertex_sets[load.vertex_set]] += f
    return out.reshape(-1)
