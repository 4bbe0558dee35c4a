"""Equality (pins) and inequality (half-space contact) constraints.

Both kinds are affine in the stacked positions, so the linearization
used by the QP subproblem is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class PinConstraint:
    vertex: int
    target: np.ndarray  # (3,) meters

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))


@dataclass(frozen=True)
class ContactPlane:
    """Half space n . (x - p) >= 0 with unit normal n."""

    normal: np.ndarray
    point: np.ndarray
    activation_margin: float = 1e-3  # meters

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("contact plane normal must be a unit vector")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))


@dataclass
class ConstraintSet:
    """Linearized constraints at a point: J_f dx + f = 0, J_h dx + h >= 0."""

    J_f: sp.csr_matrix
    f: np.ndarray
    J_h: sp.csr_matrix
    h: np.ndarray
    pairs: list = field(default_factory=list)  # (vertex, plane index) per row of J_h

    @property
    def num_eq(self) -> int:
        return self.f.shape[0]

    @property
    def num_ineq(self) -> int:
        return self.h.shape[0]


def plane_gap(x, plane: ContactPlane) -> float:
    """Signed distance of one point to the plane (negative = penetration)."""
    return float(plane.normal @ (np.asarray(x, dtype=float) - plane.point))


def plane_gaps(positions: np.ndarray, plane: ContactPlane) -> np.ndarray:
    """Gaps of all vertices, (nv,)."""
    return (positions.reshape(-1, 3) - plane.point) @ plane.normal


def detect_active(positions: np.ndarray, planes: Sequence[ContactPlane],
                  forced=()) -> list[tuple[int, int]]:
    """All (vertex, plane) pairs within the activation margin.

    Output is sorted by (vertex, plane) so downstream assembly and the
    QP see a deterministic ordering.  `forced` pairs are always kept.
    """
    pairs = set(forced)
    for pi, plane in enumerate(planes):
        gaps = plane_gaps(positions, plane)
        for v in np.nonzero(gaps < plane.activation_margin)[0]:
            pairs.add((int(v), pi))
    return sorted(pairs)


def linearize(pins: Sequence[PinConstraint], active_pairs: Sequence[tuple[int, int]],
              planes: Sequence[ContactPlane], x: np.ndarray) -> ConstraintSet:
    """Build the constraint rows at x.

    Pins produce one row per axis with residual x_i - target; contact
    rows scatter the plane normal into the vertex's three columns with
    residual equal to the current gap.
    """
    n = x.shape[0]
    x3 = x.reshape(-1, 3)

    rows, cols, vals, f = [], [], [], []
    for r, pin in enumerate(pins):
        for axis in range(3):
            rows.append(3 * r + axis)
            cols.append(3 * pin.vertex + axis)
            vals.append(1.0)
            f.append(x3[pin.vertex, axis] - pin.target[axis])
    J_f = sp.csr_matrix((vals, (rows, cols)), shape=(3 * len(pins), n))

    rows, cols, vals, h = [], [], [], []
    for r, (v, pi) in enumerate(active_pairs):
        plane = planes[pi]
        for axis in range(3):
            rows.append(r)
            cols.append(3 * v + axis)
            vals.append(plane.normal[axis])
        h.append(plane_gap(x3[v], plane))
    J_h = sp.csr_matrix((vals, (rows, cols)), shape=(len(active_pairs), n))

    return ConstraintSet(J_f=J_f, f=np.array(f, dtype=float),
                         J_h=J_h, h=np.array(h, dtype=float),
                         pairs=list(active_pairs))


def min_gap(positions: np.ndarray, planes: Sequence[ContactPlane]) -> float:
    """Smallest gap over all vertices and planes (inf when no planes)."""
    worst = np.inf
    for plane in planes:
        worst = min(worst, float(plane_gaps(positions, plane).min()))
    return worst
