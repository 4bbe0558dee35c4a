"""Mesh model, rest-state precomputation and per-element kinematics.

Volumetric meshes mix linear tetrahedra (single quadrature point) and
trilinear hexahedra (2x2x2 Gauss quadrature).  Elements are numbered
globally with all tets first, hexes after, so element sets and material
regions can reference both kinds uniformly.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class MeshError(ValueError):
    """Raised for malformed or degenerate mesh input."""


# Reference hexahedron corners (xi, eta, zeta), VTK ordering: bottom face
# counter-clockwise, then top face.
_HEX_CORNERS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)

# 2x2x2 Gauss points on [-1,1]^3 (unit weights), fixed deterministic order.
_G = 1.0 / np.sqrt(3.0)
_HEX_GAUSS = np.array(
    [[sx * _G, sy * _G, sz * _G] for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)]
)


def _as_index_array(rows, width: int, what: str) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, width)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise MeshError(f"{what} must be rows of {width} vertex indices")
    return arr


@dataclass(frozen=True)
class MeshModel:
    """Validated volumetric mesh with named vertex/triangle/element sets."""

    vertices: np.ndarray  # (nv, 3) rest positions, meters
    tets: np.ndarray  # (nt, 4)
    hexes: np.ndarray  # (nh, 8)
    vertex_sets: dict[str, np.ndarray] = field(default_factory=dict)
    triangle_sets: dict[str, np.ndarray] = field(default_factory=dict)
    element_sets: dict[str, np.ndarray] = field(default_factory=dict)
    reordered_tets: tuple[int, ...] = ()

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_tets(self) -> int:
        return self.tets.shape[0]

    @property
    def num_hexes(self) -> int:
        return self.hexes.shape[0]

    @property
    def num_elements(self) -> int:
        return self.num_tets + self.num_hexes

    @property
    def num_dof(self) -> int:
        return 3 * self.num_vertices

    def element_vertices(self, e: int) -> np.ndarray:
        """Vertex indices of global element `e` (tets first, then hexes)."""
        if e < self.num_tets:
            return self.tets[e]
        return self.hexes[e - self.num_tets]


@dataclass(frozen=True)
class RestData:
    """Per-element reference data and lumped vertex masses.

    `tet_grads` / `hex_grads` hold the material shape-function gradients
    g so that F = x_loc^T @ g at each quadrature point; the dense
    deformation Hessians dF/dx (9 x 3K, row-major F flattening) are
    precomputed for Hessian chain rules.
    """

    tet_dm_inv: np.ndarray  # (nt, 3, 3)
    tet_volume: np.ndarray  # (nt,)
    tet_grads: np.ndarray  # (nt, 4, 3)
    tet_defhess: np.ndarray  # (nt, 9, 12)
    hex_volume: np.ndarray  # (nh,)
    hex_weights: np.ndarray  # (nh, 8) Gauss-point volume weights
    hex_grads: np.ndarray  # (nh, 8, 8, 3) per gauss point, per node
    hex_defhess: np.ndarray  # (nh, 8, 9, 24)
    masses: np.ndarray  # (nv,) lumped, kg
    densities: np.ndarray  # (ne,) kg/m^3

    @property
    def element_volumes(self) -> np.ndarray:
        return np.concatenate([self.tet_volume, self.hex_volume])


def _deformation_hessian(grads: np.ndarray) -> np.ndarray:
    """Dense dF/dx from shape gradients.

    grads: (..., K, 3).  Returns (..., 9, 3K) with F flattened row-major
    (k = 3a + b) and nodal coordinates flattened per vertex (i = 3m + d):
    dF_ab/dx_md = delta(a, d) * g[m, b].
    """
    lead = grads.shape[:-2]
    K = grads.shape[-2]
    G = np.zeros(lead + (9, 3 * K))
    for a in range(3):
        for b in range(3):
            for m in range(K):
                G[..., 3 * a + b, 3 * m + a] = grads[..., m, b]
    return G


def load_mesh(path) -> MeshModel:
    """Load and validate a mesh from the JSON mesh format.

    Negative-orientation tets are repaired by swapping their last two
    vertices; the affected indices are logged and recorded on the model.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise MeshError(f"{path}: top level must be an object")
    known = {"vertices", "tets", "hexes", "vertex_sets", "triangle_sets", "element_sets"}
    unknown = set(data) - known
    if unknown:
        raise MeshError(f"{path}: unknown mesh keys {sorted(unknown)}")
    if "vertices" not in data:
        raise MeshError(f"{path}: missing 'vertices'")
    vertices = np.asarray(data["vertices"], dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshError("vertices must be a list of 3-vectors")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("vertices contain non-finite values")
    nv = vertices.shape[0]

    tets = _as_index_array(data.get("tets", []), 4, "tets")
    hexes = _as_index_array(data.get("hexes", []), 8, "hexes")
    if tets.size == 0 and hexes.size == 0:
        raise MeshError("mesh has no elements")

    for name, arr in (("tets", tets), ("hexes", hexes)):
        if arr.size and (arr.min() < 0 or arr.max() >= nv):
            raise MeshError(f"{name}: vertex index out of range")
        for e, row in enumerate(arr):
            if len(set(row.tolist())) != len(row):
                raise MeshError(f"{name}[{e}]: repeated vertex index")

    # Repair tet orientation: reference shape matrix must have det > 0.
    tets = tets.copy()
    reordered = []
    for e in range(tets.shape[0]):
        det = _tet_det(vertices, tets[e])
        scale = np.prod(np.linalg.norm(vertices[tets[e][1:]] - vertices[tets[e][0]], axis=1))
        if abs(det) <= 1e-12 * max(scale, 1e-300):
            raise MeshError(f"tets[{e}]: degenerate (zero volume)")
        if det < 0:
            tets[e, [2, 3]] = tets[e, [3, 2]]
            reordered.append(e)
    if reordered:
        log.warning("reordered %d negatively oriented tets: %s", len(reordered), reordered)

    vertex_sets = {}
    for name, idx in (data.get("vertex_sets") or {}).items():
        arr = np.asarray(idx, dtype=np.int64).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() >= nv):
            raise MeshError(f"vertex_sets[{name!r}]: index out of range")
        vertex_sets[name] = arr

    triangle_sets = {}
    for name, tris in (data.get("triangle_sets") or {}).items():
        arr = _as_index_array(tris, 3, f"triangle_sets[{name!r}]")
        if arr.size and (arr.min() < 0 or arr.max() >= nv):
            raise MeshError(f"triangle_sets[{name!r}]: index out of range")
        triangle_sets[name] = arr

    ne = tets.shape[0] + hexes.shape[0]
    element_sets = {}
    for name, idx in (data.get("element_sets") or {}).items():
        arr = np.asarray(idx, dtype=np.int64).reshape(-1)
        if arr.size and (arr.min() < 0 or arr.max() >= ne):
            raise MeshError(f"element_sets[{name!r}]: element index out of range")
        element_sets[name] = arr

    mesh = MeshModel(
        vertices=vertices,
        tets=tets,
        hexes=hexes,
        vertex_sets=vertex_sets,
        triangle_sets=triangle_sets,
        element_sets=element_sets,
        reordered_tets=tuple(reordered),
    )
    for name in triangle_sets:
        _validate_closed_orientation(mesh, name)
    return mesh


def _tet_det(vertices: np.ndarray, tet: np.ndarray) -> float:
    dm = (vertices[tet[1:]] - vertices[tet[0]]).T
    return float(np.linalg.det(dm))


def _validate_closed_orientation(mesh: MeshModel, name: str) -> None:
    """If a triangle set is closed, its area-weighted normals must cancel."""
    tris = mesh.triangle_sets[name]
    if tris.shape[0] == 0:
        return
    edges = {}
    for tri in tris:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    if any(count != 2 for count in edges.values()):
        return  # open surface (free boundary); nothing to validate
    normals = surface_normals(mesh.vertices, tris)
    total_area = np.linalg.norm(normals, axis=1).sum()
    residual = np.linalg.norm(normals.sum(axis=0))
    if residual >= 1e-9 * total_area:
        raise MeshError(
            f"triangle_sets[{name!r}]: closed surface is not consistently oriented "
            f"(|sum n| = {residual:.3e}, area = {total_area:.3e})"
        )


def rest_precompute(mesh: MeshModel, densities) -> RestData:
    """Reference shape inverses, volumes, deformation Hessians, lumped masses.

    `densities` is either a scalar or an array over global elements
    (tets first, hexes after), in kg/m^3.
    """
    ne = mesh.num_elements
    rho = np.broadcast_to(np.asarray(densities, dtype=float), (ne,)).copy()
    if np.any(rho <= 0):
        raise MeshError("densities must be strictly positive")

    nv = mesh.num_vertices
    masses = np.zeros(nv)

    nt = mesh.num_tets
    dm_inv = np.zeros((nt, 3, 3))
    tet_vol = np.zeros(nt)
    tet_grads = np.zeros((nt, 4, 3))
    for e in range(nt):
        tet = mesh.tets[e]
        dm = (mesh.vertices[tet[1:]] - mesh.vertices[tet[0]]).T
        det = np.linalg.det(dm)
        if det <= 0:
            raise MeshError(f"tets[{e}]: singular reference shape matrix")
        dm_inv[e] = np.linalg.inv(dm)
        tet_vol[e] = det / 6.0
        tet_grads[e, 1:] = dm_inv[e]
        tet_grads[e, 0] = -dm_inv[e].sum(axis=0)
        masses[tet] += rho[e] * tet_vol[e] / 4.0

    nh = mesh.num_hexes
    hex_vol = np.zeros(nh)
    hex_w = np.zeros((nh, 8))
    hex_grads = np.zeros((nh, 8, 8, 3))
    dN = _hex_shape_gradients()  # (8 gp, 8 nodes, 3)
    for e in range(nh):
        X = mesh.vertices[mesh.hexes[e]]  # (8, 3)
        for p in range(8):
            J = X.T @ dN[p]  # (3,3) dX/dxi
            det = np.linalg.det(J)
            if det <= 0:
                raise MeshError(f"hexes[{e}]: non-positive Jacobian at quadrature point {p}")
            hex_w[e, p] = det
            hex_grads[e, p] = dN[p] @ np.linalg.inv(J)
        hex_vol[e] = hex_w[e].sum()
        masses[mesh.hexes[e]] += rho[nt + e] * hex_vol[e] / 8.0

    return RestData(
        tet_dm_inv=dm_inv,
        tet_volume=tet_vol,
        tet_grads=tet_grads,
        tet_defhess=_deformation_hessian(tet_grads),
        hex_volume=hex_vol,
        hex_weights=hex_w,
        hex_grads=hex_grads,
        hex_defhess=_deformation_hessian(hex_grads),
        masses=masses,
        densities=rho,
    )


def _hex_shape_gradients() -> np.ndarray:
    """Trilinear shape-function gradients at the 8 Gauss points, (8, 8, 3)."""
    out = np.zeros((8, 8, 3))
    for p, (xi, eta, zeta) in enumerate(_HEX_GAUSS):
        for a, (sx, sy, sz) in enumerate(_HEX_CORNERS):
            out[p, a, 0] = sx * (1 + sy * eta) * (1 + sz * zeta) / 8.0
            out[p, a, 1] = sy * (1 + sx * xi) * (1 + sz * zeta) / 8.0
            out[p, a, 2] = sz * (1 + sx * xi) * (1 + sy * eta) / 8.0
    return out


def deformation_gradient(element: int, mesh: MeshModel, rest: RestData, positions) -> np.ndarray:
    """F for one element: (3,3) for a tet, (8,3,3) per Gauss point for a hex.

    `positions` is the stacked (3nv,) or (nv,3) deformed vertex array.
    """
    x = np.asarray(positions, dtype=float).reshape(-1, 3)
    if element < mesh.num_tets:
        x_loc = x[mesh.tets[element]]
        return x_loc.T @ rest.tet_grads[element]
    e = element - mesh.num_tets
    x_loc = x[mesh.hexes[e]]
    return np.einsum("ka,pkb->pab", x_loc, rest.hex_grads[e])


def surface_normal(x0, x1, x2) -> np.ndarray:
    """Area-weighted triangle normal n = 0.5 (x1 - x0) x (x2 - x0)."""
    x0 = np.asarray(x0, dtype=float)
    return 0.5 * np.cross(np.asarray(x1, dtype=float) - x0, np.asarray(x2, dtype=float) - x0)


def surface_normals(positions: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Batched area-weighted normals, (k, 3)."""
    x = positions.reshape(-1, 3)
    a = x[triangles[:, 0]]
    return 0.5 * np.cross(x[triangles[:, 1]] - a, x[triangles[:, 2]] - a)


def min_edge_length(mesh: MeshModel, element_ids=None) -> float:
    """Shortest rest edge over the given global element ids (default: all)."""
    if element_ids is None:
        element_ids = np.arange(mesh.num_elements)
    best = np.inf
    tet_edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    hex_edges = [
        (0, 1), (1, 2), (2, 3), (3, 0),
        (4, 5), (5, 6), (6, 7), (7, 4),
        (0, 4), (1, 5), (2, 6), (3, 7),
    ]
    for e in np.asarray(element_ids, dtype=np.int64):
        if e < mesh.num_tets:
            conn, pairs = mesh.tets[e], tet_edges
        else:
            conn, pairs = mesh.hexes[e - mesh.num_tets], hex_edges
        pts = mesh.vertices[conn]
        for i, j in pairs:
            best = min(best, float(np.linalg.norm(pts[i] - pts[j])))
    return best
