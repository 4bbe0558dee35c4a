"""Bundled example scenes: clamped cantilever, poked cube, jumping leg.

Builders return plain (mesh dict, scene dict) pairs in the documented
JSON formats so the files double as format examples.  Parameters mirror
the bundled defaults; tests and the harness override them freely.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .timestepping import Trajectory


def box_hex_mesh(nx: int, ny: int, nz: int, sx: float, sy: float, sz: float,
                 origin=(0.0, 0.0, 0.0)) -> dict:
    """Regular hexahedral box grid: nx*ny*nz cells of size (sx, sy, sz).

    Vertices are indexed x-fastest; face vertex sets x0/x1/y0/y1/z0/z1
    and the element set "all" are included.
    """
    ox, oy, oz = origin

    def vid(i, j, k):
        return i + j * (nx + 1) + k * (nx + 1) * (ny + 1)

    vertices = [None] * ((nx + 1) * (ny + 1) * (nz + 1))
    for k in range(nz + 1):
        for j in range(ny + 1):
            for i in range(nx + 1):
                vertices[vid(i, j, k)] = [ox + i * sx, oy + j * sy, oz + k * sz]

    hexes = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                hexes.append([
                    vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k),
                    vid(i, j, k + 1), vid(i + 1, j, k + 1), vid(i + 1, j + 1, k + 1),
                    vid(i, j + 1, k + 1),
                ])

    faces = {
        "x0": [vid(0, j, k) for k in range(nz + 1) for j in range(ny + 1)],
        "x1": [vid(nx, j, k) for k in range(nz + 1) for j in range(ny + 1)],
        "y0": [vid(i, 0, k) for k in range(nz + 1) for i in range(nx + 1)],
        "y1": [vid(i, ny, k) for k in range(nz + 1) for i in range(nx + 1)],
        "z0": [vid(i, j, 0) for j in range(ny + 1) for i in range(nx + 1)],
        "z1": [vid(i, j, nz) for j in range(ny + 1) for i in range(nx + 1)],
    }
    return {
        "vertices": vertices,
        "hexes": hexes,
        "vertex_sets": faces,
        "triangle_sets": {},
        "element_sets": {"all": list(range(len(hexes)))},
    }


def box_surface_triangles(nx: int, ny: int, nz: int, orientation: str = "outward") -> list:
    """Triangulated surface of a box_hex_mesh grid.

    "outward" winds normals away from the box; "inward" winds them into
    it (the chamber convention: normals point into the pressurized
    cavity, so -p n pushes the wall outward).
    """

    def vid(i, j, k):
        return i + j * (nx + 1) + k * (nx + 1) * (ny + 1)

    quads = []
    for j in range(ny):  # z = 0, outward normal -z
        for i in range(nx):
            quads.append((vid(i, j, 0), vid(i, j + 1, 0), vid(i + 1, j + 1, 0),
                          vid(i + 1, j, 0)))
    for j in range(ny):  # z = nz, outward normal +z
        for i in range(nx):
            quads.append((vid(i, j, nz), vid(i + 1, j, nz), vid(i + 1, j + 1, nz),
                          vid(i, j + 1, nz)))
    for k in range(nz):  # y = 0, outward normal -y
        for i in range(nx):
            quads.append((vid(i, 0, k), vid(i + 1, 0, k), vid(i + 1, 0, k + 1),
                          vid(i, 0, k + 1)))
    for k in range(nz):  # y = ny, outward normal +y
        for i in range(nx):
            quads.append((vid(i, ny, k), vid(i, ny, k + 1), vid(i + 1, ny, k + 1),
                          vid(i + 1, ny, k)))
    for k in range(nz):  # x = 0, outward normal -x
        for j in range(ny):
            quads.append((vid(0, j, k), vid(0, j, k + 1), vid(0, j + 1, k + 1),
                          vid(0, j + 1, k)))
    for k in range(nz):  # x = nx, outward normal +x
        for j in range(ny):
            quads.append((vid(nx, j, k), vid(nx, j + 1, k), vid(nx, j + 1, k + 1),
                          vid(nx, j, k + 1)))

    tris = []
    for a, b, c, d in quads:
        if orientation == "outward":
            tris += [[a, b, c], [a, c, d]]
        else:
            tris += [[a, c, b], [a, d, c]]
    return tris


def cantilever_scene(
    mesh_file: str = "cantilever_mesh.json",
    nx: int = 10, ny: int = 3, nz: int = 3,
    young_modulus: float = 2.0e5, poisson_ratio: float = 0.3,
    density: float = 1000.0, damping: float = 3.0,
    tip_load: float = 0.15, release_time: float = 0.8, duration: float = 1.6,
    dt: float = 2.5e-3, dt_max: float = 1.0e-2, stride: int = 4,
    solver_tol: float = 1e-8,
) -> tuple[dict, dict]:
    """Clamped 10 x 3 x 3 cm beam with a released tip load.

    The load phase runs backward Euler to settle; from the release the
    scheme switches to Crank-Nicolson so the oscillation persists.  The
    total tip load is split evenly over the free-end face vertices.
    Gravity is off so the small-deflection regime matches slender-beam
    theory.
    """
    mesh = box_hex_mesh(nx, ny, nz, 0.10 / nx, 0.03 / ny, 0.03 / nz)
    n_tip = len(mesh["vertex_sets"]["x1"])
    # markers: front-top edge line along the beam axis
    mesh["vertex_sets"]["markers"] = [
        i + 0 * (nx + 1) + nz * (nx + 1) * (ny + 1) for i in range(nx + 1)
    ]
    mesh["vertex_sets"]["tip"] = mesh["vertex_sets"]["x1"]
    mesh["vertex_sets"]["clamp"] = mesh["vertex_sets"]["x0"]

    scene = {
        "version": 1,
        "mesh": mesh_file,
        "materials": [{
            "element_set": "all", "model": "neo-hookean",
            "young_modulus": young_modulus, "poisson_ratio": poisson_ratio,
            "density": density,
        }],
        "gravity": [0.0, 0.0, 0.0],
        "damping": damping,
        "integrator": {"phases": [
            {"scheme": "backward-euler", "until": release_time},
            {"scheme": "crank-nicolson"},
        ]},
        # dt may grow to dt_max: backward Euler then settles the load
        # phase quickly through its step-size-dependent dissipation
        "step_control": {"dt_init": dt, "dt_min": 1e-6, "dt_max": dt_max,
                         "cfl_coefficient": 50.0},
        "solver": {"tol": solver_tol, "max_iters": 100},
        "pins": [{"vertex_set": "clamp"}],
        "loads": [{
            "vertex_set": "tip",
            "schedule": {"times": [0.0], "forces": [[0.0, 0.0, -tip_load / n_tip]]},
            "release_time": release_time,
        }],
        "duration": duration,
        "output": {"stride": stride, "marker_sets": ["markers"],
                   "record_energies": True},
    }
    return mesh, scene


def poke_cube_scene(
    mesh_file: str = "poke_cube_mesh.json",
    cells: int = 4,
    young_modulus: float = 1346.0, poisson_ratio: float = 0.018,
    density: float = 40.0, damping: float = 170.0,
    poke_depth: float = 0.03, duration: float = 1.0,
    dt: float = 2.0e-3, stride: int = 5,
) -> tuple[dict, dict]:
    """16 cm soft cube poked from above by a moving pin patch.

    The cylindrical end effector is approximated by pinning a center
    patch of top-face vertices and driving it down and back up along a
    piecewise-linear path.  Stable Neo-Hookean keeps the large local
    indentation well posed.
    """
    side = 0.16
    mesh = box_hex_mesh(cells, cells, cells, side / cells, side / cells, side / cells)
    nvx = cells + 1

    def vid(i, j, k):
        return i + j * nvx + k * nvx * nvx

    c0, c1 = cells // 2, cells // 2 + 1
    poke = [vid(i, j, cells) for j in range(c0, c1 + 1) for i in range(c0, c1 + 1)]
    mesh["vertex_sets"]["poke"] = poke
    mesh["vertex_sets"]["floor"] = mesh["vertex_sets"]["z0"]
    mesh["vertex_sets"]["markers"] = [vid(c0, c0, cells), vid(0, 0, cells),
                                      vid(cells, cells, cells)]

    scene = {
        "version": 1,
        "mesh": mesh_file,
        "materials": [{
            "element_set": "all", "model": "stable-neo-hookean",
            "young_modulus": young_modulus, "poisson_ratio": poisson_ratio,
            "density": density,
        }],
        "gravity": [0.0, 0.0, -9.81],
        "damping": damping,
        "integrator": "crank-nicolson",
        "step_control": {"dt_init": dt, "dt_min": 1e-6, "dt_max": dt,
                         "cfl_coefficient": 20.0},
        "pins": [
            {"vertex_set": "floor"},
            {"vertex_set": "poke", "motion": {
                "times": [0.0, 0.1, 0.4, 0.6, 0.9],
                "offsets": [[0, 0, 0], [0, 0, 0], [0, 0, -poke_depth],
                            [0, 0, -poke_depth], [0, 0, 0]],
            }},
        ],
        "duration": duration,
        "output": {"stride": stride, "marker_sets": ["markers"],
                   "record_all_vertices": True},
    }
    return mesh, scene


def leg_scene(
    mesh_file: str = "leg_mesh.json",
    a_v: float = 0.69, a_d: float = 1.05, t_v: float = 0.54, t_d: float = 0.27,
    young_modulus: float = 5.0e4, poisson_ratio: float = 0.3,
    density: float = 400.0, damping: float = 0.1,
    muscle_stiffness: float | None = None,
    duration: float = 1.5, dt: float = 2.5e-3, stride: int = 6,
) -> tuple[dict, dict]:
    """Muscle-actuated jumping leg on a voxel grid, 0.5 m tall.

    Two antagonistic groups of 10 voxels each run the full height: the
    ventral column starts contracted at a_v and relaxes at t_v, the
    dorsal column contracts to a_d at t_d.  The leg starts on the ground
    plane with a 0.5 m/s forward push.  The default muscle stiffness is
    four shear moduli, which lets a fully activated column contract to
    roughly half its length.
    """
    if muscle_stiffness is None:
        muscle_stiffness = 4.0 * young_modulus / 2.6
    voxel = 0.05
    mesh = box_hex_mesh(2, 1, 10, voxel, voxel, voxel)
    # element index of cell (i, j, k) is i + 2 * k here (ny = 1)
    mesh["element_sets"]["dorsal"] = [0 + 2 * k for k in range(10)]
    mesh["element_sets"]["ventral"] = [1 + 2 * k for k in range(10)]
    nvx, nvy = 3, 2
    mesh["vertex_sets"]["foot"] = [i + j * nvx for j in range(nvy) for i in range(nvx)]
    mesh["vertex_sets"]["markers"] = [
        i + j * nvx + 10 * nvx * nvy for j in range(nvy) for i in range(nvx)
    ]

    scene = {
        "version": 1,
        "mesh": mesh_file,
        "materials": [{
            "element_set": "all", "model": "neo-hookean",
            "young_modulus": young_modulus, "poisson_ratio": poisson_ratio,
            "density": density,
        }],
        "gravity": [0.0, 0.0, -9.81],
        "damping": damping,
        "integrator": "backward-euler",
        "step_control": {"dt_init": dt, "dt_min": 1e-6, "dt_max": dt,
                         "cfl_coefficient": 20.0},
        "planes": [{"normal": [0.0, 0.0, 1.0], "point": [0.0, 0.0, 0.0],
                    "activation_margin": 1e-3}],
        "muscles": [
            {"element_set": "ventral", "stiffness": muscle_stiffness,
             "direction": [0.0, 0.0, 1.0],
             "schedule": {"times": [0.0, t_v], "values": [a_v, 0.0]}},
            {"element_set": "dorsal", "stiffness": muscle_stiffness,
             "direction": [0.0, 0.0, 1.0],
             "schedule": {"times": [0.0, t_d], "values": [0.0, a_d]}},
        ],
        "duration": duration,
        "initial_velocity": [0.5, 0.0, 0.0],
        "output": {"stride": stride, "marker_sets": ["markers"],
                   "record_all_vertices": True},
    }
    return mesh, scene


def lowest_vertex_height(traj: Trajectory) -> np.ndarray:
    """Per-frame height of the lowest recorded vertex (needs positions)."""
    if any(f.positions is None for f in traj.frames):
        raise ValueError("trajectory lacks full vertex positions")
    return np.array([f.positions[:, 2].min() for f in traj.frames])


def write_bundled_scenes(out_dir) -> dict[str, str]:
    """Write the three example scenes and their meshes; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, builder in (("cantilever", cantilever_scene),
                          ("poke_cube", poke_cube_scene),
                          ("leg", leg_scene)):
        mesh_file = f"{name}_mesh.json"
        mesh, scene = builder(mesh_file=mesh_file)
        mesh_path = os.path.join(out_dir, mesh_file)
        scene_path = os.path.join(out_dir, f"{name}.json")
        with open(mesh_path, "w") as fh:
            json.dump(mesh, fh)
            fh.write("\n")
        with open(scene_path, "w") as fh:
            json.dump(scene, fh, indent=2)
            fh.write("\n")
        paths[name] = scene_path
    return paths
