"""Scene and trajectory file formats.

Scene files are strict JSON: unknown keys are rejected, all cross
references must resolve against the mesh, and defaults are filled in so
a normalized dump round-trips to an identical scene.  Trajectories are
line-oriented JSON (one header line, one record per frame) with floats
at full round-trip precision.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constraints import ContactPlane, PinConstraint
from .energy import Material, MuscleSpec, NEO_HOOKEAN, STABLE_NEO_HOOKEAN
from .forces import PiecewiseConstant, PiecewiseLinear, PointLoad, PressureActuator
from .mesh import MeshModel, load_mesh
from .solver import SolverOptions
from .timestepping import Frame, StepControl, Trajectory

SCENE_VERSION = 1


class SceneError(ValueError):
    """Scene validation failure; message starts with a JSON pointer."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {message}")


class TrajectoryError(ValueError):
    pass


def _check_keys(obj: dict, allowed: set, pointer: str):
    unknown = set(obj) - allowed
    if unknown:
        raise SceneError(pointer, f"unknown keys {sorted(unknown)}")


def _require(obj: dict, key: str, pointer: str):
    if key not in obj:
        raise SceneError(pointer, f"missing required key {key!r}")
    return obj[key]


def _number(value, pointer: str, *, lo=None, hi=None) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SceneError(pointer, "expected a number")
    v = float(value)
    if lo is not None and v < lo:
        raise SceneError(pointer, f"must be >= {lo}")
    if hi is not None and v > hi:
        raise SceneError(pointer, f"must be <= {hi}")
    return v


def _vec3(value, pointer: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise SceneError(pointer, "expected a 3-vector")
    return arr


@dataclass
class OutputConfig:
    stride: int = 1
    marker_sets: list[str] = field(default_factory=list)
    record_all_vertices: bool = False
    record_energies: bool = False


@dataclass
class PinSpec:
    vertex_set: str
    targets: Optional[np.ndarray] = None  # (k, 3); defaults to rest positions
    motion_times: Optional[list[float]] = None
    motion_offsets: Optional[np.ndarray] = None  # (len(times), 3)


@dataclass
class Scene:
    """Fully validated scene; the mesh is loaded and cross-checked."""

    mesh_path: str
    mesh: MeshModel
    materials: list[tuple[str, Material]]
    gravity: np.ndarray
    damping: float
    phases: list[tuple[str, Optional[float]]]  # (scheme, until)
    step_control: StepControl
    solver_options: SolverOptions
    pin_specs: list[PinSpec]
    planes: list[ContactPlane]
    pressures: list[PressureActuator]
    loads: list[PointLoad]
    muscles: list[MuscleSpec]
    duration: float
    initial_velocity: np.ndarray
    output: OutputConfig
    scene_hash: str = ""
    normalized: dict = field(default_factory=dict)

    def material_regions(self):
        return [(self.mesh.element_sets[name], mat) for name, mat in self.materials]

    def scheme_at(self, t_end: float) -> str:
        for scheme, until in self.phases:
            if until is None or t_end <= until + 1e-12:
                return scheme
        return self.phases[-1][0]

    def phase_boundaries(self) -> list[float]:
        return [until for _, until in self.phases if until is not None]

    def pins_at(self, t: float) -> list[PinConstraint]:
        pins = []
        for spec in self.pin_specs:
            verts = self.mesh.vertex_sets[spec.vertex_set]
            base = spec.targets if spec.targets is not None else self.mesh.vertices[verts]
            offset = np.zeros(3)
            if spec.motion_times is not None:
                offset = np.array([
                    np.interp(t, spec.motion_times, spec.motion_offsets[:, axis])
                    for axis in range(3)
                ])
            for v, tgt in zip(verts, base):
                pins.append(PinConstraint(int(v), tgt + offset))
        return pins

    def marker_layout(self):
        vertices, names = [], []
        for set_name in self.output.marker_sets:
            for k, v in enumerate(self.mesh.vertex_sets[set_name]):
                vertices.append(int(v))
                names.append(f"{set_name}:{k}")
        return vertices, names


def _parse_schedule(obj, pointer, value_key="values", vector=False, kind="constant"):
    _check_keys(obj, {"times", value_key}, pointer)
    times = _require(obj, "times", pointer)
    values = _require(obj, value_key, pointer)
    if not isinstance(times, list) or not isinstance(values, list):
        raise SceneError(pointer, "times/values must be lists")
    if len(times) != len(values):
        raise SceneError(pointer, "times and values differ in length")
    try:
        if vector:
            values = [np.asarray(v, dtype=float) for v in values]
            if any(v.shape != (3,) for v in values):
                raise ValueError
        cls = PiecewiseConstant if kind == "constant" else PiecewiseLinear
        return cls(times, values)
    except ValueError as exc:
        raise SceneError(pointer, f"invalid schedule: {exc}") from exc


def parse_scene(path) -> Scene:
    """Parse, validate and normalize a scene file."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SceneError("", f"not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise SceneError("", "top level must be an object")
    return _build_scene(raw, os.path.dirname(os.fspath(path)))


def _build_scene(raw: dict, base_dir: str) -> Scene:
    top_keys = {"version", "mesh", "materials", "gravity", "damping", "integrator",
                "step_control", "solver", "pins", "planes", "pressures", "loads",
                "muscles", "duration", "initial_velocity", "output"}
    _check_keys(raw, top_keys, "")
    version = _require(raw, "version", "")
    if int(version) != SCENE_VERSION:
        raise SceneError("/version", f"unsupported scene version {version}")

    mesh_rel = _require(raw, "mesh", "")
    mesh_path = os.path.join(base_dir, mesh_rel) if base_dir else mesh_rel
    mesh = load_mesh(mesh_path)

    materials = []
    mats_raw = _require(raw, "materials", "")
    if not isinstance(mats_raw, list) or not mats_raw:
        raise SceneError("/materials", "need at least one material region")
    covered = np.zeros(mesh.num_elements, dtype=bool)
    for i, m in enumerate(mats_raw):
        ptr = f"/materials/{i}"
        _check_keys(m, {"element_set", "model", "young_modulus", "poisson_ratio",
                        "density"}, ptr)
        set_name = _require(m, "element_set", ptr)
        if set_name not in mesh.element_sets:
            raise SceneError(ptr, f"unknown element set {set_name!r}")
        model = m.get("model", NEO_HOOKEAN)
        if model not in (NEO_HOOKEAN, STABLE_NEO_HOOKEAN):
            raise SceneError(f"{ptr}/model", f"unknown material model {model!r}")
        try:
            mat = Material(
                model=model,
                young_modulus=_number(_require(m, "young_modulus", ptr),
                                      f"{ptr}/young_modulus"),
                poisson_ratio=_number(_require(m, "poisson_ratio", ptr),
                                      f"{ptr}/poisson_ratio"),
                density=_number(_require(m, "density", ptr), f"{ptr}/density"),
            )
        except ValueError as exc:
            raise SceneError(ptr, str(exc)) from exc
        ids = mesh.element_sets[set_name]
        if covered[ids].any():
            raise SceneError(ptr, "material regions overlap")
        covered[ids] = True
        materials.append((set_name, mat))
    if not covered.all():
        missing = int(np.nonzero(~covered)[0][0])
        raise SceneError("/materials", f"element {missing} has no material region")

    gravity = _vec3(raw.get("gravity", [0.0, 0.0, 0.0]), "/gravity")
    damping = _number(raw.get("damping", 0.0), "/damping", lo=0.0)

    phases = _parse_integrator(raw.get("integrator", "backward-euler"))

    sc_raw = raw.get("step_control", {})
    _check_keys(sc_raw, {"dt_init", "dt_min", "dt_max", "cfl_coefficient",
                         "growth", "retry_limit"}, "/step_control")
    try:
        step_control = StepControl(
            dt_init=_number(sc_raw.get("dt_init", 1e-3), "/step_control/dt_init", lo=0.0),
            dt_min=_number(sc_raw.get("dt_min", 1e-7), "/step_control/dt_min", lo=0.0),
            dt_max=_number(sc_raw.get("dt_max", 1e-2), "/step_control/dt_max", lo=0.0),
            cfl_coefficient=_number(sc_raw.get("cfl_coefficient", 1.0),
                                    "/step_control/cfl_coefficient", lo=0.0),
            growth=_number(sc_raw.get("growth", 1.5), "/step_control/growth", lo=1.0),
            retry_limit=int(sc_raw.get("retry_limit", 8)),
        )
    except ValueError as exc:
        raise SceneError("/step_control", str(exc)) from exc

    so_raw = raw.get("solver", {})
    _check_keys(so_raw, {"tol", "max_iters"}, "/solver")
    solver_options = SolverOptions(
        tol=_number(so_raw.get("tol", 1e-6), "/solver/tol"),
        max_iters=int(so_raw.get("max_iters", 100)),
    )

    pin_specs = []
    for i, p in enumerate(raw.get("pins", [])):
        ptr = f"/pins/{i}"
        _check_keys(p, {"vertex_set", "targets", "motion"}, ptr)
        set_name = _require(p, "vertex_set", ptr)
        if set_name not in mesh.vertex_sets:
            raise SceneError(ptr, f"unknown vertex set {set_name!r}")
        targets = None
        if p.get("targets") is not None:
            targets = np.asarray(p["targets"], dtype=float)
            if targets.shape != (len(mesh.vertex_sets[set_name]), 3):
                raise SceneError(f"{ptr}/targets", "shape must match the vertex set")
        motion_times = motion_offsets = None
        if p.get("motion") is not None:
            mraw = p["motion"]
            _check_keys(mraw, {"times", "offsets"}, f"{ptr}/motion")
            motion_times = [_number(t, f"{ptr}/motion/times") for t in
                            _require(mraw, "times", f"{ptr}/motion")]
            motion_offsets = np.asarray(_require(mraw, "offsets", f"{ptr}/motion"),
                                        dtype=float)
            if motion_offsets.shape != (len(motion_times), 3):
                raise SceneError(f"{ptr}/motion/offsets", "need one 3-vector per time")
            if any(b <= a for a, b in zip(motion_times, motion_times[1:])):
                raise SceneError(f"{ptr}/motion/times", "must be strictly increasing")
        pin_specs.append(PinSpec(set_name, targets, motion_times, motion_offsets))

    planes = []
    for i, pl in enumerate(raw.get("planes", [])):
        ptr = f"/planes/{i}"
        _check_keys(pl, {"normal", "point", "activation_margin"}, ptr)
        try:
            planes.append(ContactPlane(
                normal=_vec3(_require(pl, "normal", ptr), f"{ptr}/normal"),
                point=_vec3(_require(pl, "point", ptr), f"{ptr}/point"),
                activation_margin=_number(pl.get("activation_margin", 1e-3),
                                          f"{ptr}/activation_margin", lo=0.0),
            ))
        except ValueError as exc:
            raise SceneError(ptr, str(exc)) from exc

    pressures = []
    for i, pr in enumerate(raw.get("pressures", [])):
        ptr = f"/pressures/{i}"
        _check_keys(pr, {"triangle_set", "schedule"}, ptr)
        set_name = _require(pr, "triangle_set", ptr)
        if set_name not in mesh.triangle_sets:
            raise SceneError(ptr, f"unknown triangle set {set_name!r}")
        sched = _parse_schedule(_require(pr, "schedule", ptr), f"{ptr}/schedule",
                                kind="linear")
        pressures.append(PressureActuator(set_name, sched))

    loads = []
    for i, ld in enumerate(raw.get("loads", [])):
        ptr = f"/loads/{i}"
        _check_keys(ld, {"vertex_set", "schedule", "release_time"}, ptr)
        set_name = _require(ld, "vertex_set", ptr)
        if set_name not in mesh.vertex_sets:
            raise SceneError(ptr, f"unknown vertex set {set_name!r}")
        sched = _parse_schedule(_require(ld, "schedule", ptr), f"{ptr}/schedule",
                                value_key="forces", vector=True)
        release = ld.get("release_time")
        if release is not None:
            release = _number(release, f"{ptr}/release_time")
        loads.append(PointLoad(set_name, sched, release))

    muscles = []
    for i, mu in enumerate(raw.get("muscles", [])):
        ptr = f"/muscles/{i}"
        _check_keys(mu, {"element_set", "stiffness", "direction", "schedule"}, ptr)
        set_name = _require(mu, "element_set", ptr)
        if set_name not in mesh.element_sets:
            raise SceneError(ptr, f"unknown element set {set_name!r}")
        sched = _parse_schedule(_require(mu, "schedule", ptr), f"{ptr}/schedule")
        try:
            muscles.append(MuscleSpec(
                element_set=set_name,
                stiffness=_number(_require(mu, "stiffness", ptr), f"{ptr}/stiffness",
                                  lo=0.0),
                direction=_vec3(_require(mu, "direction", ptr), f"{ptr}/direction"),
                activation=sched,
            ))
        except ValueError as exc:
            raise SceneError(ptr, str(exc)) from exc

    duration = _number(_require(raw, "duration", ""), "/duration", lo=0.0)
    initial_velocity = _vec3(raw.get("initial_velocity", [0.0, 0.0, 0.0]),
                             "/initial_velocity")

    out_raw = raw.get("output", {})
    _check_keys(out_raw, {"stride", "marker_sets", "record_all_vertices",
                          "record_energies"}, "/output")
    marker_sets = out_raw.get("marker_sets", [])
    for name in marker_sets:
        if name not in mesh.vertex_sets:
            raise SceneError("/output/marker_sets", f"unknown vertex set {name!r}")
    output = OutputConfig(
        stride=int(out_raw.get("stride", 1)),
        marker_sets=list(marker_sets),
        record_all_vertices=bool(out_raw.get("record_all_vertices", False)),
        record_energies=bool(out_raw.get("record_energies", False)),
    )
    if output.stride < 1:
        raise SceneError("/output/stride", "must be >= 1")

    scene = Scene(
        mesh_path=mesh_path, mesh=mesh, materials=materials, gravity=gravity,
        damping=damping, phases=phases, step_control=step_control,
        solver_options=solver_options, pin_specs=pin_specs, planes=planes,
        pressures=pressures, loads=loads, muscles=muscles, duration=duration,
        initial_velocity=initial_velocity, output=output,
    )
    scene.normalized = normalized_dump(scene, mesh_rel)
    with open(mesh_path, "rb") as fh:
        mesh_bytes = fh.read()
    digest = hashlib.sha256()
    digest.update(json.dumps(scene.normalized, sort_keys=True).encode())
    digest.update(mesh_bytes)
    scene.scene_hash = digest.hexdigest()[:16]
    return scene


def _parse_integrator(raw) -> list[tuple[str, Optional[float]]]:
    schemes = ("backward-euler", "crank-nicolson")
    if isinstance(raw, str):
        if raw not in schemes:
            raise SceneError("/integrator", f"unknown scheme {raw!r}")
        return [(raw, None)]
    _check_keys(raw, {"phases"}, "/integrator")
    phases = []
    plist = _require(raw, "phases", "/integrator")
    for i, ph in enumerate(plist):
        ptr = f"/integrator/phases/{i}"
        _check_keys(ph, {"scheme", "until"}, ptr)
        scheme = _require(ph, "scheme", ptr)
        if scheme not in schemes:
            raise SceneError(f"{ptr}/scheme", f"unknown scheme {scheme!r}")
        until = ph.get("until")
        if until is None and i != len(plist) - 1:
            raise SceneError(ptr, "only the last phase may omit 'until'")
        if until is not None:
            until = _number(until, f"{ptr}/until", lo=0.0)
            if phases and phases[-1][1] is not None and until <= phases[-1][1]:
                raise SceneError(f"{ptr}/until", "phase times must increase")
        phases.append((scheme, until))
    if not phases:
        raise SceneError("/integrator/phases", "need at least one phase")
    return phases


def normalized_dump(scene: Scene, mesh_rel: str) -> dict:
    """Canonical scene dict with every default made explicit."""
    out = {
        "version": SCENE_VERSION,
        "mesh": mesh_rel,
        "materials": [
            {"element_set": name, "model": m.model, "young_modulus": m.young_modulus,
             "poisson_ratio": m.poisson_ratio, "density": m.density}
            for name, m in scene.materials
        ],
        "gravity": scene.gravity.tolist(),
        "damping": scene.damping,
        "integrator": {"phases": [
            {"scheme": s, **({"until": u} if u is not None else {})}
            for s, u in scene.phases
        ]},
        "step_control": {
            "dt_init": scene.step_control.dt_init,
            "dt_min": scene.step_control.dt_min,
            "dt_max": scene.step_control.dt_max,
            "cfl_coefficient": scene.step_control.cfl_coefficient,
            "growth": scene.step_control.growth,
            "retry_limit": scene.step_control.retry_limit,
        },
        "solver": {"tol": scene.solver_options.tol,
                   "max_iters": scene.solver_options.max_iters},
        "pins": [
            {"vertex_set": p.vertex_set,
             **({"targets": p.targets.tolist()} if p.targets is not None else {}),
             **({"motion": {"times": p.motion_times,
                            "offsets": p.motion_offsets.tolist()}}
                if p.motion_times is not None else {})}
            for p in scene.pin_specs
        ],
        "planes": [
            {"normal": pl.normal.tolist(), "point": pl.point.tolist(),
             "activation_margin": pl.activation_margin}
            for pl in scene.planes
        ],
        "pressures": [
            {"triangle_set": pr.triangle_set,
             "schedule": {"times": pr.schedule.times, "values": pr.schedule.values}}
            for pr in scene.pressures
        ],
        "loads": [
            {"vertex_set": ld.vertex_set,
             "schedule": {"times": ld.schedule.times,
                          "forces": [np.asarray(f, dtype=float).tolist()
                                     for f in ld.schedule.values]},
             **({"release_time": ld.release_time}
                if ld.release_time is not None else {})}
            for ld in scene.loads
        ],
        "muscles": [
            {"element_set": m.element_set, "stiffness": m.stiffness,
             "direction": m.direction.tolist(),
             "schedule": {"times": m.activation.times,
                          "values": [float(v) for v in m.activation.values]}}
            for m in scene.muscles
        ],
        "duration": scene.duration,
        "initial_velocity": scene.initial_velocity.tolist(),
        "output": {
            "stride": scene.output.stride,
            "marker_sets": scene.output.marker_sets,
            "record_all_vertices": scene.output.record_all_vertices,
            "record_energies": scene.output.record_energies,
        },
    }
    return out


def write_scene(path, scene_dict: dict) -> None:
    with open(path, "w") as fh:
        json.dump(scene_dict, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Trajectory files (JSON lines)
# ---------------------------------------------------------------------------

def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w") as fh:
        header = {
            "scene_hash": traj.scene_hash,
            "dof_count": traj.dof_count,
            "marker_names": traj.marker_names,
            "marker_vertices": traj.marker_vertices,
        }
        fh.write(json.dumps(header) + "\n")
        for f in traj.frames:
            rec = {"t": f.t, "markers": _listify(f.markers)}
            if f.positions is not None:
                rec["positions"] = _listify(f.positions)
            if f.energies is not None:
                rec["energies"] = {k: float(v) for k, v in f.energies.items()}
            rec["max_penetration"] = f.max_penetration
            rec["iterations"] = f.iterations
            fh.write(json.dumps(rec) + "\n")


def _listify(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def read_trajectory(path) -> Trajectory:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TrajectoryError(f"{path}: empty trajectory file")
    try:
        header = json.loads(lines[0])
        traj = Trajectory(
            scene_hash=header["scene_hash"],
            dof_count=int(header["dof_count"]),
            marker_names=list(header["marker_names"]),
            marker_vertices=[int(v) for v in header["marker_vertices"]],
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise TrajectoryError(f"{path}:1: malformed header ({exc})") from exc
    t_prev = -np.inf
    for ln, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            frame = Frame(
                t=float(rec["t"]),
                markers=np.asarray(rec["markers"], dtype=float).reshape(-1, 3),
                positions=(np.asarray(rec["positions"], dtype=float).reshape(-1, 3)
                           if "positions" in rec else None),
                energies=rec.get("energies"),
                max_penetration=float(rec.get("max_penetration", 0.0)),
                iterations=int(rec.get("iterations", 0)),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise TrajectoryError(f"{path}:{ln}: malformed frame ({exc})") from exc
        if frame.t <= t_prev:
            raise TrajectoryError(f"{path}:{ln}: frame times must increase")
        t_prev = frame.t
        traj.frames.append(frame)
    return traj
