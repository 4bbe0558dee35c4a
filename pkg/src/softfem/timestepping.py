"""Time integration: per-step incremental potentials, adaptive stepping,
and whole-scene simulation producing a trajectory."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import energy as en
from .constraints import PinConstraint, min_gap
from .forces import point_load_forces, pressure_forces
from .mesh import min_edge_length, rest_precompute
from .solver import SolverError, SolverOptions, sqp_minimize

log = logging.getLogger(__name__)

_TINY = 1e-12


class SimulationError(RuntimeError):
    """Step failure that survived all dt retries; message carries the time."""


@dataclass
class SystemState:
    """Stacked kinematic state at time t plus the force caches the
    Crank-Nicolson scheme needs from the previous step."""

    t: float
    x: np.ndarray
    v: np.ndarray
    f_int_prev: np.ndarray
    f_ext_prev: np.ndarray


@dataclass
class StepControl:
    dt_init: float = 1e-3
    dt_min: float = 1e-7
    dt_max: float = 1e-2
    cfl_coefficient: float = 1.0
    growth: float = 1.5
    retry_limit: int = 8

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")


@dataclass
class Frame:
    t: float
    markers: Optional[np.ndarray] = None  # (N, 3)
    positions: Optional[np.ndarray] = None  # (nv, 3)
    energies: Optional[dict] = None
    max_penetration: float = 0.0
    iterations: int = 0


@dataclass
class Trajectory:
    scene_hash: str
    dof_count: int
    marker_names: list[str] = field(default_factory=list)
    marker_vertices: list[int] = field(default_factory=list)
    frames: list[Frame] = field(default_factory=list)

    def marker_array(self) -> np.ndarray:
        """(T, N, 3) stack of marker positions."""
        return np.array([f.markers for f in self.frames])


def cfl_dt(mesh, rest, materials, coefficient: float = 1.0) -> float:
    """Step-size guidance dt = C * h_min / c_p, minimized over regions.

    `materials` is the region list [(element ids, Material)]; c_p is the
    pressure-wave speed sqrt((lam + 2 mu) / rho) on rest edge lengths.
    """
    bound = np.inf
    for ids, mat in materials:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            continue
        c_p = np.sqrt((mat.lam + 2.0 * mat.mu) / mat.density)
        bound = min(bound, coefficient * min_edge_length(mesh, ids) / c_p)
    return bound


class Stepper:
    """Runtime for one scene: assembled model, schedules, constraints."""

    def __init__(self, scene):
        self.scene = scene
        mesh = scene.mesh
        regions = scene.material_regions()
        densities = np.zeros(mesh.num_elements)
        for ids, mat in regions:
            densities[np.asarray(ids, dtype=np.int64)] = mat.density
        self.rest = rest_precompute(mesh, densities)
        muscle_groups = [
            (mesh.element_sets[m.element_set], m.stiffness, m.direction)
            for m in scene.muscles
        ]
        self.model = en.SystemModel(mesh, self.rest, regions, muscle_groups,
                                    scene.gravity)
        self.pressure_tris = [
            (mesh.triangle_sets[p.triangle_set], p) for p in scene.pressures
        ]
        self.planes = list(scene.planes)
        self.solver_options = scene.solver_options
        self.cfl_bound = cfl_dt(mesh, self.rest, regions,
                                scene.step_control.cfl_coefficient)

    # -- scheduled inputs --------------------------------------------------

    def activations(self, t: float) -> list[float]:
        return [m.activation.value(t) for m in self.scene.muscles]

    def external_forces(self, x: np.ndarray, t: float) -> np.ndarray:
        f = point_load_forces(self.scene.loads, self.scene.mesh.vertex_sets, t,
                              self.scene.mesh.num_vertices)
        for tris, actuator in self.pressure_tris:
            f = f + pressure_forces(tris, x, actuator.pressure(t))
        return f

    def pins_at(self, t: float) -> list[PinConstraint]:
        return self.scene.pins_at(t)

    def scheme_at(self, t_end: float) -> str:
        return self.scene.scheme_at(t_end)

    def phase_boundaries(self) -> list[float]:
        return self.scene.phase_boundaries()

    # -- stepping ----------------------------------------------------------

    def initial_state(self) -> SystemState:
        mesh = self.scene.mesh
        x0 = mesh.vertices.reshape(-1).astype(float).copy()
        v0 = np.tile(np.asarray(self.scene.initial_velocity, dtype=float),
                     mesh.num_vertices)
        acts = self.activations(0.0)
        return SystemState(
            t=0.0, x=x0, v=v0,
            f_int_prev=self.model.internal_forces(x0, acts),
            f_ext_prev=self.external_forces(x0, 0.0),
        )

    def step(self, state: SystemState, dt: float):
        """One implicit step of size dt; returns (new state, SolveResult)."""
        t_new = state.t + dt
        scheme = self.scheme_at(t_new)
        ctx = en.IntegratorContext(
            dt=dt, x_prev=state.x, v_prev=state.v, masses=self.rest.masses,
            scheme=scheme, alpha=self.scene.damping,
            f_int_prev=state.f_int_prev if scheme == "crank-nicolson" else None,
        )
        acts = self.activations(t_new)
        cache = {}

        def energy_fn(x, need_hessian):
            # External forces follow the deformation, so they are
            # refreshed at every iterate (Hessian evaluation) but frozen
            # during the line search; otherwise the merit model and the
            # QP gradient disagree and descent steps get rejected.
            if need_hessian or "f_ext" not in cache:
                f_ext = self.external_forces(x, t_new)
                if scheme == "crank-nicolson":
                    f_ext = 0.5 * (f_ext + state.f_ext_prev)
                cache["f_ext"] = f_ext
            return self.model.incremental(x, ctx, acts, cache["f_ext"], need_hessian)

        x0 = state.x + dt * state.v
        try:
            energy_fn(x0, False)
        except en.InversionError:
            x0 = state.x  # predictor inverted an element; start conservatively
        result = sqp_minimize(energy_fn, x0, self.solver_options,
                              pins=self.pins_at(t_new), planes=self.planes)
        if not result.converged:
            raise SolverError(f"SQP did not converge within "
                              f"{self.solver_options.max_iters} iterations")
        v_new = en.velocity_update(result.x, ctx)
        new = SystemState(
            t=t_new, x=result.x, v=v_new,
            f_int_prev=self.model.internal_forces(result.x, acts),
            f_ext_prev=self.external_forces(result.x, t_new),
        )
        return new, result


def simulate(scene) -> Trajectory:
    """Run a scene to its duration, recording frames on the output grid.

    Output times are fixed multiples of stride * dt_init, and steps are
    clamped so they land exactly on output times and integrator phase
    switches; adaptive dt therefore never changes the recorded grid.
    """
    stepper = Stepper(scene)
    control = scene.step_control
    state = stepper.initial_state()

    marker_vertices, marker_names = scene.marker_layout()
    traj = Trajectory(scene_hash=scene.scene_hash, dof_count=scene.mesh.num_dof,
                      marker_names=marker_names,
                      marker_vertices=[int(v) for v in marker_vertices])

    iters_since_frame = 0

    def record(state: SystemState):
        x3 = state.x.reshape(-1, 3)
        energies = None
        if scene.output.record_energies:
            energies = stepper.model.energy_breakdown(
                state.x, state.v, stepper.activations(state.t))
        traj.frames.append(Frame(
            t=state.t,
            markers=x3[marker_vertices].copy() if len(marker_vertices) else np.zeros((0, 3)),
            positions=x3.copy() if scene.output.record_all_vertices else None,
            energies=energies,
            max_penetration=max(0.0, -min_gap(state.x, stepper.planes))
            if stepper.planes else 0.0,
            iterations=iters_since_frame,
        ))

    record(state)
    duration = scene.duration
    if duration <= 0:
        return traj

    frame_dt = scene.output.stride * control.dt_init
    frame_times = list(np.arange(1, int(np.floor(duration / frame_dt + 1e-9)) + 1)
                       * frame_dt)
    if not frame_times or duration - frame_times[-1] > _TINY:
        frame_times.append(duration)
    events = sorted(set(frame_times)
                    | {b for b in stepper.phase_boundaries() if 0 < b < duration})

    dt_cur = min(control.dt_init, stepper.cfl_bound)
    streak = 0
    for t_event in events:
        while state.t < t_event - _TINY:
            dt_eff = min(dt_cur, t_event - state.t)
            attempts = 0
            while True:
                try:
                    state, result = stepper.step(state, dt_eff)
                    break
                except SolverError as exc:
                    attempts += 1
                    dt_eff *= 0.5
                    dt_cur = dt_eff
                    streak = 0
                    if attempts > control.retry_limit or dt_eff < control.dt_min:
                        raise SimulationError(
                            f"step failed at t={state.t:.6g} s after "
                            f"{attempts} retries: {exc}") from exc
                    log.warning("step failed at t=%.6g, retrying with dt=%.3g",
                                state.t, dt_eff)
            iters_since_frame += result.iterations
            streak += 1
            if streak >= 5:
                dt_cur = min(dt_cur * control.growth, control.dt_max,
                             stepper.cfl_bound)
                streak = 0
        if any(abs(t_event - ft) <= _TINY for ft in frame_times):
            record(state)
            iters_since_frame = 0
    return traj
