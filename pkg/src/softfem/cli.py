"""Command-line interface.

Exit codes: 0 ok, 1 check/solver failure, 2 input error, 3 data
mismatch, 4 domain violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import energy as en
from .forces import PiecewiseConstant
from .mesh import MeshError
from .metrics import chamfer_error, marker_error
from .sceneio import (SceneError, TrajectoryError, parse_scene, read_trajectory,
                      write_trajectory)
from .scenes import lowest_vertex_height, write_bundled_scenes
from .solver import SolverError
from .timestepping import SimulationError, simulate

OK, CHECK_FAIL, INPUT_ERROR, DATA_MISMATCH, DOMAIN_ERROR = 0, 1, 2, 3, 4

log = logging.getLogger("softfem")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (SceneError, MeshError, TrajectoryError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except (SolverError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CHECK_FAIL


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softfem",
        description="Soft-body FEM simulation by constrained energy minimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scene and write its trajectory")
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--out", required=True, help="output trajectory file")
    p.add_argument("--verbose", action="store_true", help="per-step diagnostics")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("gradcheck",
                       help="compare analytic derivatives against finite differences")
    p.add_argument("--scene", required=True)
    p.add_argument("--samples", type=int, default=25, help="configurations per term")
    p.add_argument("--tolerance", type=float, default=1e-4,
                   help="max allowed relative error")
    p.add_argument("--seed", type=int, default=0, help="RNG seed for configurations")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("metrics", help="compare a simulated and a reference trajectory")
    p.add_argument("metric", choices=["marker", "chamfer"])
    p.add_argument("--sim", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--json", action="store_true", dest="as_json",
                   help="machine-readable output")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("objective",
                       help="leg-jump objective: peak height of the lowest vertex")
    p.add_argument("--scene", required=True, help="leg scene with ventral/dorsal muscles")
    p.add_argument("--params", nargs=4, type=float, required=True,
                   metavar=("A_V", "A_D", "T_V", "T_D"),
                   help="activations in [0,2], switch times in [0.1,0.9] s")
    p.add_argument("--out", help="also write the trajectory here")
    p.set_defaults(func=_cmd_objective)

    p = sub.add_parser("make-scenes", help="write the bundled example scenes")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_make_scenes)
    return parser


def _cmd_simulate(args) -> int:
    scene = parse_scene(args.scene)
    if args.verbose:
        scene.solver_options.verbose = True
    traj = simulate(scene)
    write_trajectory(args.out, traj)
    print(f"wrote {len(traj.frames)} frames to {args.out}")
    return OK


def _cmd_make_scenes(args) -> int:
    for name, path in write_bundled_scenes(args.out_dir).items():
        print(f"{name}: {path}")
    return OK


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _format_mm(value_m: float) -> str:
    """Millimeters with 4 significant digits."""
    mm = value_m * 1000.0
    if mm == 0:
        return "0.000"
    digits = max(0, 3 - int(math.floor(math.log10(abs(mm)))))
    return f"{mm:.{digits}f}"


def _cmd_metrics(args) -> int:
    sim = read_trajectory(args.sim)
    ref = read_trajectory(args.ref)
    t_sim = [f.t for f in sim.frames]
    t_ref = [f.t for f in ref.frames]
    if len(t_sim) != len(t_ref) or any(abs(a - b) > 1e-9 for a, b in zip(t_sim, t_ref)):
        print("error: trajectories do not share a frame grid", file=sys.stderr)
        return DATA_MISMATCH

    if args.metric == "marker":
        a, b = sim.marker_array(), ref.marker_array()
        if a.shape != b.shape:
            print(f"error: marker shapes differ: {a.shape} vs {b.shape}",
                  file=sys.stderr)
            return DATA_MISMATCH
        value = marker_error(a[None], b[None])
    else:
        pairs = []
        for fa, fb in zip(sim.frames, ref.frames):
            pa = fa.positions if fa.positions is not None else fa.markers
            pb = fb.positions if fb.positions is not None else fb.markers
            if pa is None or pb is None or len(pa) == 0 or len(pb) == 0:
                print("error: frames without point data", file=sys.stderr)
                return DATA_MISMATCH
            pairs.append((pa, pb))
        value = chamfer_error(pairs)

    if args.as_json:
        print(json.dumps({"metric": args.metric, "value_m": value,
                          "value_mm": value * 1000.0}))
    else:
        print(f"{_format_mm(value)} mm")
    return OK


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def _cmd_objective(args) -> int:
    a_v, a_d, t_v, t_d = args.params
    if not (0.0 <= a_v <= 2.0 and 0.0 <= a_d <= 2.0
            and 0.1 <= t_v <= 0.9 and 0.1 <= t_d <= 0.9):
        print("error: params out of range (a in [0,2], t in [0.1,0.9])",
              file=sys.stderr)
        return DOMAIN_ERROR
    scene = parse_scene(args.scene)
    by_set = {m.element_set: m for m in scene.muscles}
    if "ventral" not in by_set or "dorsal" not in by_set:
        print("error: scene needs 'ventral' and 'dorsal' muscle groups",
              file=sys.stderr)
        return INPUT_ERROR
    if not scene.output.record_all_vertices:
        print("error: scene must record all vertices for the objective",
              file=sys.stderr)
        return INPUT_ERROR
    by_set["ventral"].activation = PiecewiseConstant([0.0, t_v], [a_v, 0.0])
    by_set["dorsal"].activation = PiecewiseConstant([0.0, t_d], [0.0, a_d])
    traj = simulate(scene)
    if args.out:
        write_trajectory(args.out, traj)
    print(f"{lowest_vertex_height(traj).max():.17g}")
    return OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def _fd_gradient(value_fn, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (value_fn(xp) - value_fn(xm)) / (2.0 * h)
    return g


def _density_errors(density, F, args_rest, h=1e-6):
    """Worst relative FD error of (gradient, Hessian) for one density."""
    _, P, A = density(F, *args_rest)
    Pfd = np.zeros((3, 3))
    Afd = np.zeros((9, 9))
    for a in range(3):
        for b in range(3):
            Fp, Fm = F.copy(), F.copy()
            Fp[a, b] += h
            Fm[a, b] -= h
            Pfd[a, b] = (density(Fp, *args_rest, False)[0]
                         - density(Fm, *args_rest, False)[0]) / (2 * h)
            Afd[:, 3 * a + b] = (density(Fp, *args_rest)[1].reshape(9)
                                 - density(Fm, *args_rest)[1].reshape(9)) / (2 * h)
    gerr = np.abs(P - Pfd).max() / max(np.abs(Pfd).max(), 1e-12)
    herr = np.abs(A - Afd).max() / max(np.abs(Afd).max(), 1e-12)
    return gerr, herr


def _cmd_gradcheck(args) -> int:
    scene = parse_scene(args.scene)
    if args.samples <= 0:
        print("warning: --samples 0, nothing checked", file=sys.stderr)
        return OK
    rng = np.random.default_rng(args.seed)
    worst: dict[str, float] = {}

    models = {mat.model for _, mat in scene.materials}
    mats = [mat for _, mat in scene.materials]
    for _ in range(args.samples):
        mat = mats[rng.integers(len(mats))]
        if en.NEO_HOOKEAN in models:
            F = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
            while np.linalg.det(F) < 0.3:
                F = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
            g, h = _density_errors(en.neo_hookean_density, F, (mat.mu, mat.lam))
            worst["neo-hookean"] = max(worst.get("neo-hookean", 0), g, h)
        if en.STABLE_NEO_HOOKEAN in models:
            F = rng.standard_normal((3, 3))
            g, h = _density_errors(en.stable_neo_hookean_density, F, (mat.mu, mat.lam))
            worst["stable-neo-hookean"] = max(worst.get("stable-neo-hookean", 0), g, h)
        for m in scene.muscles:
            F = np.eye(3) + 0.5 * rng.standard_normal((3, 3))
            a = rng.uniform(-0.5, 1.5)
            g, h = _density_errors(en.muscle_density, F, (a, m.direction, m.stiffness))
            worst["muscle"] = max(worst.get("muscle", 0), g, h)

    # inertia and damping on a small random point system
    for _ in range(args.samples):
        nv = 3
        masses = rng.uniform(0.5, 2.0, nv)
        dt = rng.uniform(0.01, 0.1)
        ctx = en.IntegratorContext(
            dt=dt, x_prev=rng.standard_normal(3 * nv),
            v_prev=rng.standard_normal(3 * nv), masses=masses,
            scheme=rng.choice(["backward-euler", "crank-nicolson"]),
            alpha=rng.uniform(0.1, 5.0), f_int_prev=rng.standard_normal(3 * nv),
        )
        x = ctx.x_prev + rng.standard_normal(3 * nv) * dt
        for name, term in (("inertia", en.inertia_potential),
                           ("damping", en.damping_potential)):
            ev = term(x, ctx)
            gfd = _fd_gradient(lambda xx: term(xx, ctx).value, x, 1e-6)
            scale = max(np.abs(gfd).max(), 1e-12)
            worst[name] = max(worst.get(name, 0),
                              np.abs(ev.gradient - gfd).max() / scale)

    failed = False
    for name in sorted(worst):
        status = "ok" if worst[name] <= args.tolerance else "FAIL"
        failed |= worst[name] > args.tolerance
        print(f"{name}: max relative error {worst[name]:.3e} [{status}]")
    return CHECK_FAIL if failed else OK


if __name__ == "__main__":
    sys.exit(main())
