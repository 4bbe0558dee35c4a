"""Leg-jump control optimization over the engine's objective command."""
from __future__ import annotations

import os
import subprocess

from .plots import plot_actuation, plot_min_height_comparison
from .search import Param, SearchSpace, random_search, write_results_csv

LEG_SPACE_PARAMS = (
    Param("a_v", 0.0, 2.0),
    Param("a_d", 0.0, 2.0),
    Param("t_v", 0.1, 0.9),
    Param("t_d", 0.1, 0.9),
)
PASSIVE = {"a_v": 0.0, "a_d": 0.0, "t_v": 0.5, "t_d": 0.5}
LEG_DURATION = 1.5


def objective_template(engine: str, scene_path, out_traj=None) -> list[str]:
    cmd = [engine, "objective", "--scene", str(scene_path),
           "--params", "{a_v}", "{a_d}", "{t_v}", "{t_d}"]
    if out_traj is not None:
        cmd += ["--out", str(out_traj)]
    return cmd


def evaluate_params(engine, scene_path, params: dict, out_traj=None) -> float:
    from .search import run_trial

    rec = run_trial(0, objective_template(engine, scene_path, out_traj), params,
                    timeout=1800.0)
    if not rec.ok:
        raise RuntimeError(f"objective evaluation failed: {rec.error}")
    return rec.objective


def leg_optimize(scene_path, budget: int, seed: int, out_dir,
                 engine: str = "softfem", workers: int = 4,
                 refine_passes: int = 2, params=LEG_SPACE_PARAMS):
    """Maximize the jump objective; writes CSV, plots and trajectories.

    Returns (best TrialRecord, records, summary dict).  `params` may
    restrict or pin the search space (degenerate ranges are allowed).
    """
    os.makedirs(out_dir, exist_ok=True)
    space = SearchSpace(params, budget=budget, seed=seed)
    best, records = random_search(space, objective_template(engine, scene_path),
                                  mode="max", workers=workers,
                                  refine_passes=refine_passes)
    write_results_csv(os.path.join(out_dir, "leg_trials.csv"), space, records)
    if best is None:
        return None, records, {}

    passive_traj = os.path.join(out_dir, "leg_passive.jsonl")
    best_traj = os.path.join(out_dir, "leg_best.jsonl")
    passive_obj = evaluate_params(engine, scene_path, PASSIVE, passive_traj)
    best_obj = evaluate_params(engine, scene_path, best.params, best_traj)

    plot_actuation(best.params, LEG_DURATION,
                   os.path.join(out_dir, "leg_actuation.png"))
    plot_min_height_comparison(
        {"passive": passive_traj, f"optimized ({best_obj:.3f} m)": best_traj},
        os.path.join(out_dir, "leg_min_height.png"))

    summary = {
        "best_params": best.params,
        "best_objective": best_obj,
        "passive_objective": passive_obj,
        "margin": best_obj - passive_obj,
        "trials": len(records),
    }
    return best, records, summary
