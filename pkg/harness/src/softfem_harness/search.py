"""Seeded random search with coordinate-wise refinement over a CLI objective.

The engine is driven purely through subprocess calls; a trial's command
is rendered from a template with `{name}` placeholders for parameters.
Trial sequences are a pure function of (seed, space), so runs with the
same seed evaluate identical parameter sequences regardless of worker
count or completion order.
"""
from __future__ import annotations

import csv
import math
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Param:
    name: str
    low: float
    high: float
    scale: str = "linear"  # or "log"

    def __post_init__(self):
        if not self.high >= self.low:
            raise ValueError(f"{self.name}: empty range")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"{self.name}: unknown scale {self.scale!r}")
        if self.scale == "log" and self.low <= 0:
            raise ValueError(f"{self.name}: log scale needs positive bounds")

    def from_unit(self, u: float) -> float:
        if self.scale == "log":
            return math.exp(math.log(self.low)
                            + u * (math.log(self.high) - math.log(self.low)))
        return self.low + u * (self.high - self.low)

    def to_unit(self, value: float) -> float:
        if self.high == self.low:
            return 0.0
        if self.scale == "log":
            return (math.log(value) - math.log(self.low)) \
                / (math.log(self.high) - math.log(self.low))
        return (value - self.low) / (self.high - self.low)


@dataclass(frozen=True)
class SearchSpace:
    params: tuple
    budget: int
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        object.__setattr__(self, "params", tuple(self.params))

    def sample_sequence(self) -> list[dict]:
        """The deterministic trial sequence for this (seed, space)."""
        rng = np.random.default_rng(self.seed)
        out = []
        for _ in range(self.budget):
            u = rng.uniform(size=len(self.params))
            out.append({p.name: p.from_unit(ui) for p, ui in zip(self.params, u)})
        return out


@dataclass
class TrialRecord:
    index: int
    params: dict
    objective: float | None
    error: str | None = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.objective is not None and math.isfinite(self.objective)


def render_command(template, params: dict) -> list[str]:
    values = {k: repr(float(v)) for k, v in params.items()}
    return [arg.format(**values) if "{" in arg else arg for arg in template]


def run_trial(index: int, template, params: dict, timeout: float) -> TrialRecord:
    cmd = render_command(template, params)
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    except (OSError, subprocess.TimeoutExpired) as exc:
        return TrialRecord(index, params, None, str(exc),
                           time.perf_counter() - t0)
    wall = time.perf_counter() - t0
    if proc.returncode != 0:
        return TrialRecord(index, params, None,
                           f"exit {proc.returncode}: {proc.stderr.strip()[:200]}",
                           wall)
    try:
        value = float(proc.stdout.strip().splitlines()[-1])
    except (ValueError, IndexError):
        return TrialRecord(index, params, None,
                           f"unparseable output: {proc.stdout[:100]!r}", wall)
    return TrialRecord(index, params, value, None, wall)


def random_search(space: SearchSpace, command_template, mode: str = "max",
                  workers: int = 4, refine_passes: int = 2,
                  suggester=None, timeout: float = 1800.0):
    """Evaluate the seeded sample sequence, then refine around the best.

    Returns (best TrialRecord or None, full list of TrialRecords).  The
    refinement is coordinate-wise: each pass tries +-step per parameter
    (in scale units, starting at a quarter of the range) and halves the
    step between passes.  A custom `suggester(space)` may replace the
    uniform sampler; it must be deterministic to keep runs reproducible.
    """
    if mode not in ("min", "max"):
        raise ValueError("mode must be 'min' or 'max'")
    better = (lambda a, b: a > b) if mode == "max" else (lambda a, b: a < b)

    sequence = list(suggester(space)) if suggester else space.sample_sequence()
    records: list[TrialRecord] = [None] * len(sequence)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(run_trial, i, command_template, p, timeout)
                   for i, p in enumerate(sequence)]
        for i, fut in enumerate(futures):
            records[i] = fut.result()

    best = None
    for rec in records:
        if rec.ok and (best is None or better(rec.objective, best.objective)):
            best = rec
    if best is None:
        return None, records

    # coordinate-wise halving refinement (serial, deterministic)
    incumbent = dict(best.params)
    incumbent_val = best.objective
    step = 0.25
    index = len(records)
    for _ in range(refine_passes):
        for p in space.params:
            for sign in (+1.0, -1.0):
                u = np.clip(p.to_unit(incumbent[p.name]) + sign * step, 0.0, 1.0)
                cand = dict(incumbent)
                cand[p.name] = p.from_unit(float(u))
                rec = run_trial(index, command_template, cand, timeout)
                index += 1
                records.append(rec)
                if rec.ok and better(rec.objective, incumbent_val):
                    incumbent, incumbent_val = dict(cand), rec.objective
                    best = rec
        step *= 0.5
    return best, records


def write_results_csv(path, space: SearchSpace, records) -> None:
    names = [p.name for p in space.params]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", *names, "objective", "status", "wall_time_s"])
        for rec in records:
            writer.writerow([
                rec.index,
                *[f"{rec.params[n]:.10g}" for n in names],
                "" if rec.objective is None else f"{rec.objective:.10g}",
                "ok" if rec.ok else (rec.error or "failed"),
                f"{rec.wall_time:.3f}",
            ])
