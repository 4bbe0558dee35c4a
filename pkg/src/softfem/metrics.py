"""Trajectory comparison metrics: average marker distance and mean
Chamfer distance over point-cloud series."""
from __future__ import annotations

import numpy as np


def marker_error(sim, ref) -> float:
    """Mean Euclidean marker distance over trajectories x timesteps x markers.

    Inputs are arrays of shape (R, T, N, 3) (leading axes may be
    collapsed as long as both sides match).
    """
    sim = np.asarray(sim, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if sim.shape != ref.shape:
        raise ValueError(f"marker arrays disagree: {sim.shape} vs {ref.shape}")
    if sim.shape[-1] != 3:
        raise ValueError("marker arrays must end in 3-vectors")
    d = np.linalg.norm(sim - ref, axis=-1)
    return float(d.mean())


def _nn_sq_brute(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Squared distance from each p to its nearest q (first index on ties)."""
    d2 = np.sum((P[:, None, :] - Q[None, :, :]) ** 2, axis=-1)
    return d2[np.arange(P.shape[0]), np.argmin(d2, axis=1)]


def _nn_sq_grid(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Grid-accelerated nearest neighbor; matches brute force exactly.

    Candidates are gathered from expanding cell rings and evaluated with
    the same arithmetic as the brute-force path; ties (equal squared
    distance) resolve to the smaller index, exactly as np.argmin does.
    """
    nq = Q.shape[0]
    lo = np.minimum(P.min(axis=0), Q.min(axis=0))
    span = float((np.maximum(P.max(axis=0), Q.max(axis=0)) - lo).max())
    if nq < 64 or span == 0.0:
        return _nn_sq_brute(P, Q)
    cells = max(1, int(np.ceil(nq ** (1 / 3))))
    cell = span / cells
    buckets: dict[tuple, list] = {}
    for i, k in enumerate(map(tuple, np.floor((Q - lo) / cell).astype(np.int64))):
        buckets.setdefault(k, []).append(i)

    out = np.empty(P.shape[0])
    for ip, point in enumerate(P):
        ck = np.floor((point - lo) / cell).astype(np.int64)
        best_d2, best_i = np.inf, -1
        ring = 0
        while True:
            cand = []
            for dx in range(-ring, ring + 1):
                for dy in range(-ring, ring + 1):
                    for dz in range(-ring, ring + 1):
                        if max(abs(dx), abs(dy), abs(dz)) != ring:
                            continue
                        cand.extend(buckets.get((ck[0] + dx, ck[1] + dy, ck[2] + dz), ()))
            if cand:
                cand.sort()
                d2 = np.sum((Q[cand] - point) ** 2, axis=1)
                j = int(np.argmin(d2))
                if d2[j] < best_d2 or (d2[j] == best_d2 and cand[j] < best_i):
                    best_d2, best_i = float(d2[j]), cand[j]
            # Cells in ring r+1 are at least ring*cell away, so a strictly
            # closer hit is final; on exact ties one more ring is scanned.
            if best_i >= 0 and best_d2 < (ring * cell) ** 2:
                break
            ring += 1
        out[ip] = best_d2
    return out


def chamfer_distance(P, Q, accelerated: bool = False) -> float:
    """Symmetric mean-of-squared nearest-neighbor distances (m^2)."""
    P = np.asarray(P, dtype=float).reshape(-1, 3)
    Q = np.asarray(Q, dtype=float).reshape(-1, 3)
    if P.shape[0] == 0 or Q.shape[0] == 0:
        raise ValueError("point clouds must be non-empty")
    nn = _nn_sq_grid if accelerated else _nn_sq_brute
    return float(nn(P, Q).mean() + nn(Q, P).mean())


def chamfer_error(series, accelerated: bool = False) -> float:
    """Mean over (trajectory, timestep) of sqrt(Chamfer distance).

    `series` is an iterable of (P, Q) cloud pairs, flattened over
    trajectories and timesteps.
    """
    scores = [np.sqrt(chamfer_distance(P, Q, accelerated)) for P, Q in series]
    if not scores:
        raise ValueError("empty point-cloud series")
    return float(np.mean(scores))
