"""Constrained energy minimization: SQP outer loop over a convex QP.

The QP subsolver is a primal-dual active-set iteration on the sparse
KKT system: the working set is refined until the equality-constrained
solve satisfies primal feasibility and dual non-negativity, which gives
KKT residuals at direct-solver accuracy.  Unconstrained problems take a
plain Newton step through the same factorization machinery.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constraints import (ConstraintSet, ContactPlane, PinConstraint,
                          detect_active, linearize, min_gap, plane_gaps)

log = logging.getLogger(__name__)

PENETRATION_TOL = 1e-6  # meters; post-step safeguard threshold


class SolverError(RuntimeError):
    """Non-recoverable failure of a solve (line search, NaN energy, QP)."""


class QpError(SolverError):
    """QP subsolver failed; carries best-effort iterate and residuals."""

    def __init__(self, message, dx=None, residuals=None):
        super().__init__(message)
        self.dx = dx
        self.residuals = residuals


def project_psd(H: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Clamp the eigenvalues of a symmetric matrix to >= floor."""
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    out = (V * np.maximum(w, floor)) @ V.T
    return 0.5 * (out + out.T)


def project_psd_batch(H: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """project_psd over a stack of symmetric blocks (m, K, K)."""
    w, V = np.linalg.eigh(0.5 * (H + np.swapaxes(H, -1, -2)))
    out = np.einsum("...ik,...k,...jk->...ij", V, np.maximum(w, floor), V)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def project_psd_lazy(H: np.ndarray) -> np.ndarray:
    """project_psd_batch with a Cholesky pre-screen (floor 0).

    Blocks that already factor (after a relative jitter of 1e-12) are
    returned untouched; only indefinite ones pay for the
    eigendecomposition.  Near rest states almost every elastic block is
    PSD, so this is the common fast path.
    """
    K = H.shape[-1]
    eye = np.eye(K)
    bad = []
    for i in range(H.shape[0]):
        jitter = 1e-12 * max(float(np.abs(np.diagonal(H[i])).max()), 1e-300)
        try:
            np.linalg.cholesky(0.5 * (H[i] + H[i].T) + jitter * eye)
        except np.linalg.LinAlgError:
            bad.append(i)
    if not bad:
        return H
    out = H.copy()
    out[bad] = project_psd_batch(H[bad])
    return out


@dataclass
class QpProblem:
    """min 1/2 dx'H dx + g'dx  s.t.  J_f dx + f = 0,  J_h dx + h >= 0."""

    H: sp.spmatrix
    g: np.ndarray
    J_f: Optional[sp.spmatrix] = None
    f: Optional[np.ndarray] = None
    J_h: Optional[sp.spmatrix] = None
    h: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.g.shape[0]
        if not isinstance(self.H, np.ndarray):
            self.H = sp.csc_matrix(self.H)
        if self.J_f is None:
            self.J_f = sp.csr_matrix((0, n))
            self.f = np.zeros(0)
        else:
            self.J_f = sp.csr_matrix(self.J_f)
        if self.J_h is None:
            self.J_h = sp.csr_matrix((0, n))
            self.h = np.zeros(0)
        else:
            self.J_h = sp.csr_matrix(self.J_h)


@dataclass
class SolverOptions:
    tol: float = 1e-6  # stopping threshold on ||dx||_inf, meters
    max_iters: int = 100
    step_size: Optional[float] = None  # fixed alpha; None enables line search
    psd_floor: float = 0.0
    qp_tol_primal: float = 1e-8
    qp_tol_dual: float = 1e-8
    qp_tol_comp: float = 1e-8
    qp_max_iters: int = 200
    max_halvings: int = 20
    verbose: bool = False

    def __post_init__(self):
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be > 0 and max_iters >= 1")


@dataclass
class IterationRecord:
    iteration: int
    energy: float
    grad_inf: float
    dx_inf: float
    active_set_size: int
    alpha: float


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    converged: bool
    dx_inf: float
    max_penetration: float
    active_set_size: int
    diagnostics: list[IterationRecord] = field(default_factory=list)
    eq_duals: np.ndarray = None
    ineq_duals: np.ndarray = None
    constraint_set: ConstraintSet = None
    gradient: np.ndarray = None


def qp_kkt_residuals(qp: QpProblem, dx, mu, zeta) -> dict:
    """All four KKT residuals of a candidate QP solution."""
    stat = qp.H @ dx + qp.g
    if qp.f.size:
        stat = stat + qp.J_f.T @ mu
    if qp.h.size:
        stat = stat - qp.J_h.T @ zeta
    s = qp.J_h @ dx + qp.h if qp.h.size else np.zeros(0)
    return {
        "stationarity": float(np.abs(stat).max()) if stat.size else 0.0,
        "eq": float(np.abs(qp.J_f @ dx + qp.f).max()) if qp.f.size else 0.0,
        "ineq": float(max(0.0, -s.min())) if s.size else 0.0,
        "dual": float(max(0.0, -zeta.min())) if zeta.size else 0.0,
        "comp": float(np.abs(zeta * s).max()) if s.size else 0.0,
    }


def _solve_kkt(H, g, J_eq, r_eq):
    """Solve [[H, J'], [J, 0]] [z; y] = [-g; -r].

    Dense H (small systems) goes through LAPACK; sparse H through
    SuperLU.  Constraint rows are rescaled to the magnitude of H's
    diagonal (the dynamics Hessian carries M/dt^2, which dwarfs unit
    constraint rows and would otherwise wreck factorization accuracy).
    """
    n = g.shape[0]
    m = J_eq.shape[0] if J_eq is not None else 0
    dense = isinstance(H, np.ndarray)
    if m == 0:
        if dense:
            return np.linalg.solve(H, -g), np.zeros(0)
        return spla.splu(sp.csc_matrix(H)).solve(-g), np.zeros(0)

    c = max(1.0, float(np.abs(H.diagonal() if not dense else np.diagonal(H)).max()))
    rhs = np.concatenate([-g, -c * r_eq])
    if dense:
        J = c * (J_eq.toarray() if sp.issparse(J_eq) else np.asarray(J_eq))
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        K[:n, n:] = J.T
        K[n:, :n] = J
        try:
            z = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            K[n:, n:] = -1e-12 * c * np.eye(m)
            z = np.linalg.solve(K, rhs)
        return z[:n], c * z[n:]

    Jc = c * J_eq
    K = sp.bmat([[H, Jc.T], [Jc, None]], format="csc")
    try:
        z = spla.splu(K).solve(rhs)
    except RuntimeError:
        # Singular working set: tiny dual regularization, verified later
        # against the unregularized residuals.
        reg = sp.bmat([[H, Jc.T], [Jc, -1e-12 * c * sp.identity(m)]], format="csc")
        z = spla.splu(reg).solve(rhs)
    return z[:n], c * z[n:]


def solve_qp(qp: QpProblem, opts: SolverOptions = SolverOptions(), warm=None):
    """Solve the convex QP; returns (dx, equality duals, inequality duals).

    Active-set refinement: inequality rows in the working set are solved
    as equalities; rows leave on negative duals and join on primal
    violation.  A visited-set guard falls back to single-index updates
    if the working set ever repeats.  `warm` optionally seeds the
    working set (boolean mask over inequality rows).
    """
    m = qp.h.shape[0]
    p = qp.f.shape[0]
    active = np.zeros(m, dtype=bool) if warm is None else np.asarray(warm, bool).copy()
    active[qp.h < 0] = True  # violated at dx = 0

    seen = set()
    best = None
    for _ in range(opts.qp_max_iters):
        key = active.tobytes()
        cautious = key in seen
        seen.add(key)

        idx = np.nonzero(active)[0]
        if p or idx.size:
            J = sp.vstack([qp.J_f, qp.J_h[idx]], format="csr")
            r = np.concatenate([qp.f, qp.h[idx]])
            dx, y = _solve_kkt(qp.H, qp.g, J, r)
            mu, zeta_a = y[:p], -y[p:]
        else:
            dx, _ = _solve_kkt(qp.H, qp.g, None, None)
            mu, zeta_a = np.zeros(0), np.zeros(0)

        zeta = np.zeros(m)
        zeta[idx] = zeta_a
        s = qp.J_h @ dx + qp.h if m else np.zeros(0)
        best = (dx, mu, zeta)

        drop = active & (zeta < -1e-12 * (1.0 + np.abs(zeta).max(initial=0.0)))
        join = ~active & (s < -0.1 * opts.qp_tol_primal)
        if not drop.any() and not join.any():
            res = qp_kkt_residuals(qp, dx, mu, zeta)
            # tolerances scale with the problem's own magnitudes so huge
            # M/dt^2 systems are judged at their native precision
            g_scale = 1.0 + np.abs(qp.g).max(initial=0.0)
            z_scale = 1.0 + max(np.abs(zeta).max(initial=0.0),
                                np.abs(mu).max(initial=0.0))
            h_scale = 1.0 + np.abs(qp.h).max(initial=0.0)
            ok = (res["stationarity"] <= opts.qp_tol_dual * g_scale
                  and res["eq"] <= opts.qp_tol_primal * h_scale
                  and res["ineq"] <= opts.qp_tol_primal * h_scale
                  and res["dual"] <= opts.qp_tol_dual * z_scale
                  and res["comp"] <= opts.qp_tol_comp * z_scale * h_scale)
            if not ok:
                raise QpError(f"QP residuals out of tolerance: {res}", dx, res)
            return dx, mu, zeta

        if cautious:
            # Anti-cycling: change exactly one index per pass.
            new = active.copy()
            if join.any():
                worst = np.nonzero(join)[0][np.argmin(s[join])]
                new[worst] = True
            else:
                worst = np.nonzero(drop)[0][np.argmin(zeta[drop])]
                new[worst] = False
            active = new
        else:
            active = (active & ~drop) | join

    res = qp_kkt_residuals(qp, *best) if best else None
    raise QpError("QP active-set iteration limit reached (constraints may be "
                  f"infeasible); best residuals: {res}", best[0] if best else None, res)


def _infeasibility(pins, planes, x) -> float:
    if not pins and not planes:
        return 0.0
    total = 0.0
    x3 = x.reshape(-1, 3)
    for pin in pins:
        total += float(np.abs(x3[pin.vertex] - pin.target).sum())
    for plane in planes:
        g = plane_gaps(x, plane)
        total += float(-g[g < 0].sum())
    return total


def _merit(energy_fn, pins, planes, x, rho, e=None):
    """phi = E + rho * (|pin residual|_1 + |penetration|_1); None if invalid."""
    from .energy import InversionError  # local import to avoid a cycle

    if e is None:
        try:
            e = energy_fn(x, False)[0]
        except InversionError:
            return None
    if not np.isfinite(e):
        return None
    return e + rho * _infeasibility(pins, planes, x)


def sqp_minimize(energy_fn: Callable, x0: np.ndarray, opts: SolverOptions = SolverOptions(),
                 pins: Sequence[PinConstraint] = (), planes: Sequence[ContactPlane] = ()) -> SolveResult:
    """Minimize an assembled energy subject to pins and contact planes.

    `energy_fn(x, need_hessian)` returns (E, g, H) with H already
    PSD-assembled (H may be None when not requested).  Contact
    activation is re-detected each iteration; vertices found penetrated
    after an accepted step are force-activated and the step re-solved.
    """
    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise SolverError("initial guess contains non-finite values")
    e, g, H = energy_fn(x, True)
    if not np.isfinite(e):
        raise SolverError("energy is not finite at the initial guess")

    forced: set = set()
    diagnostics = []
    iterations = 0
    constrained = bool(pins) or bool(planes)
    dx_inf = np.inf
    mu = zeta = np.zeros(0)
    cs = None
    last_active: set = set()

    for k in range(opts.max_iters + 1):
        if constrained:
            pairs = detect_active(x, planes, forced)
            cs = linearize(pins, pairs, planes, x)
        if constrained and (cs.num_eq or cs.num_ineq):
            qp = QpProblem(H, g, cs.J_f, cs.f, cs.J_h, cs.h)
            warm = np.array([pair in last_active for pair in cs.pairs], dtype=bool)
            dx, mu, zeta = solve_qp(qp, opts, warm=warm)
            last_active = {cs.pairs[i] for i in np.nonzero(zeta > 0)[0]}
        else:
            dx, _ = _solve_kkt(H, g, None, None)
            mu, zeta = np.zeros(0), np.zeros(0)
        dx_inf = float(np.abs(dx).max(initial=0.0))

        if dx_inf < opts.tol:
            viol = _penetrating_pairs(x, planes)
            if viol - forced - set(cs.pairs if cs else ()):
                forced |= viol
                continue
            break
        if k == opts.max_iters:
            break

        if opts.step_size is not None:
            alpha = opts.step_size
            x_new = x + alpha * dx
        else:
            rho = 10.0 * (1.0 + max(np.abs(mu).max(initial=0.0), zeta.max(initial=0.0)))
            phi0 = _merit(energy_fn, pins, planes, x, rho, e=e)
            alpha = 1.0
            x_new = None
            for _ in range(opts.max_halvings + 1):
                cand = x + alpha * dx
                phi = _merit(energy_fn, pins, planes, cand, rho)
                if phi is not None and phi <= phi0 + 1e-12 * (1.0 + abs(phi0)):
                    x_new = cand
                    break
                alpha *= 0.5
            if x_new is None:
                raise SolverError(f"line search failed at iteration {k}")

        # Post-step safeguard: fast approaches may overshoot the
        # linearized gap; re-solve with those pairs held active.
        viol = _penetrating_pairs(x_new, planes)
        new_viol = viol - forced - set(cs.pairs if cs else ())
        if new_viol:
            forced |= new_viol
            continue

        x = x_new
        iterations += 1
        e, g, H = energy_fn(x, True)
        diagnostics.append(IterationRecord(iterations, e, float(np.abs(g).max()),
                                           dx_inf, cs.num_ineq if cs else 0, alpha))
        if opts.verbose:
            r = diagnostics[-1]
            log.info("iter %d: E=%.6e |g|=%.3e |dx|=%.3e active=%d alpha=%.3g",
                     r.iteration, r.energy, r.grad_inf, r.dx_inf,
                     r.active_set_size, r.alpha)

    pen = max(0.0, -min_gap(x, planes)) if planes else 0.0
    return SolveResult(
        x=x, iterations=iterations, converged=dx_inf < opts.tol, dx_inf=dx_inf,
        max_penetration=pen, active_set_size=(cs.num_ineq if cs else 0),
        diagnostics=diagnostics, eq_duals=mu, ineq_duals=zeta,
        constraint_set=cs, gradient=g,
    )


def _penetrating_pairs(x: np.ndarray, planes: Sequence[ContactPlane]) -> set:
    out = set()
    for pi, plane in enumerate(planes):
        for v in np.nonzero(plane_gaps(x, plane) < -PENETRATION_TOL)[0]:
            out.add((int(v), pi))
    return out


def kkt_audit(result: SolveResult, planes: Sequence[ContactPlane] = ()) -> dict:
    """Nonlinear KKT residuals at a converged solve (test utility)."""
    cs, g = result.constraint_set, result.gradient
    stat = g.copy()
    if cs is not None and cs.num_eq:
        stat = stat + cs.J_f.T @ result.eq_duals
    if cs is not None and cs.num_ineq:
        stat = stat - cs.J_h.T @ result.ineq_duals
    gaps = [plane_gaps(result.x, p) for p in planes]
    worst_gap = min((float(ga.min()) for ga in gaps), default=np.inf)
    comp = 0.0
    if cs is not None and cs.num_ineq:
        comp = float(np.abs(result.ineq_duals * cs.h).max())
    return {
        "stationarity": float(np.abs(stat).max()),
        "eq": float(np.abs(cs.f).max()) if cs is not None and cs.num_eq else 0.0,
        "ineq": max(0.0, -worst_gap),
        "dual": float(max(0.0, -result.ineq_duals.min())) if result.ineq_duals.size else 0.0,
        "comp": comp,
    }
