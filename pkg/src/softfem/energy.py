"""Element-level energy terms and global assembly.

Every term provides value, gradient and Hessian with respect to nodal
positions.  Elastic and muscle energies are evaluated per quadrature
point through the deformation gradient F and chained to nodal
coordinates via the precomputed deformation Hessian dF/dx; inertia,
damping and gravity act directly on the stacked system vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .mesh import MeshModel, RestData, _deformation_hessian
from .solver import project_psd_lazy

NEO_HOOKEAN = "neo-hookean"
STABLE_NEO_HOOKEAN = "stable-neo-hookean"

_I9 = np.eye(9)


class InversionError(RuntimeError):
    """Log-based Neo-Hookean evaluated at det(F) <= 0."""

    def __init__(self, elements):
        self.elements = list(np.atleast_1d(elements))
        super().__init__(f"element inversion (det F <= 0) in elements {self.elements}")


def lame_from_material(young_modulus: float, poisson_ratio: float) -> tuple[float, float]:
    """Standard isotropic conversion (E, nu) -> (mu, lambda)."""
    if young_modulus <= 0:
        raise ValueError("Young's modulus must be positive")
    if not 0 <= poisson_ratio < 0.5:
        raise ValueError("Poisson's ratio must lie in [0, 0.5)")
    mu = young_modulus / (2.0 * (1.0 + poisson_ratio))
    lam = young_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio))
    return mu, lam


@dataclass(frozen=True)
class Material:
    model: str = NEO_HOOKEAN
    young_modulus: float = 1e5  # Pa
    poisson_ratio: float = 0.4
    density: float = 1000.0  # kg/m^3

    def __post_init__(self):
        if self.model not in (NEO_HOOKEAN, STABLE_NEO_HOOKEAN):
            raise ValueError(f"unknown material model {self.model!r}")
        if self.density <= 0:
            raise ValueError("density must be positive")
        lame_from_material(self.young_modulus, self.poisson_ratio)

    @property
    def mu(self) -> float:
        return lame_from_material(self.young_modulus, self.poisson_ratio)[0]

    @property
    def lam(self) -> float:
        return lame_from_material(self.young_modulus, self.poisson_ratio)[1]


@dataclass
class MuscleSpec:
    """Contractile fiber group acting on an element set.

    The energy is k/2 * ||(1 - a) F m||^2 * V per quadrature point; the
    scalar activation a follows a piecewise-constant schedule.
    """

    element_set: str
    stiffness: float
    direction: np.ndarray
    activation: object  # schedule with .value(t)

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("muscle direction must be a unit vector")
        if self.stiffness < 0:
            raise ValueError("muscle stiffness must be non-negative")


@dataclass
class EnergyEval:
    """Value (J), gradient (N) and Hessian (N/m) of one energy term."""

    value: float
    gradient: np.ndarray
    hessian: object = None  # dense ndarray, scipy sparse, or None (zero)


@dataclass
class IntegratorContext:
    """Per-step data for the incremental (time integration) potentials."""

    dt: float
    x_prev: np.ndarray
    v_prev: np.ndarray
    masses: np.ndarray  # per-vertex lumped masses (nv,)
    scheme: Literal["backward-euler", "crank-nicolson"] = "backward-euler"
    alpha: float = 0.0  # mass-proportional damping, 1/s
    f_int_prev: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("backward-euler", "crank-nicolson"):
            raise ValueError(f"unknown integrator scheme {self.scheme!r}")
        n = self.x_prev.shape[0]
        if self.v_prev.shape[0] != n or 3 * self.masses.shape[0] != n:
            raise ValueError("context vector sizes disagree")
        if self.scheme == "crank-nicolson" and self.f_int_prev is None:
            raise ValueError("crank-nicolson requires the previous internal forces")

    @property
    def mass_diag(self) -> np.ndarray:
        return np.repeat(self.masses, 3)


# ---------------------------------------------------------------------------
# Energy densities per unit volume (batched over leading axes of F)
# ---------------------------------------------------------------------------

def neo_hookean_density(F: np.ndarray, mu, lam, need_hessian: bool = True):
    """Log-barrier Neo-Hookean density.

    psi = mu/2 (tr[F^T F] - 3) - mu ln J + lam/2 (ln J)^2

    Returns (psi, dpsi/dF, d2psi/dF2) with F flattened row-major for the
    9x9 Hessian.  Requires det F > 0; the caller maps offending entries
    to element ids.
    """
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    if np.any(J <= 0):
        raise InversionError(np.nonzero(np.atleast_1d(J <= 0).ravel())[0])
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    logJ = np.log(J)
    trC = np.einsum("...ab,...ab->...", F, F)
    psi = 0.5 * mu * (trC - 3.0) - mu * logJ + 0.5 * lam * logJ**2

    FiT = np.swapaxes(np.linalg.inv(F), -1, -2)
    coef = lam * logJ - mu
    P = mu[..., None, None] * F + coef[..., None, None] * FiT
    if not need_hessian:
        return psi, P, None

    lead = F.shape[:-2]
    vecFiT = FiT.reshape(lead + (9,))
    A = mu[..., None, None] * _I9
    A = A + lam[..., None, None] * vecFiT[..., :, None] * vecFiT[..., None, :]
    # d(F^-T)/dF term: -(lam ln J - mu) * FiT[a,d] FiT[c,b]
    T = np.einsum("...ad,...cb->...abcd", FiT, FiT).reshape(lead + (9, 9))
    A = A - coef[..., None, None] * T
    return psi, P, A


def _cofactor(F: np.ndarray) -> np.ndarray:
    """dJ/dF, inversion-safe (columns are cross products of F's columns)."""
    f0, f1, f2 = F[..., :, 0], F[..., :, 1], F[..., :, 2]
    return np.stack([np.cross(f1, f2), np.cross(f2, f0), np.cross(f0, f1)], axis=-1)


def _det_hessian(F: np.ndarray) -> np.ndarray:
    """d2J/dF2 as a 9x9 (row-major flattening); linear in F."""
    lead = F.shape[:-2]
    H = np.zeros(lead + (3, 3, 3, 3))  # indices [a, b, c, d]
    cols = [F[..., :, 0], F[..., :, 1], F[..., :, 2]]

    def skew(v):
        S = np.zeros(lead + (3, 3))
        S[..., 0, 1], S[..., 0, 2] = -v[..., 2], v[..., 1]
        S[..., 1, 0], S[..., 1, 2] = v[..., 2], -v[..., 0]
        S[..., 2, 0], S[..., 2, 1] = -v[..., 1], v[..., 0]
        return S

    # H[a, b, c, d] = d2J / dF_ab dF_cd; block (b, d) over column pairs.
    for (b, d, sgn, col) in (
        (0, 1, -1, 2), (1, 0, +1, 2),
        (0, 2, +1, 1), (2, 0, -1, 1),
        (1, 2, -1, 0), (2, 1, +1, 0),
    ):
        H[..., :, b, :, d] = sgn * skew(cols[col])
    return H.reshape(lead + (9, 9))


def stable_neo_hookean_density(F: np.ndarray, mu, lam, need_hessian: bool = True):
    """Inversion-robust Neo-Hookean density.

    psi = mu_s/2 (I_C - 3) - mu_s/2 ln(I_C + 1) + lam_s/2 (J - a0)^2 - psi0
    with I_C = tr[F^T F], reparameterized Lame constants
    mu_s = 4/3 mu and lam_s = lam + 5/6 mu (matching linear elasticity at
    F = I), a0 = 1 + 3 mu_s / (4 lam_s) so the gradient vanishes at F = I,
    and psi0 chosen so the value vanishes there as well.  Finite for any
    F, including inverted and collapsed elements.
    """
    F = np.asarray(F, dtype=float)
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu_s = 4.0 * mu / 3.0
    lam_s = lam + 5.0 * mu / 6.0
    a0 = 1.0 + 0.75 * mu_s / lam_s
    psi0 = 0.5 * lam_s * (1.0 - a0) ** 2 - 0.5 * mu_s * np.log(4.0)

    J = np.linalg.det(F)
    trC = np.einsum("...ab,...ab->...", F, F)
    C = _cofactor(F)
    psi = 0.5 * mu_s * (trC - 3.0) - 0.5 * mu_s * np.log(trC + 1.0) \
        + 0.5 * lam_s * (J - a0) ** 2 - psi0

    shrink = 1.0 - 1.0 / (trC + 1.0)
    P = (mu_s * shrink)[..., None, None] * F + (lam_s * (J - a0))[..., None, None] * C
    if not need_hessian:
        return psi, P, None

    lead = F.shape[:-2]
    vecF = F.reshape(lead + (9,))
    vecC = C.reshape(lead + (9,))
    A = (mu_s * shrink)[..., None, None] * _I9
    A = A + (2.0 * mu_s / (trC + 1.0) ** 2)[..., None, None] \
        * vecF[..., :, None] * vecF[..., None, :]
    A = A + lam_s[..., None, None] * vecC[..., :, None] * vecC[..., None, :]
    A = A + (lam_s * (J - a0))[..., None, None] * _det_hessian(F)
    return psi, P, A


def muscle_density(F: np.ndarray, a, m: np.ndarray, k, need_hessian: bool = True):
    """Contraction density k/2 ||(1 - a) F m||^2; quadratic in F."""
    F = np.asarray(F, dtype=float)
    m = np.asarray(m, dtype=float)
    c = np.asarray(k, dtype=float) * (1.0 - np.asarray(a, dtype=float)) ** 2
    Fm = F @ m
    psi = 0.5 * c * np.einsum("...a,...a->...", Fm, Fm)
    P = c[..., None, None] * np.einsum("...a,b->...ab", Fm, m)
    if not need_hessian:
        return psi, P, None
    A = c[..., None, None] * np.kron(np.eye(3), np.outer(m, m))
    A = np.broadcast_to(A, F.shape[:-2] + (9, 9)).copy()
    return psi, P, A


# ---------------------------------------------------------------------------
# Element-level wrappers (single quadrature point of weight `volume`)
# ---------------------------------------------------------------------------

def _chain_to_nodes(psi, P, A, volume: float, grads: np.ndarray) -> EnergyEval:
    G = _deformation_hessian(grads)  # (9, 3K)
    grad = volume * (P.reshape(9) @ G)
    hess = None if A is None else volume * (G.T @ A @ G)
    return EnergyEval(float(psi * volume), grad, hess)


def neo_hookean(F, mu, lam, volume, grads) -> EnergyEval:
    psi, P, A = neo_hookean_density(F, mu, lam)
    return _chain_to_nodes(psi, P, A, volume, np.asarray(grads, dtype=float))


def stable_neo_hookean(F, mu, lam, volume, grads) -> EnergyEval:
    psi, P, A = stable_neo_hookean_density(F, mu, lam)
    return _chain_to_nodes(psi, P, A, volume, np.asarray(grads, dtype=float))


def muscle(F, a, m, k, volume, grads) -> EnergyEval:
    psi, P, A = muscle_density(F, a, m, k)
    return _chain_to_nodes(psi, P, A, volume, np.asarray(grads, dtype=float))


# ---------------------------------------------------------------------------
# System-level terms
# ---------------------------------------------------------------------------

def gravity(masses: np.ndarray, g_vec, positions) -> EnergyEval:
    """E = -sum_v m_v g . x_v; constant force field, zero Hessian."""
    g_vec = np.asarray(g_vec, dtype=float)
    x3 = np.asarray(positions, dtype=float).reshape(-1, 3)
    value = -float(masses @ (x3 @ g_vec))
    grad = (-masses[:, None] * g_vec).reshape(-1)
    return EnergyEval(value, grad, None)


def inertia_potential(x: np.ndarray, ctx: IntegratorContext) -> EnergyEval:
    """Quadratic potential whose stationarity reproduces the time scheme.

    Backward Euler: 1/(2 dt^2) ||x - xhat||_M^2 with xhat the inertial
    predictor.  Crank-Nicolson doubles the quadratic weight and carries
    the previous internal forces as a linear term; all other internal
    energies are then halved in assembly.
    """
    md = ctx.mass_diag
    xhat = ctx.x_prev + ctx.dt * ctx.v_prev
    d = x - xhat
    if ctx.scheme == "backward-euler":
        w = 1.0 / ctx.dt**2
        value = 0.5 * w * float(d @ (md * d))
        grad = w * md * d
    else:
        w = 2.0 / ctx.dt**2
        value = 0.5 * w * float(d @ (md * d)) - 0.5 * float(ctx.f_int_prev @ x)
        grad = w * md * d - 0.5 * ctx.f_int_prev
    return EnergyEval(value, grad, sp.diags(w * md))


def damping_potential(x: np.ndarray, ctx: IntegratorContext) -> EnergyEval:
    """Mass-proportional dissipation at implicit velocity (x - x_prev)/dt."""
    if ctx.alpha < 0:
        raise ValueError("damping coefficient must be non-negative")
    md = ctx.mass_diag
    d = x - ctx.x_prev
    w = ctx.alpha / ctx.dt
    value = 0.5 * w * float(d @ (md * d))
    return EnergyEval(value, w * md * d, sp.diags(w * md))


def velocity_update(x_new: np.ndarray, ctx: IntegratorContext) -> np.ndarray:
    d = (x_new - ctx.x_prev) / ctx.dt
    if ctx.scheme == "backward-euler":
        return d
    return 2.0 * d - ctx.v_prev


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

class SystemModel:
    """Assembles element energies into the global (E, g, H) triple.

    Materials are given as (element-id array, Material) regions covering
    all elements; muscle groups reference element ids with a fixed fiber
    direction.  Assembly order is fixed, so results are deterministic.
    """

    def __init__(
        self,
        mesh: MeshModel,
        rest: RestData,
        materials: Sequence[tuple[np.ndarray, Material]],
        muscles: Sequence[tuple[np.ndarray, float, np.ndarray]] = (),
        gravity_vec=(0.0, 0.0, 0.0),
    ):
        self.mesh = mesh
        self.rest = rest
        self.gravity_vec = np.asarray(gravity_vec, dtype=float)

        ne = mesh.num_elements
        self.elem_mu = np.zeros(ne)
        self.elem_lam = np.zeros(ne)
        self.elem_stable = np.zeros(ne, dtype=bool)
        covered = np.zeros(ne, dtype=bool)
        for ids, mat in materials:
            ids = np.asarray(ids, dtype=np.int64)
            if covered[ids].any():
                raise ValueError("material regions overlap")
            covered[ids] = True
            self.elem_mu[ids] = mat.mu
            self.elem_lam[ids] = mat.lam
            self.elem_stable[ids] = mat.model == STABLE_NEO_HOOKEAN
        if not covered.all():
            raise ValueError("material regions do not cover every element")

        self.muscles = [
            (np.asarray(ids, dtype=np.int64), float(k), np.asarray(m, dtype=float))
            for ids, k, m in muscles
        ]

        nt, nh = mesh.num_tets, mesh.num_hexes
        self.tet_dofs = (3 * mesh.tets[:, :, None] + np.arange(3)).reshape(nt, 12)
        self.hex_dofs = (3 * mesh.hexes[:, :, None] + np.arange(3)).reshape(nh, 24)
        self.mass_diag = np.repeat(rest.masses, 3)
        # weight-folded deformation Hessians for the Hessian chain rule
        self._tet_defhess_w = rest.tet_volume[:, None, None, None] \
            * rest.tet_defhess[:, None]
        self._hex_defhess_w = rest.hex_weights[:, :, None, None] * rest.hex_defhess
        # Muscle Hessians are constant in F up to the factor k (1 - a)^2;
        # cache the geometric blocks per group and family.
        self._muscle_blocks = []
        for ids, k, m in self.muscles:
            per_family = {}
            for kind in ("tet", "hex"):
                _, _, defhess, weights, _, offset = self._family(kind)
                ne = defhess.shape[0]
                sel = ids[(ids >= offset) & (ids < offset + ne)] - offset
                if sel.size:
                    unit = np.kron(np.eye(3), np.outer(m, m))
                    per_family[kind] = (sel, self._nodal_hessian(
                        weights[sel], defhess[sel],
                        np.broadcast_to(unit, defhess[sel].shape[:2] + (9, 9))))
            self._muscle_blocks.append(per_family)

    @property
    def num_dof(self) -> int:
        return self.mesh.num_dof

    # -- element family evaluation -------------------------------------

    def _family(self, kind: str):
        mesh, rest = self.mesh, self.rest
        if kind == "tet":
            return (mesh.tets, rest.tet_grads[:, None], rest.tet_defhess[:, None],
                    rest.tet_volume[:, None], self.tet_dofs, 0)
        return (mesh.hexes, rest.hex_grads, rest.hex_defhess,
                rest.hex_weights, self.hex_dofs, mesh.num_tets)

    @staticmethod
    def _def_grads(x_loc, grads):
        # F[e,p] = x_loc[e]^T @ grads[e,p]
        return np.matmul(np.swapaxes(x_loc, -1, -2)[:, None], grads)

    @staticmethod
    def _nodal_gradient(weights, grads, Pk):
        # dE/dx_loc[e,k,d] = sum_p w[e,p] (grads[e,p] @ Pk[e,p]^T)[k,d]
        per_gp = np.matmul(grads, np.swapaxes(Pk, -1, -2))
        return (weights[..., None, None] * per_gp).sum(axis=1)

    @staticmethod
    def _nodal_hessian(weights, defhess, A):
        # H[e] = sum_p w[e,p] G[e,p]^T A[e,p] G[e,p]
        AG = np.matmul(A, defhess)
        per_gp = np.matmul(np.swapaxes(defhess, -1, -2), AG)
        return (weights[..., None, None] * per_gp).sum(axis=1)

    @staticmethod
    def _nodal_hessian_w(defhess, defhess_w, A):
        # As above with the quadrature weight folded into defhess_w.
        return np.matmul(np.swapaxes(defhess_w, -1, -2), np.matmul(A, defhess)).sum(axis=1)

    def _elastic_family(self, kind, x3, need_hessian, out):
        conn, grads, defhess, weights, dofs, offset = self._family(kind)
        if conn.shape[0] == 0:
            return 0.0, None
        x_loc = x3[conn]  # (ne, K, 3)
        F = self._def_grads(x_loc, grads)  # (ne, P, 3, 3)
        ne, P = F.shape[:2]
        mu = self.elem_mu[offset:offset + ne, None]
        lam = self.elem_lam[offset:offset + ne, None]
        stable = self.elem_stable[offset:offset + ne]

        psi = np.zeros((ne, P))
        Pk = np.zeros((ne, P, 3, 3))
        A = np.zeros((ne, P, 9, 9)) if need_hessian else None
        for is_stable, density in ((False, neo_hookean_density),
                                   (True, stable_neo_hookean_density)):
            sel = np.nonzero(stable == is_stable)[0]
            if sel.size == 0:
                continue
            try:
                out_d = density(F[sel], mu[sel], lam[sel], need_hessian)
            except InversionError as exc:
                flat = np.unravel_index(exc.elements, (sel.size, P))[0]
                raise InversionError(np.unique(offset + sel[flat])) from None
            psi[sel], Pk[sel] = out_d[0], out_d[1]
            if need_hessian:
                A[sel] = out_d[2]

        energy = float((weights * psi).sum())
        g_loc = self._nodal_gradient(weights, grads, Pk).reshape(ne, -1)
        np.add.at(out, dofs, g_loc)
        blocks = None
        if need_hessian:
            defhess_w = self._tet_defhess_w if kind == "tet" else self._hex_defhess_w
            blocks = self._nodal_hessian_w(defhess, defhess_w, A)
        return energy, blocks

    def _muscle_family(self, kind, x3, activations, need_hessian):
        """Per-family muscle contributions; returns (E, g_loc adds, blocks)."""
        conn, grads, defhess, weights, dofs, offset = self._family(kind)
        ne = conn.shape[0]
        energy = 0.0
        g = np.zeros((ne, dofs.shape[1]))
        blocks = np.zeros((ne, dofs.shape[1], dofs.shape[1])) if need_hessian else None
        touched = np.zeros(ne, dtype=bool)
        for gi, ((ids, k, m), a) in enumerate(zip(self.muscles, activations)):
            cached = self._muscle_blocks[gi].get(kind)
            if cached is None:
                continue
            sel = cached[0]
            touched[sel] = True
            x_loc = x3[conn[sel]]
            F = self._def_grads(x_loc, grads[sel])
            psi, Pk, _ = muscle_density(F, a, m, k, need_hessian=False)
            w = weights[sel]
            energy += float((w * psi).sum())
            g[sel] += self._nodal_gradient(w, grads[sel], Pk).reshape(sel.size, -1)
            if need_hessian:
                blocks[sel] += (k * (1.0 - a) ** 2) * cached[1]
        sel = np.nonzero(touched)[0]
        return energy, sel, g[sel], (blocks[sel] if need_hessian else None), dofs

    # -- public assembly -------------------------------------------------

    def internal(self, x: np.ndarray, activations: Sequence[float] = (),
                 need_hessian: bool = True, psd_project: bool = True):
        """Elastic + muscle + gravity: returns (E, g, hessian blocks list).

        Blocks are (dofs, dense block) pairs ready for sparse scatter;
        elastic blocks are PSD-projected per element when requested.
        """
        if self.muscles and len(activations) != len(self.muscles):
            raise ValueError("one activation per muscle group required")
        x3 = x.reshape(-1, 3)
        g = np.zeros(self.num_dof)
        energy = 0.0
        blocks = []
        for kind in ("tet", "hex"):
            e_el, h_el = self._elastic_family(kind, x3, need_hessian, g)
            energy += e_el
            dofs = self.tet_dofs if kind == "tet" else self.hex_dofs
            if need_hessian and h_el is not None and h_el.shape[0]:
                if psd_project:
                    h_el = project_psd_lazy(h_el)
                blocks.append((dofs, h_el))
            if self.muscles:
                e_m, sel, g_m, h_m, dofs_all = self._muscle_family(
                    kind, x3, activations, need_hessian)
                energy += e_m
                if sel.size:
                    np.add.at(g, dofs_all[sel], g_m)
                    if need_hessian:
                        blocks.append((dofs_all[sel], h_m))
        grav = gravity(self.rest.masses, self.gravity_vec, x)
        energy += grav.value
        g += grav.gradient
        return energy, g, blocks

    def internal_forces(self, x: np.ndarray, activations: Sequence[float] = ()) -> np.ndarray:
        """f_int = -grad of the internal energies (elastic, muscle, gravity)."""
        _, g, _ = self.internal(x, activations, need_hessian=False)
        return -g

    def scatter(self, blocks, diag: np.ndarray) -> sp.csc_matrix:
        """Sum dense element blocks and a diagonal into one sparse matrix."""
        n = self.num_dof
        rows, cols, vals = [np.arange(n)], [np.arange(n)], [diag]
        for dofs, blk in blocks:
            k = dofs.shape[1]
            rows.append(np.repeat(dofs, k, axis=1).ravel())
            cols.append(np.tile(dofs, (1, k)).ravel())
            vals.append(blk.ravel())
        H = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
        return H.tocsc()

    # Below this size a dense Hessian plus LAPACK beats sparse assembly
    # and SuperLU by a wide margin.
    DENSE_DOF_LIMIT = 600

    def _scatter_dense(self, blocks, diag: np.ndarray) -> np.ndarray:
        n = self.num_dof
        H = np.zeros((n, n))
        H[np.arange(n), np.arange(n)] = diag
        for dofs, blk in blocks:
            k = dofs.shape[1]
            np.add.at(H, (np.repeat(dofs, k, axis=1).ravel(),
                          np.tile(dofs, (1, k)).ravel()), blk.ravel())
        return H

    def incremental(self, x: np.ndarray, ctx: IntegratorContext,
                    activations: Sequence[float] = (), f_ext: Optional[np.ndarray] = None,
                    need_hessian: bool = True, psd_project: bool = True):
        """Full per-step potential: inertia + internal (+damping) - f_ext.x.

        Under Crank-Nicolson all internal terms carry weight 1/2 (the
        other half enters through the cached previous forces inside the
        inertia term); damping stays fully implicit.  `f_ext` must
        already carry any scheme weighting chosen by the caller.
        """
        scale = 0.5 if ctx.scheme == "crank-nicolson" else 1.0
        energy, g, blocks = self.internal(x, activations, need_hessian, psd_project)
        energy *= scale
        g = g * scale
        if scale != 1.0 and need_hessian:
            blocks = [(dofs, scale * blk) for dofs, blk in blocks]

        # Inertia and damping inlined (diagonal quadratic forms).
        md = self.mass_diag
        xhat = ctx.x_prev + ctx.dt * ctx.v_prev
        d = x - xhat
        w = (2.0 if ctx.scheme == "crank-nicolson" else 1.0) / ctx.dt**2
        energy += 0.5 * w * float(d @ (md * d))
        g += w * md * d
        diag = w * md
        if ctx.scheme == "crank-nicolson":
            energy -= 0.5 * float(ctx.f_int_prev @ x)
            g -= 0.5 * ctx.f_int_prev
        if ctx.alpha > 0:
            dv = x - ctx.x_prev
            wd = ctx.alpha / ctx.dt
            energy += 0.5 * wd * float(dv @ (md * dv))
            g += wd * md * dv
            diag = diag + wd * md
        if f_ext is not None:
            energy -= float(f_ext @ x)
            g -= f_ext
        H = None
        if need_hessian:
            H = (self._scatter_dense(blocks, diag)
                 if self.num_dof <= self.DENSE_DOF_LIMIT
                 else self.scatter(blocks, diag))
        return energy, g, H

    def energy_breakdown(self, x: np.ndarray, v: np.ndarray,
                         activations: Sequence[float] = ()) -> dict:
        """Kinetic/elastic/gravity/muscle energies for trajectory records."""
        x3 = x.reshape(-1, 3)
        g = np.zeros(self.num_dof)
        elastic = 0.0
        for kind in ("tet", "hex"):
            e_el, _ = self._elastic_family(kind, x3, False, g)
            elastic += e_el
        musc = 0.0
        if self.muscles:
            for kind in ("tet", "hex"):
                e_m, *_ = self._muscle_family(kind, x3, activations, False)
                musc += e_m
        md = self.mass_diag
        return {
            "kinetic": 0.5 * float(v @ (md * v)),
            "elastic": elastic,
            "gravity": gravity(self.rest.masses, self.gravity_vec, x).value,
            "muscle": musc,
        }
