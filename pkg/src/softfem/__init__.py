"""Finite-element soft-body simulation by constrained energy minimization."""

from .constraints import ContactPlane, PinConstraint, detect_active, linearize, plane_gap
from .energy import (EnergyEval, IntegratorContext, InversionError, Material,
                     MuscleSpec, SystemModel, lame_from_material)
from .mesh import MeshError, MeshModel, RestData, deformation_gradient, load_mesh, \
    rest_precompute, surface_normal
from .metrics import chamfer_error, marker_error
from .solver import (QpProblem, SolverError, SolverOptions, SolveResult,
                     project_psd, solve_qp, sqp_minimize)
from .timestepping import StepControl, SystemState, cfl_dt, simulate

__all__ = [
    "ContactPlane", "PinConstraint", "detect_active", "linearize", "plane_gap",
    "EnergyEval", "IntegratorContext", "InversionError", "Material", "MuscleSpec",
    "SystemModel", "lame_from_material",
    "MeshError", "MeshModel", "RestData", "deformation_gradient", "load_mesh",
    "rest_precompute", "surface_normal",
    "chamfer_error", "marker_error",
    "QpProblem", "SolverError", "SolverOptions", "SolveResult",
    "project_psd", "solve_qp", "sqp_minimize",
    "StepControl", "SystemState", "cfl_dt", "simulate",
]

__version__ = "0.1.0"
