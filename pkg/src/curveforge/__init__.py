"""Numerical workbench for prescribing scalar curvature on warped tori.

The deformation ``K = e^{2u} g + e^{-2 m u} h`` of a product metric keeps the
volume form fixed, and prescribing its scalar curvature turns into a
quasilinear wave equation for ``u``.  The package holds the curvature
formulas and their finite-difference oracle, a Galerkin solver for the
linear equation, the Picard iteration for the nonlinear one and the energy
diagnostics that go with it.
"""
from .curvature import (
    DeformationField,
    MetricError,
    ProductManifoldSpec,
    assemble_deformed_metric,
    christoffel_closed_form,
    christoffel_fd,
    partial_traces_fd,
    partial_traces_formula,
    ricci_fd,
    scalar_curvature_fd,
    scalar_curvature_formula,
)
from .energy import (
    EnergyTrace,
    energy_components,
    energy_trace,
    gronwall_check,
    norm_energy_bridge,
    total_energy,
)
from .expressions import ExpressionError, compile_expression
from .fieldio import read_field, write_field
from .galerkin import (
    ConvergenceError,
    GalerkinBasis,
    LinearCoefficients,
    StabilityError,
    solve_galerkin,
    solve_linear,
)
from .norms import sobolev_norm
from .picard import (
    NonlinearSolution,
    PicardConfig,
    PicardDivergence,
    picard_solve,
    prescribed_curvature,
    residual,
    small_data_solve,
    uniqueness_probe,
)
from .torus import GridField, SpaceTimeField, TorusGrid

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
