"""Generalized Lagrangian mean curvature flow in almost Kähler chart geometries."""

from .errors import (
    ChartExitError,
    DegenerateError,
    FdEvaluationError,
    GeometryCheckError,
    ImmersionError,
    LagflowError,
    NonFiniteError,
    SingularMatrixError,
    SpecError,
    VarianceError,
)
from .flow import FlowConfig, FlowResult, MonitorRecord, run, step, velocity_field
from .geometry import (
    ChartGeometry,
    Connection,
    canonical_connection,
    check_connection_class,
    check_structure,
    curvature,
    einstein_report,
    levi_civita_connection,
    ricci_form,
    shift_connection,
)
from .submanifold import (
    ImmersedGrid,
    NodeFrame,
    compute_frames,
    differentiate_immersion,
    gmc_vector_definition,
    gmc_vector_via_form,
    lagrangian_diagnostics,
    node_frame,
)
from .tensor import DenseTensor, FdScheme, contract, fd_derivative, matrix_inverse
from .verify import IdentitySuiteReport, run_suite
from .zoo import GeometrySpec, InitialSubmanifoldSpec, build_geometry, build_initial

__version__ = "0.1.0"

__all__ = [
    "ChartExitError",
    "DegenerateError",
    "FdEvaluationError",
    "GeometryCheckError",
    "ImmersionError",
    "LagflowError",
    "NonFiniteError",
    "SingularMatrixError",
    "SpecError",
    "VarianceError",
    "FlowConfig",
    "FlowResult",
    "MonitorRecord",
    "run",
    "step",
    "velocity_field",
    "ChartGeometry",
    "Connection",
    "canonical_connection",
    "check_connection_class",
    "check_structure",
    "curvature",
    "einstein_report",
    "levi_civita_connection",
    "ricci_form",
    "shift_connection",
    "ImmersedGrid",
    "NodeFrame",
    "compute_frames",
    "differentiate_immersion",
    "gmc_vector_definition",
    "gmc_vector_via_form",
    "lagrangian_diagnostics",
    "node_frame",
    "DenseTensor",
    "FdScheme",
    "contract",
    "fd_derivative",
    "matrix_inverse",
    "IdentitySuiteReport",
    "run_suite",
    "GeometrySpec",
    "InitialSubmanifoldSpec",
    "build_geometry",
    "build_initial",
]

