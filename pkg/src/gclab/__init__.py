"""Periodic homogenization, H-convergence and G-closure experiments for control-dependent elliptic problems."""
from .core import (
    ControlField,
    ControlSpace,
    EllipticityBounds,
    GclabError,
    InvalidInput,
    Microstructure,
    Partition,
    PeriodicGrid,
    RelaxedControl,
    SolverFailure,
    SpdTensor,
    build_partition,
    check_m_lambda,
    refine_control,
)
from .cell import effective_tensor, local_effective_field, solve_corrector
from .nonlinearity import make_nonlinearity, tabulated_nonlinearity

__version__ = "0.1.0"

__all__ = [
    "ControlField",
    "ControlSpace",
    "EllipticityBounds",
    "GclabError",
    "InvalidInput",
    "Microstructure",
    "Partition",
    "PeriodicGrid",
    "RelaxedControl",
    "SolverFailure",
    "SpdTensor",
    "build_partition",
    "check_m_lambda",
    "refine_control",
    "effective_tensor",
    "local_effective_field",
    "solve_corrector",
    "make_nonlinearity",
    "tabulated_nonlinearity",
    "__version__",
]
