"""High-order space-time finite elements for dynamic optimal transport,
mean-field planning, and mean-field games on structured rectangular meshes."""

__version__ = "0.1.0"

from .alg2 import Alg2State, ProblemSpec, RunResult, convergence_study, metrics, run
from .costs import CostModel, TerminalCost
from .mesh import build_spacetime_mesh, build_spatial_mesh
from .quadrature import gauss_legendre, map_rule, tensor_rule
from .spaces import build_m_space, build_v_space, build_w_space

__all__ = [
    "Alg2State",
    "CostModel",
    "ProblemSpec",
    "RunResult",
    "TerminalCost",
    "build_m_space",
    "build_spacetime_mesh",
    "build_spatial_mesh",
    "build_v_space",
    "build_w_space",
    "convergence_study",
    "gauss_legendre",
    "map_rule",
    "metrics",
    "run",
    "tensor_rule",
]
