"""Interior-penalty DG coupled to Galerkin BEM through an impedance mortar for 3D Helmholtz."""

from .bem import BemOperators, BemQuadrature, assemble_lagrange
from .coupling import (ManufacturedProblem, MortarSystem, SolutionTriple, assemble_system,
                       build_problem, build_rhs, consistency_residual, evaluate_T)
from .dg_forms import (DeltaClippedWarning, DeltaRangeError, DGAssembler, FluxParameters, dg_norm,
                       weakened_coercivity_check)
from .linalg_solve import ConvergenceError, SingularSystemError, SolveReport, solve_gmres, solve_lu
from .mesh import Mesh, MeshError, SurfaceMesh, build_cube_mesh, extract_surface
from .reconstruct import apply_P1, apply_P2, build_submesh, reconstruct
from .spaces import DiscreteSpaces
from .verify_harness import (ErrorReport, EOCTable, compute_errors, eoc_table, run_case,
                             run_invariant_suite)

__version__ = "0.1.0"
