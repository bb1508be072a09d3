"""Gradient-discretisation solvers for pure Neumann diffusion problems and
box-and-zero-mean distributed optimal control."""

from .mesh import (Mesh, MeshError, build_uniform_triangular, diamond_measures,
                   read_mesh, regularity_eta, write_mesh)
from .linalg import LinearSolverError, SparseMatrix, assemble, solve_spd
from .gd import (GradientDiscretisation, coercivity_constant,
                 interpolation_error, limit_conformity_defect,
                 quality_measures)
from .schemes import (build_conforming_p1, build_hmm, build_mass_lumped_ncp1,
                      build_nonconforming_p1, build_scheme)
from .neumann import (DiffusionField, NeumannProblem, assemble_penalty,
                      assemble_stiffness, error_norms, shift_to_average,
                      solve_neumann)
from .control import (ActiveSetNonConvergence, ControlProblem, KKTSolution,
                      active_set_solve, clamp, control_from_adjoint,
                      find_cstar, gamma, in_admissible, kkt_residual,
                      proj_mesh, shift_adjoint_proper)
from .postprocess import (ConvergenceReport, ExactSolution, eoc, error_report,
                          fine_quadrature, interpolant_w_mesh,
                          postprocessed_controls)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
