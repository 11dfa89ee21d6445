"""Galerkin solver and verification harness for second-order linear
degenerate elliptic operators with rough coefficients."""

from .analysis import (
    InequalityReport,
    check_negativity,
    estimate_global_poincare,
    estimate_global_sobolev,
    estimate_local_poincare,
    verify_max_principle,
    verify_uniqueness_thm5,
)
from .assembly import (
    AssembledForm,
    DiscreteSpace,
    WeakSolution,
    assemble_adjoint,
    assemble_form,
    assemble_gram,
    assemble_rhs,
    build_space,
    check_boundedness,
    check_coercivity,
    data_norm,
    make_solution,
    subunit_derivative,
)
from .fields import (
    MatrixField,
    ScalarExpr,
    SubunitTuple,
    check_subunit,
    estimate_comparability,
    eval_matrix,
)
from .mesh import Mesh, build_interval_mesh, build_rect_mesh
from .problem import ProblemSpec, make_problem, parse_problem_file, parse_problem_text
from .solver import (
    FredholmOutcome,
    find_shift_gamma,
    null_spaces,
    solve_dirichlet,
    solve_neumann,
    solve_shifted,
    stability_report,
)
from .spectral import (
    SpectrumResult,
    compute_spectrum,
    eigenvalue_convergence,
    rayleigh_recursion,
    verify_spectral_claims,
)

__version__ = "0.1.0"
