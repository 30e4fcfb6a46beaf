"""Space-time hybridized discontinuous Galerkin solver.

Scalar advection-diffusion on deforming two dimensional domains,
discretized with tensor-product polynomials on space-time slabs and
facet unknowns that make the element blocks independent.  Slabs are
solved one after another; only the facet system is ever factored.

Modules: ``geometry`` (meshes, slabs, deformation maps), ``spaces``
(bases, quadrature, projections), ``assembly`` (element and facet
operators), ``solver`` (static condensation, slab marching, checkpoints),
``analysis`` (mesh-dependent norms, measured constants, sampled
stability checks), ``harness`` (benchmarks, refinement studies,
verification suites), ``cli`` (command line front end).
"""

from .errors import (
    STHDGError,
    ConfigError,
    EigSolveFailureError,
    MeshFormatError,
    NonPositiveJacobianError,
    SingularLocalBlockError,
    SingularMassError,
    SolveFailureError,
    UnknownProblemError,
    UnsupportedDegreeError,
)
from .geometry import (
    SpatialMesh,
    SpaceTimeSlab,
    build_slab,
    build_slabs,
    read_mesh,
    uniform_grid,
    write_mesh,
    write_vtk,
)
from .problem import ExactSolution, ProblemSpec
from .assembly import SlabBases, assemble_slab, make_slab_bases
from .solver import (
    DiscreteSolution,
    condense,
    load_solution,
    march,
    monolithic_solve,
    resolve_alpha,
    save_solution,
    solve_slab,
)
from .analysis import (
    NormReport,
    check_boundedness,
    check_coercivity,
    check_infsup,
    check_poincare,
    convergence_rates,
    discrete_norms,
    error_norms,
    estimate_trace_constants,
    field_norms,
    least_squares_rate,
    projection_rate_study,
)
from .harness import (
    RunConfig,
    RunResult,
    builtin_problem,
    convergence_study,
    identity_deformation,
    pulse_deformation,
    pulse_exact,
    rotating_beta,
    run,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "STHDGError",
    "ConfigError",
    "EigSolveFailureError",
    "MeshFormatError",
    "NonPositiveJacobianError",
    "SingularLocalBlockError",
    "SingularMassError",
    "SolveFailureError",
    "UnknownProblemError",
    "UnsupportedDegreeError",
    "SpatialMesh",
    "SpaceTimeSlab",
    "build_slab",
    "build_slabs",
    "read_mesh",
    "uniform_grid",
    "write_mesh",
    "write_vtk",
    "ExactSolution",
    "ProblemSpec",
    "SlabBases",
    "assemble_slab",
    "make_slab_bases",
    "DiscreteSolution",
    "condense",
    "load_solution",
    "march",
    "monolithic_solve",
    "resolve_alpha",
    "save_solution",
    "solve_slab",
    "NormReport",
    "check_boundedness",
    "check_coercivity",
    "check_infsup",
    "check_poincare",
    "convergence_rates",
    "discrete_norms",
    "error_norms",
    "estimate_trace_constants",
    "field_norms",
    "least_squares_rate",
    "projection_rate_study",
    "RunConfig",
    "RunResult",
    "builtin_problem",
    "convergence_study",
    "identity_deformation",
    "pulse_deformation",
    "pulse_exact",
    "rotating_beta",
    "run",
    "verify",
    "__version__",
]
