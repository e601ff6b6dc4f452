"""Crouzeix-Raviart / Raviart-Thomas toolkit with primal-dual gap error control.

Solves the incompressible Stokes and Navier-Lame problems on 2-D simplicial
meshes, reconstructs equilibrated stresses by Marini-type post-processing,
and certifies errors through primal-dual gap identities that drive an
adaptive refinement loop.
"""

from .adaptive import AdaptiveConfig, IterationRecord, RunReport, eoc, mark_max, run_adaptive
from .duality import (
    AdmissibilityError,
    AdmissiblePair,
    ElasticitySolution,
    ElasticityTensor,
    StokesSolution,
    apriori_identity_check_stokes,
    energies_stokes,
    gap_indicator_elasticity,
    gap_indicator_stokes,
    gap_indicator_stokes_discrete,
    marini_elasticity,
    marini_stokes,
    marini_stokes_inverse,
    oscillation_indicator,
    random_divfree_cr,
    random_divfree_rt,
    strong_convexity_stokes,
)
from .forms import (
    AssemblyError,
    LinearSolveReport,
    SingularSystemError,
    assemble_elasticity,
    assemble_stokes,
    solve_lifting,
    solve_sparse,
)
from .mesh import (
    DIRICHLET,
    INTERIOR,
    NEUMANN,
    MeshError,
    Triangulation,
    build_triangulation,
    element_geometry,
    load_mesh,
    refine_bisection,
    save_mesh,
    side_geometry,
    structured_square_mesh,
)
from .problems import (
    ProblemSpec,
    cook_membrane,
    discretize_elasticity,
    discretize_stokes,
    exact_errors,
    get_problem,
    lshape_stokes,
    manufactured_elasticity,
    taylor_green_stokes,
)
from .spaces import (
    CRField,
    P0Field,
    P1ConformingField,
    RTField,
    broken_divergence,
    broken_gradient,
    broken_sym_gradient,
    cr_interpolate,
    dev,
    jump_eval,
    nodal_average,
    pi0,
    pi_side,
    rt_cellaverage,
    rt_divergence,
    rt_interpolate,
)

__version__ = "0.1.0"
