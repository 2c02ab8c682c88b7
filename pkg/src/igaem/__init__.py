"""Isogeometric spline solvers for electromagnetic cavity eigenproblems,
2d magnetostatics, and control-point shape optimization."""

from .errors import (
    IgaError,
    PointLocationError,
    SingularMappingError,
    SolverError,
    ValidationError,
)
from .splines import (
    BasisValues,
    KnotVector,
    TensorBasisSpec,
    eval_bspline,
    eval_nurbs,
    eval_tensor,
    find_span,
    make_open_knots,
    refine_knots,
)
from .geometry import (
    Interface,
    JacobianSample,
    MultiPatch,
    Patch,
    displace_controls,
    eval_jacobian,
    eval_map,
    load_geometry,
    make_conic,
    pushforward,
    refine_patch,
    save_geometry,
    unit_cube,
    unit_square,
)
from .spaces import (
    DiscreteSpace,
    MultiPatchSpace,
    boundary_dofs,
    couple_scalar_multipatch,
    discrete_diff,
    make_space,
)
from .assembly import (
    QuadratureRule,
    apply_dirichlet,
    op_curlu_curlv,
    op_f_v,
    op_gradu_gradv,
    op_u_v,
)
from .solve import (
    EigenResult,
    PhysicalConstants,
    Solution,
    maxwell_eigs_2d,
    maxwell_eigs_3d,
    solve_eigs,
    solve_poisson,
)
from .postprocess import (
    FieldSampler,
    MultipoleSet,
    field_flatness,
    gradient_metrics,
    multipole_coeffs,
    quadrupole_gradient,
    sample_field,
)
from .optimize import (
    DesignVector,
    Objective,
    fd_gradient,
    goal_stern_gerlach,
    minimize_bounded,
    worst_case_direct,
    worst_case_linear,
)

__version__ = "0.1.0"
