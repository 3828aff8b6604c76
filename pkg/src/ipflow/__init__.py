"""Weighted path-following interior point solver with flow frontends."""

from .barrier import BarrierDerivs, BarrierKind, Barrier1D, CoordinateBarriers, eval_barrier, make_barrier
from .centering import (
    CentralityReading,
    PathPoint,
    centering_inexact,
    centrality,
    centrality_exact,
    chasing_zero_move,
    eta_star,
    make_point,
    mixed_norm,
    newton_step,
    potential_phi,
    project_onto_ball_box,
    project_onto_mixed_norm_ball,
)
from .linalg import (
    Backend,
    NormalEquations,
    SolveReceipt,
    SparseMat,
    apply_pxw,
    leverage_scores_approx,
    leverage_scores_exact,
    solve_normal,
)
from .pathfollow import (
    BoxedLP,
    PaperTrace,
    SolveReport,
    SolverParams,
    WidthU,
    infeasibility,
    lp_solve,
    path_following,
    progress_certificate,
    repair_feasibility,
    width_u,
)
from .weights import (
    WeightParams,
    compute_initial_weight,
    compute_weight,
    fhat_grad,
    fhat_value,
    weight_function_oracle,
    weight_params,
)

__version__ = "0.1.0"
