"""Line zonotopes for set-based estimation and active fault diagnosis of descriptor systems."""

from .errors import DimensionError, EmptySetError, InfeasibleDesignError, SolverError
from .sets import (
    Interval,
    LineZonotope,
    Strip,
    cartesian_product,
    generalized_intersection,
    interval_hull,
    is_empty,
    linear_map,
    lz_box,
    lz_constrained_zonotope,
    lz_from_strip,
    lz_realspace,
    lz_singleton,
    lz_zonotope,
    membership,
    minkowski_sum,
    multi_intersection,
    point_kappa,
    project,
    radius,
    set_kappa,
    support,
    translate,
)
from .reduction import (
    ReductionLimits,
    compress_lines,
    eliminate_all_lines,
    eliminate_constraints,
    reduce,
    reduce_generators,
)
from .solver import LpProblem, LpSolution, LpStatus, MilpProblem, solve_lp, solve_lp_many, solve_milp
from .estimator import DescriptorModel, estimate_run, feasible_sets, predict, simulate, update
from .afd import (
    FaultModelSet,
    check_separation,
    design_input,
    output_tubes,
    pairwise_kappa,
    verify_diagnosis,
)

__version__ = "0.1.0"
