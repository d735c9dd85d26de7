"""Adaptive partition-of-unity Chebyshev approximation on an interval.

Smooth functions are split recursively into overlapping subintervals until a
Chebyshev interpolant of modest degree resolves each piece; the pieces are
blended with infinitely smooth weights. The same tree supports sparse
differentiation matrices and collocation solves of two-point BVPs.
"""

from .bvpsolve import (
    BoundaryCondition,
    BvpProblem,
    SolveReport,
    burgers_exact,
    burgers_problem,
    newton_solve,
    poisson_problem,
    refine_bvp,
    solve_linear,
)
from .chebcore import (
    ChebInterpolant,
    Interval,
    cheb_points,
    chop,
    coeffs_to_vals,
    diff_matrix,
    fit_adaptive,
    vals_to_coeffs,
)
from .cli import parse_expr
from .puops import assemble, collect_point_sets, operator_matrices, sparsity_ratio
from .putree import PuNode, PuTree, evaluate, evaluate_deriv, implicit_leaf_weights, refine, total_nodes
from .puweights import WeightFn, make_weight_pair, weight_deriv_maxnorm

__all__ = [
    "BoundaryCondition",
    "BvpProblem",
    "ChebInterpolant",
    "Interval",
    "PuNode",
    "PuTree",
    "SolveReport",
    "WeightFn",
    "assemble",
    "burgers_exact",
    "burgers_problem",
    "cheb_points",
    "chop",
    "coeffs_to_vals",
    "collect_point_sets",
    "diff_matrix",
    "evaluate",
    "evaluate_deriv",
    "fit_adaptive",
    "implicit_leaf_weights",
    "make_weight_pair",
    "newton_solve",
    "operator_matrices",
    "parse_expr",
    "poisson_problem",
    "refine",
    "refine_bvp",
    "solve_linear",
    "sparsity_ratio",
    "total_nodes",
    "vals_to_coeffs",
    "weight_deriv_maxnorm",
]
