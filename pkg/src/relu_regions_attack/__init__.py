"""Minimum-norm adversarial perturbations for fully connected ReLU classifiers.

The package characterizes each linear region of a ReLU network as a polytope,
solves a convex QP for the closest adversarial point within a region, and
searches regions with a randomized working-set scheme warm-started by
DeepFool. A brute-force activation-pattern oracle provides exact optima on
tiny networks for verification.
"""

from .attacks import (
    AttackConfig,
    AttackResult,
    AttackState,
    RegionSolution,
    TraceEntry,
    boundary_refine,
    deepfool,
    fallback_start,
    region_subproblem,
    rlr_qp,
    sample_ball,
)
from .data import DataFormatError, Dataset, load_dataset
from .geometry import (
    BoxConstraint,
    Polytope,
    adversarial_constraints,
    box_to_polytope,
    contains,
    intersect,
)
from .network import (
    AffineMap,
    Layer,
    LayerTrace,
    Network,
    NetworkFormatError,
    Signature,
    affine_coefficients,
    affine_maps_for_signature,
    classify,
    forward,
    load_network,
    region_polytope,
    region_polytope_for_signature,
    save_network,
)
from .oracle import (
    BudgetExceededError,
    NoAdversarialError,
    OracleResult,
    exact_min_adversarial,
)
from .qpsolve import (
    INFEASIBLE,
    OPTIMAL,
    KktResiduals,
    QpIterationLimitError,
    QpProblem,
    QpSolution,
    QpSolverError,
    check_infeasibility_certificate,
    check_kkt,
    feasible_point,
    solve_min_norm,
)

__version__ = "0.1.0"

__all__ = [
    "AffineMap",
    "AttackConfig",
    "AttackResult",
    "AttackState",
    "BoxConstraint",
    "BudgetExceededError",
    "DataFormatError",
    "Dataset",
    "INFEASIBLE",
    "KktResiduals",
    "Layer",
    "LayerTrace",
    "Network",
    "NetworkFormatError",
    "NoAdversarialError",
    "OPTIMAL",
    "OracleResult",
    "Polytope",
    "QpIterationLimitError",
    "QpProblem",
    "QpSolution",
    "QpSolverError",
    "RegionSolution",
    "Signature",
    "TraceEntry",
    "adversarial_constraints",
    "affine_coefficients",
    "affine_maps_for_signature",
    "boundary_refine",
    "box_to_polytope",
    "check_infeasibility_certificate",
    "check_kkt",
    "classify",
    "contains",
    "deepfool",
    "exact_min_adversarial",
    "fallback_start",
    "feasible_point",
    "forward",
    "intersect",
    "load_dataset",
    "load_network",
    "region_polytope",
    "region_polytope_for_signature",
    "region_subproblem",
    "rlr_qp",
    "sample_ball",
    "save_network",
    "solve_min_norm",
    "__version__",
]
