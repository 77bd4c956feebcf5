"""Exact minimum-norm adversarial perturbations by exhaustive region enumeration.

Every activation pattern of the hidden units defines a candidate linear
region (possibly empty). The closed regions obtained by fixing each pattern
cover the whole input space, and the network's output map is affine on each
closure, so taking the minimum over all patterns and all target classes of
the per-region adversarial QP yields the exact optimum. With N hidden units
this costs 2^N enumerations; the budget guard keeps that honest.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BoxConstraint,
    Polytope,
    adversarial_constraints,
    box_to_polytope,
    intersect,
)
from .network import (
    Network,
    Signature,
    affine_maps_for_signature,
    classify,
    region_polytope_for_signature,
)
from .qpsolve import (
    INFEASIBLE,
    QpProblem,
    QpSolverError,
    feasible_point,
    solve_min_norm,
)

__all__ = [
    "DEFAULT_PATTERN_BUDGET",
    "BudgetExceededError",
    "NoAdversarialError",
    "OracleResult",
    "exact_min_adversarial",
]

logger = logging.getLogger(__name__)

# 2^20 patterns is roughly the practical limit of a patient desk run.
DEFAULT_PATTERN_BUDGET = 2**20


class BudgetExceededError(RuntimeError):
    """Enumeration would exceed the configured pattern budget."""

    def __init__(self, num_hidden_units: int, budget: int):
        super().__init__(
            f"network has {num_hidden_units} hidden units, so enumeration needs "
            f"2^{num_hidden_units} patterns, exceeding the budget of {budget}"
        )
        self.num_hidden_units = num_hidden_units
        self.budget = budget


class NoAdversarialError(RuntimeError):
    """No adversarial point exists inside the box (e.g. a constant classifier)."""


@dataclass(frozen=True)
class OracleResult:
    """Certified optimum of the minimum-norm adversarial problem.

    optimal_signature is the activation pattern whose region produced the
    optimum; ties are broken toward the lexicographically smallest pattern
    (inactive before active, unit by unit) and then the smallest target
    class, which enumeration order makes automatic.
    """

    delta: np.ndarray
    norm: float
    optimal_signature: Signature
    target_class: int
    patterns_enumerated: int
    feasible_patterns: int


def exact_min_adversarial(
    net: Network,
    x,
    box: BoxConstraint | None = None,
    max_patterns: int = DEFAULT_PATTERN_BUDGET,
) -> OracleResult:
    """Global minimum-norm adversarial perturbation by enumerating all patterns.

    For each of the 2^N activation patterns, build the closed region polytope,
    check that it intersects the box, and solve one QP per target class over
    the perturbation. The smallest feasible candidate over all patterns and
    targets is the exact optimum of the attack problem. Per-pattern solver
    failures are logged and skipped; they cannot hide the optimum unless the
    solver fails on the optimal pattern itself, which the KKT-checked solver
    would report rather than mislabel.
    """
    x = np.asarray(x, dtype=np.float64)
    n = net.num_hidden_units
    if 2**n > max_patterns:
        raise BudgetExceededError(n, max_patterns)
    if box is not None and box.dim != net.input_dim:
        raise ValueError("box dimension does not match the network input")
    c = classify(net, x)
    targets = [l for l in range(net.num_classes) if l != c]
    if not targets:
        raise NoAdversarialError("the network has a single class")
    box_rows = (
        box_to_polytope(box) if box is not None else Polytope.empty(net.input_dim)
    )

    best_delta = None
    best_norm = math.inf
    best_signature = None
    best_target = None
    feasible_patterns = 0
    patterns_enumerated = 0

    for bits in itertools.product((0, 1), repeat=n):
        patterns_enumerated += 1
        signature = Signature(bits)
        maps = affine_maps_for_signature(net, signature)
        region = region_polytope_for_signature(net, signature, maps=maps)
        try:
            if feasible_point(QpProblem(intersect(region, box_rows))) is None:
                continue
        except QpSolverError as exc:
            logger.warning("pattern %s feasibility check skipped: %s", bits, exc)
            continue
        feasible_patterns += 1
        for l in targets:
            constraints = adversarial_constraints(
                maps[-1], c, l, region, box_rows, x
            )
            try:
                solution = solve_min_norm(QpProblem(constraints))
            except QpSolverError as exc:
                logger.warning(
                    "pattern %s target %d skipped: %s", bits, l, exc
                )
                continue
            if solution.status == INFEASIBLE:
                continue
            norm = float(np.linalg.norm(solution.delta))
            if norm < best_norm:
                best_delta = solution.delta
                best_norm = norm
                best_signature = signature
                best_target = l

    if best_delta is None:
        raise NoAdversarialError(
            "no pattern admits an adversarial point inside the box"
        )
    return OracleResult(
        delta=best_delta,
        norm=best_norm,
        optimal_signature=best_signature,
        target_class=best_target,
        patterns_enumerated=patterns_enumerated,
        feasible_patterns=feasible_patterns,
    )
