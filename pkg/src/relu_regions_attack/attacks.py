"""Minimum-norm adversarial attacks on ReLU classifiers.

The main routine, rlr_qp, exploits the fact that the classifier is affine on
every linear region: restricted to the region of a point y, finding the
closest input (to the clean point x) that a chosen class l beats the current
class c on is a convex QP over the perturbation delta. The attack solves that
QP on a randomized sequence of regions, found by sampling around a working
set of the best perturbations so far, and keeps the best feasible adversarial
perturbation it sees.

deepfool provides the warm start: the standard iterative linearization
baseline, followed by a bisection (boundary_refine) that pulls the point back
to the decision boundary along its ray. When deepfool fails, fallback_start
searches the segment toward the origin instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BoxConstraint,
    Polytope,
    adversarial_constraints,
    box_to_polytope,
)
from .network import (
    Network,
    affine_coefficients,
    classify,
    region_polytope_for_signature,
)
from .qpsolve import INFEASIBLE, QpProblem, QpSolverError, solve_min_norm

__all__ = [
    "PHASE_INIT",
    "PHASE_EXPLORATION",
    "PHASE_LOCAL_SEARCH",
    "TraceEntry",
    "AttackConfig",
    "AttackState",
    "AttackResult",
    "RegionSolution",
    "sample_ball",
    "region_subproblem",
    "rlr_qp",
    "deepfool",
    "boundary_refine",
    "fallback_start",
]

logger = logging.getLogger(__name__)

PHASE_INIT = "init"
PHASE_EXPLORATION = "exploration"
PHASE_LOCAL_SEARCH = "local-search"

TARGETS_ALL = "all"
TARGETS_WARM_START_CLASS = "warm-start-class"


@dataclass(frozen=True)
class TraceEntry:
    """One logged incumbent improvement."""

    norm: float
    outer_iteration: int  # 0 for the initial incumbent
    phase: str


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters of the randomized region search.

    n1: working-set size, n2: samples per working-set member and round,
    n3: exploration rounds per outer iteration, n4: outer iterations.
    alpha: working-set admission band; a candidate enters the working set
    only if its norm is below alpha times the incumbent norm.
    targets: "all" (every class but the current one), "warm-start-class"
    (only the class of the warm start; falls back to "all" without one), or
    an explicit tuple of class indices.
    box: input domain constraint added to every QP, or None for none.
    boundary_tol: relative push factor used when checking that a candidate
    actually flips the classifier, and the default tolerance of
    boundary_refine.
    """

    n1: int = 10
    n2: int = 10
    n3: int = 5
    n4: int = 3
    alpha: float = 1.5
    targets: object = TARGETS_ALL
    box: BoxConstraint | None = None
    seed: int = 0
    boundary_tol: float = 1e-6

    def __post_init__(self):
        for name in ("n1", "n2", "n3", "n4"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not self.alpha > 1.0:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.boundary_tol <= 0:
            raise ValueError("boundary_tol must be positive")
        if isinstance(self.targets, str):
            if self.targets not in (TARGETS_ALL, TARGETS_WARM_START_CLASS):
                raise ValueError(f"unknown target policy {self.targets!r}")
        else:
            object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
            if not self.targets:
                raise ValueError("explicit target set must be non-empty")

    @property
    def region_budget(self) -> int:
        """Total points picked: 1 + (n1 n3 + 1) n2 n4."""
        return 1 + (self.n1 * self.n3 + 1) * self.n2 * self.n4


@dataclass
class AttackState:
    """Live search state, exposed to observers for diagnostics.

    Invariant: every working-set member either still equals the initial
    incumbent it was seeded with, or has norm below alpha times the current
    incumbent norm.
    """

    delta: np.ndarray
    norm: float
    working_set: list
    working_is_initializer: list
    visited: set
    regions_checked: int = 0
    qp_calls: int = 0
    trace: list = field(default_factory=list)


@dataclass(frozen=True)
class AttackResult:
    """Outcome of rlr_qp.

    success means an adversarial perturbation is returned; when False (no
    warm start and no region produced a valid candidate) delta is zero and
    norm is infinite. regions_checked counts distinct linear regions whose
    QPs were solved; duplicate signatures are skipped without counting.
    """

    delta: np.ndarray
    norm: float
    success: bool
    regions_checked: int
    qp_calls: int
    warm_start_norm: float | None
    trace: tuple


@dataclass(frozen=True)
class RegionSolution:
    """Best feasible target QP of one region."""

    delta: np.ndarray
    norm: float
    target_class: int


def sample_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """Random point of the ball of the given radius around the origin.

    Direction uniform on the sphere (normalized Gaussian), length uniform on
    [0, radius]. This concentrates samples near the center compared to the
    volume-uniform law, which is intentional.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    direction = rng.standard_normal(dim)
    length = float(np.linalg.norm(direction))
    rho = rng.uniform(0.0, radius)
    if length == 0.0:
        return np.zeros(dim)
    return (rho / length) * direction


def _resolve_targets(cfg: AttackConfig, net: Network, c: int, warm_class: int | None):
    k = net.num_classes
    if cfg.targets == TARGETS_ALL:
        chosen = [l for l in range(k) if l != c]
    elif cfg.targets == TARGETS_WARM_START_CLASS:
        if warm_class is None or warm_class == c:
            chosen = [l for l in range(k) if l != c]
        else:
            chosen = [warm_class]
    else:
        for t in cfg.targets:
            if not 0 <= t < k:
                raise ValueError(f"target class {t} out of range for {k} classes")
        chosen = sorted(set(cfg.targets) - {c})
        if not chosen:
            raise ValueError("explicit target set contains only the current class")
    return chosen


def _solve_region_qps(out_map, region, box_rows, x, c, targets, on_error: str):
    """Minimum-norm adversarial QP over one region, trying every target class.

    Returns (best RegionSolution or None, number of QP calls attempted).
    on_error is "raise" to propagate solver failures or "skip" to log them.
    """
    best = None
    attempts = 0
    for l in targets:
        constraints = adversarial_constraints(out_map, c, l, region, box_rows, x)
        attempts += 1
        try:
            solution = solve_min_norm(QpProblem(constraints))
        except QpSolverError as exc:
            if on_error == "raise":
                raise
            logger.warning("QP for target class %d skipped: %s", l, exc)
            continue
        if solution.status == INFEASIBLE:
            continue
        norm = float(np.linalg.norm(solution.delta))
        if best is None or norm < best.norm:
            best = RegionSolution(solution.delta, norm, l)
    return best, attempts


def region_subproblem(
    net: Network,
    x,
    y,
    c: int,
    targets,
    box: BoxConstraint | None = None,
) -> RegionSolution | None:
    """Closest perturbation of x, within the linear region of y, that makes
    some target class beat class c under the region's affine logits.

    Returns None when every target QP is infeasible. Solver iteration-limit
    failures propagate.
    """
    x = np.asarray(x, dtype=np.float64)
    maps, signature = affine_coefficients(net, y)
    region = region_polytope_for_signature(net, signature)
    box_rows = box_to_polytope(box) if box is not None else Polytope.empty(net.input_dim)
    targets = [l for l in targets if l != c]
    best, _ = _solve_region_qps(maps[-1], region, box_rows, x, c, targets, "raise")
    return best


def rlr_qp(net: Network, x, warm_start, cfg: AttackConfig, observer=None) -> AttackResult:
    """Randomized linear-region search for a minimum-norm adversarial example.

    Starting from the region of x and optionally a warm-start perturbation,
    repeatedly samples points around a working set of good perturbations,
    solves the adversarial QP on each newly seen region, and keeps the best
    perturbation whose pushed point (scaled by 1 + boundary_tol) genuinely
    flips the classifier. The result never exceeds the warm-start norm.

    ``observer``, if given, is called with the live AttackState after every
    state change; it exists for diagnostics and tests and must not mutate the
    state.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"x must have shape ({net.input_dim},), got {x.shape}")
    if cfg.box is not None and cfg.box.dim != net.input_dim:
        raise ValueError("box dimension does not match the network input")
    c = classify(net, x)
    rng = np.random.default_rng(cfg.seed)
    box_rows = (
        box_to_polytope(cfg.box) if cfg.box is not None else Polytope.empty(net.input_dim)
    )

    push = 1.0 + cfg.boundary_tol

    def pushed_flips(delta):
        return classify(net, x + push * delta) != c

    warm = None
    warm_class = None
    if warm_start is not None:
        warm = np.asarray(warm_start, dtype=np.float64)
        if warm.shape != x.shape:
            raise ValueError("warm start must have the same shape as x")
        # The pushed-point test is the package-wide validity convention; it
        # also accepts perturbations ending exactly on the decision boundary,
        # which round-to-round warm starting produces routinely.
        warm_class = classify(net, x + push * warm)
        if warm_class == c:
            raise ValueError("warm start is not adversarial for x")
    targets = _resolve_targets(cfg, net, c, warm_class)

    state = AttackState(
        delta=np.zeros(net.input_dim),
        norm=math.inf,
        working_set=[],
        working_is_initializer=[],
        visited=set(),
    )

    def notify():
        if observer is not None:
            observer(state)

    def check_region(y):
        """Solve the adversarial QP on the region of y unless already seen."""
        maps, signature = affine_coefficients(net, y)
        if signature in state.visited:
            return None
        state.visited.add(signature)
        state.regions_checked += 1
        region = region_polytope_for_signature(net, signature, maps=maps)
        best, attempts = _solve_region_qps(
            maps[-1], region, box_rows, x, c, targets, "skip"
        )
        state.qp_calls += attempts
        return best

    def consider(candidate, phase, outer):
        """Incumbent update, then working-set maintenance."""
        if candidate is None:
            return
        improved = False
        if candidate.norm < state.norm and pushed_flips(candidate.delta):
            state.delta = candidate.delta
            state.norm = candidate.norm
            state.trace.append(TraceEntry(candidate.norm, outer, phase))
            improved = True
        if state.working_set:
            worst = max(
                range(len(state.working_set)),
                key=lambda i: float(np.linalg.norm(state.working_set[i])),
            )
            worst_norm = float(np.linalg.norm(state.working_set[worst]))
            if candidate.norm < cfg.alpha * state.norm and candidate.norm < worst_norm:
                state.working_set[worst] = candidate.delta
                state.working_is_initializer[worst] = False
        if improved and state.working_set:
            # A large incumbent drop can strand replaced members above the
            # admission band; pull them back onto the new incumbent.
            for i in range(len(state.working_set)):
                if state.working_is_initializer[i]:
                    continue
                if float(np.linalg.norm(state.working_set[i])) >= cfg.alpha * state.norm:
                    state.working_set[i] = state.delta.copy()
        notify()

    warm_norm = float(np.linalg.norm(warm)) if warm is not None else None
    if warm is not None:
        state.delta = warm.copy()
        state.norm = warm_norm

    consider(check_region(x), PHASE_INIT, 0)
    if not math.isfinite(state.norm):
        return AttackResult(
            delta=np.zeros(net.input_dim),
            norm=math.inf,
            success=False,
            regions_checked=state.regions_checked,
            qp_calls=state.qp_calls,
            warm_start_norm=warm_norm,
            trace=(),
        )
    # Rewrite the trace so its first entry is the surviving initial incumbent,
    # whether that came from the warm start or from the region of x.
    state.trace = [TraceEntry(state.norm, 0, PHASE_INIT)]

    state.working_set = [state.delta.copy() for _ in range(cfg.n1)]
    state.working_is_initializer = [True] * cfg.n1
    notify()

    # Samples use the working set, incumbent, and radius as they stand at
    # draw time; every update takes effect immediately for later draws.
    for outer in range(1, cfg.n4 + 1):
        for _ in range(cfg.n3):
            for i in range(cfg.n1):
                for _ in range(cfg.n2):
                    step = sample_ball(rng, net.input_dim, state.norm / outer)
                    y = x + state.working_set[i] + step
                    consider(check_region(y), PHASE_EXPLORATION, outer)
        for _ in range(cfg.n2):
            step = sample_ball(rng, net.input_dim, state.norm / outer)
            y = x + state.delta + step
            consider(check_region(y), PHASE_LOCAL_SEARCH, outer)

    return AttackResult(
        delta=state.delta.copy(),
        norm=state.norm,
        success=True,
        regions_checked=state.regions_checked,
        qp_calls=state.qp_calls,
        warm_start_norm=warm_norm,
        trace=tuple(state.trace),
    )


def deepfool(net: Network, x, max_iters: int = 50, overshoot: float = 0.02):
    """Iterative linearization baseline.

    At each step, linearize the logits at the current point, take the closest
    decision-boundary projection over all other classes, and accumulate. The
    running total is applied with a (1 + overshoot) factor, both for the
    misclassification test and in the returned perturbation. Returns None
    when max_iters linearizations never flip the classifier.
    """
    x = np.asarray(x, dtype=np.float64)
    if net.num_classes < 2:
        raise ValueError("deepfool needs at least two classes")
    if max_iters < 1:
        raise ValueError("max_iters must be positive")
    c = classify(net, x)
    r_total = np.zeros(net.input_dim)
    for _ in range(max_iters):
        point = x + (1.0 + overshoot) * r_total
        maps, _ = affine_coefficients(net, point)
        out = maps[-1]
        logits = out.V @ point + out.a
        best_step = None
        best_dist = math.inf
        for l in range(net.num_classes):
            if l == c:
                continue
            w = out.V[l] - out.V[c]
            w_norm = float(np.linalg.norm(w))
            if w_norm == 0.0:
                continue
            gap = abs(float(logits[l] - logits[c]))
            dist = gap / w_norm
            if dist < best_dist:
                best_dist = dist
                best_step = (gap / w_norm**2) * w
        if best_step is None:
            return None
        r_total = r_total + best_step
        if classify(net, x + (1.0 + overshoot) * r_total) != c:
            return (1.0 + overshoot) * r_total
    return None


def boundary_refine(net: Network, x, delta, iters: int = 40):
    """Shrink an adversarial perturbation along its ray by bisection.

    Maintains t_lo (still classified as x) and t_hi (misclassified) with
    t_hi - t_lo halving each step, and returns t_hi * delta. The result is
    adversarial and never longer than delta.
    """
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    c = classify(net, x)
    if classify(net, x + delta) == c:
        raise ValueError("delta is not adversarial for x")
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if classify(net, x + mid * delta) == c:
            lo = mid
        else:
            hi = mid
    return hi * delta


def fallback_start(net: Network, x, iters: int = 40):
    """Warm start from the segment between x and the origin.

    Useful when deepfool fails: if the origin is classified differently from
    x, bisect along -x for a boundary point. Returns None when the origin has
    the same class.
    """
    x = np.asarray(x, dtype=np.float64)
    c = classify(net, x)
    if classify(net, np.zeros(net.input_dim)) == c:
        return None
    return boundary_refine(net, x, -x, iters)
