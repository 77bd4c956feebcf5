"""Minimum-norm point in a polytope via least-distance programming.

Solves min 0.5 ||delta||^2 subject to A delta + b >= 0 by the classical
reduction to nonnegative least squares: with

    E = [ A^T ; -b^T ]  of shape (d+1, m),    f = e_{d+1},

solve min_{u >= 0} ||E u - f|| and put r = E u - f. Then ||r||^2 = 1/(1 +
||delta*||^2) for feasible systems, and

    delta* = -r[:d] / r[d],        lambda* = u / ||r||^2

recovers the primal solution and its KKT multipliers. A residual that
vanishes (up to round-off) certifies infeasibility, and u itself is a Farkas
certificate: u >= 0, A^T u ~ 0, b^T u < 0.

Two NNLS backends are available: scipy's compiled solver and a pure-Python
active-set implementation of the Lawson-Hanson algorithm. scipy 1.15 has been
observed to return a silently non-optimal vertex on rare degenerate systems,
so every derived solution is checked against the KKT tolerances and rejected
results fall through: first to an active-set polish (re-solving on the
support of the multipliers, which drives complementarity to round-off), then
to the pure-Python backend. The checker itself is public API.

Marginally infeasible systems are the hard case for this reduction: the NNLS
residual decays toward zero along a Farkas direction whose norm blows up as
the margin shrinks, and active-set NNLS can stall before crossing the
infeasibility threshold. When both backends fail, the status is settled
exactly by linear programming: a certificate lam >= 0 with A^T lam = 0 and
b^T lam = -1 exists if and only if the polytope is empty, and that search is
an LP feasibility problem HiGHS dispatches reliably.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .geometry import Polytope

__all__ = [
    "OPTIMAL",
    "INFEASIBLE",
    "STATIONARITY_TOL",
    "PRIMAL_TOL",
    "COMPLEMENTARITY_TOL",
    "MULTIPLIER_TOL",
    "QpProblem",
    "QpSolution",
    "KktResiduals",
    "QpSolverError",
    "QpIterationLimitError",
    "check_kkt",
    "check_infeasibility_certificate",
    "solve_min_norm",
    "feasible_point",
]

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

# Acceptance tolerances for a returned primal/dual pair.
STATIONARITY_TOL = 1e-8  # ||delta - A^T lambda||_inf <= tol * (1 + ||delta||_inf)
PRIMAL_TOL = 1e-8  # min_i (A delta + b)_i >= -tol
COMPLEMENTARITY_TOL = 1e-7  # max_i |lambda_i (A delta + b)_i| <= tol
MULTIPLIER_TOL = 1e-10  # min_i lambda_i >= -tol

# ||r||^2 at or below this is treated as an exactly vanishing LDP residual,
# i.e. infeasibility. A feasible system would need ||delta*|| >= ~1e6 to get
# here; the box-bounded systems this package builds stay far below that.
_INFEASIBLE_RSQ = 1e-12

_CERTIFICATE_TOL = 1e-7


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 ||delta||^2 subject to the rows of ``constraints``."""

    constraints: Polytope

    def __post_init__(self):
        if not (
            np.all(np.isfinite(self.constraints.A))
            and np.all(np.isfinite(self.constraints.b))
        ):
            raise ValueError("constraint matrices must be finite")


@dataclass(frozen=True)
class KktResiduals:
    """Raw optimality residuals of a primal/dual pair.

    stationarity:  ||delta - A^T lambda||_inf
    primal:        max(0, -min_i (A delta + b)_i)
    complementarity: max_i |lambda_i (A delta + b)_i|
    multiplier_negativity: max(0, -min_i lambda_i)
    passed: all four within the module tolerances. The stationarity threshold
            scales with 1 + ||delta||_inf and the complementarity threshold
            with (1 + ||delta||_inf)(1 + ||lambda||_inf), since both residuals
            grow with the solution scale even at the exact optimum.
    """

    stationarity: float
    primal: float
    complementarity: float
    multiplier_negativity: float
    passed: bool

    def worst(self) -> float:
        return max(
            self.stationarity,
            self.primal,
            self.complementarity,
            self.multiplier_negativity,
        )


class QpSolverError(RuntimeError):
    """Solver failed to produce a solution meeting the KKT tolerances."""

    def __init__(self, message: str, residuals: KktResiduals | None = None):
        super().__init__(message)
        self.residuals = residuals


class QpIterationLimitError(QpSolverError):
    """Iteration cap hit before convergence; carries the best residuals seen."""


def check_kkt(A, b, delta, multipliers) -> KktResiduals:
    """Evaluate the KKT residuals of (delta, multipliers) for min-norm over A z + b >= 0."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    lam = np.asarray(multipliers, dtype=np.float64)
    slack = A @ delta + b if A.shape[0] else np.zeros(0)
    stationarity = float(
        np.max(np.abs(delta - (A.T @ lam if A.shape[0] else 0.0)))
        if delta.size
        else 0.0
    )
    primal = float(max(0.0, -np.min(slack))) if slack.size else 0.0
    complementarity = float(np.max(np.abs(lam * slack))) if slack.size else 0.0
    negativity = float(max(0.0, -np.min(lam))) if lam.size else 0.0
    scale = 1.0 + (float(np.max(np.abs(delta))) if delta.size else 0.0)
    # Complementarity products are quadratic in the problem scale: lambda grows
    # with ||delta|| and the slack of an active row only vanishes up to
    # eps * ||A|| * ||delta||, so a flat threshold is unattainable in float64
    # once the optimum sits far from the origin.
    lam_scale = 1.0 + (float(np.max(np.abs(lam))) if lam.size else 0.0)
    passed = (
        stationarity <= STATIONARITY_TOL * scale
        and primal <= PRIMAL_TOL
        and complementarity <= COMPLEMENTARITY_TOL * scale * lam_scale
        and negativity <= MULTIPLIER_TOL
    )
    return KktResiduals(stationarity, primal, complementarity, negativity, passed)


def check_infeasibility_certificate(A, b, lam, tol: float = _CERTIFICATE_TOL) -> bool:
    """True when lam proves { A z + b >= 0 } empty: lam >= 0, A^T lam ~ 0, b^T lam < 0."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if lam.size == 0 or np.min(lam) < -MULTIPLIER_TOL:
        return False
    combo = float(b @ lam)
    if combo >= -abs(tol):
        return False
    # Scale-free test: normalize so the violated combination has weight 1.
    scale = -combo
    return float(np.max(np.abs(A.T @ lam))) <= tol * max(1.0, scale)


def _nnls_scipy(E, f, max_iter):
    try:
        u, _ = scipy.optimize.nnls(E, f, maxiter=max_iter)
    except RuntimeError as exc:
        raise _IterationCap(str(exc)) from exc
    return u


class _IterationCap(Exception):
    pass


def _nnls_lawson_hanson(E, f, max_iter):
    """Textbook active-set NNLS. Slower than scipy but dependable on the
    degenerate systems where the compiled solver has been seen to fail."""
    n_rows, n_cols = E.shape
    u = np.zeros(n_cols)
    passive = np.zeros(n_cols, dtype=bool)
    w = E.T @ (f - E @ u)
    tol = 10 * np.finfo(np.float64).eps * max(n_rows, n_cols) * (
        float(np.max(np.sum(np.abs(E), axis=0))) if E.size else 1.0
    )
    iters = 0
    while not passive.all() and np.max(w[~passive], initial=-np.inf) > tol:
        candidates = np.where(~passive)[0]
        passive[candidates[np.argmax(w[candidates])]] = True
        while True:
            iters += 1
            if iters > max_iter:
                raise _IterationCap(
                    f"active-set NNLS exceeded {max_iter} iterations"
                )
            z = np.zeros(n_cols)
            cols = np.where(passive)[0]
            z[cols], *_ = np.linalg.lstsq(E[:, cols], f, rcond=None)
            if np.min(z[cols], initial=np.inf) > 0.0:
                u = z
                break
            mask = passive & (z <= 0.0)
            gaps = u[mask] - z[mask]
            # A passive variable already at zero with z = 0 contributes a 0/0
            # step; treat it as a zero-length step so it gets dropped below.
            steps = np.divide(
                u[mask], gaps, out=np.zeros_like(gaps), where=gaps > 0.0
            )
            alpha = float(np.min(steps))
            u = u + alpha * (z - u)
            passive &= u > tol
            u[~passive] = 0.0
        w = E.T @ (f - E @ u)
    return u


def _derive_primal_dual(r, u, d):
    """Recover (delta, lambda) from the LDP residual, or None when r[d] = 0.

    A vanishing last component with a nonvanishing residual means the backend
    returned a point from which no primal solution can be read off; callers
    treat it like any other failed attempt.
    """
    rsq = float(r @ r)
    if r[d] == 0.0:
        return None
    delta = -r[:d] / r[d]
    lam = u / rsq
    return delta, lam


def _polish(A, b, lam_raw):
    """Re-solve on the support of lam_raw.

    With the active set S fixed, the optimum satisfies A_S delta = -b_S and
    delta = A_S^T lam_S; solving both in the least-squares sense removes the
    residual noise the NNLS route leaves in the multipliers.
    """
    support = lam_raw > 0.0
    d = A.shape[1]
    if not np.any(support):
        return np.zeros(d), np.zeros(A.shape[0])
    As = A[support]
    delta, *_ = np.linalg.lstsq(As, -b[support], rcond=None)
    lam_s, *_ = np.linalg.lstsq(As.T, delta, rcond=None)
    lam = np.zeros(A.shape[0])
    lam[support] = lam_s
    # lstsq can leave tiny negative multipliers on degenerate supports.
    lam[np.abs(lam) <= MULTIPLIER_TOL] = 0.0
    return delta, lam


def _farkas_certificate(A, b, u):
    """Normalize and polish u into a certificate, or None if it fails the check."""
    lam = np.array(u, dtype=np.float64)
    support = lam > 0.0
    if np.any(support):
        # Project the support weights onto the left null space of A_S (the
        # singular vectors of A_S with zero singular value) so A^T lam
        # vanishes to round-off.
        As = A[support]
        bs = b[support]
        U, s, _ = np.linalg.svd(As, full_matrices=True)
        rank = int(np.sum(s > (s[0] if s.size else 0.0) * max(As.shape) * np.finfo(
            np.float64).eps))
        basis = U[:, rank:]
        if basis.shape[1] > 0:
            projected = basis @ (basis.T @ lam[support])
            if np.min(projected) >= -MULTIPLIER_TOL and float(bs @ projected) < 0.0:
                cleaned = np.clip(projected, 0.0, None)
                lam = np.zeros_like(lam)
                lam[np.where(support)[0]] = cleaned
    combo = float(b @ lam)
    if combo >= 0.0:
        return None
    lam = lam / -combo
    if check_infeasibility_certificate(A, b, lam):
        return lam
    return None


def _certificate_by_lp(A, b):
    """Look for a Farkas certificate with an LP: lam >= 0, A^T lam = 0, b^T lam = -1.

    Returns (lam, True) when the LP finds one (original system proven empty),
    (None, False) when the LP itself is infeasible, which by LP duality means
    the original system has a feasible point, and (None, None) when the LP
    solver failed outright.
    """
    m, d = A.shape
    a_eq = np.vstack([A.T, b[None, :]])
    b_eq = np.zeros(d + 1)
    b_eq[d] = -1.0
    result = scipy.optimize.linprog(
        c=np.ones(m),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=[(0.0, None)] * m,
        method="highs",
    )
    if result.status == 0:
        lam = np.clip(np.asarray(result.x, dtype=np.float64), 0.0, None)
        polished = _farkas_certificate(A, b, lam)
        if polished is not None:
            return polished, True
        if check_infeasibility_certificate(A, b, lam):
            return lam, True
        return None, None
    if result.status == 2:
        return None, False
    return None, None


@dataclass(frozen=True)
class QpSolution:
    """Outcome of solve_min_norm.

    status is OPTIMAL or INFEASIBLE. delta and multipliers are None when
    infeasible; certificate, when present, is a Farkas vector lam >= 0 with
    A^T lam ~ 0 and b^T lam = -1.
    """

    status: str
    delta: np.ndarray | None
    multipliers: np.ndarray | None
    kkt_residual: float
    certificate: np.ndarray | None = None


def solve_min_norm(problem: QpProblem, max_iter: int | None = None) -> QpSolution:
    """Solve min 0.5 ||delta||^2 s.t. A delta + b >= 0.

    Returns an optimal solution with multipliers satisfying the KKT
    tolerances, or an infeasibility verdict with a Farkas certificate when
    one can be extracted. Raises QpIterationLimitError when the iteration cap
    (default 50 * (rows + dim)) is exhausted, and QpSolverError if no backend
    can meet the tolerances.
    """
    A = problem.constraints.A
    b = problem.constraints.b
    m, d = A.shape
    if m == 0:
        return QpSolution(OPTIMAL, np.zeros(d), np.zeros(0), 0.0)
    cap = max_iter if max_iter is not None else 50 * (m + d)

    E = np.vstack([A.T, -b[None, :]])
    f = np.zeros(d + 1)
    f[d] = 1.0

    best_residuals: KktResiduals | None = None
    hit_cap = False
    for backend in (_nnls_scipy, _nnls_lawson_hanson):
        try:
            u = backend(E, f, cap)
        except _IterationCap as exc:
            logger.debug("NNLS backend %s stopped: %s", backend.__name__, exc)
            hit_cap = True
            continue
        r = E @ u - f
        rsq = float(r @ r)
        if rsq <= _INFEASIBLE_RSQ:
            # Any u >= 0 with E u ~ f certifies infeasibility on its own, so
            # this verdict does not depend on backend optimality.
            certificate = _farkas_certificate(A, b, u)
            if certificate is None:
                certificate, _ = _certificate_by_lp(A, b)
            return QpSolution(INFEASIBLE, None, None, np.sqrt(rsq), certificate)
        derived = _derive_primal_dual(r, u, d)
        if derived is None:
            logger.debug("NNLS backend %s returned a degenerate residual", backend.__name__)
            continue
        delta, lam = derived
        residuals = check_kkt(A, b, delta, lam)
        if residuals.passed:
            return QpSolution(OPTIMAL, delta, lam, residuals.worst())
        delta, lam = _polish(A, b, lam)
        polished = check_kkt(A, b, delta, lam)
        if polished.passed:
            return QpSolution(OPTIMAL, delta, lam, polished.worst())
        if best_residuals is None or polished.worst() < best_residuals.worst():
            best_residuals = polished
        logger.debug(
            "NNLS backend %s failed KKT check (worst residual %.3e)",
            backend.__name__,
            polished.worst(),
        )
    # Both backends stalled or missed the tolerances. The troublesome systems
    # in practice are marginally infeasible ones, where the NNLS residual
    # creeps toward zero along a huge-norm Farkas direction. Settle the status
    # exactly: a certificate lam >= 0 with A^T lam = 0, b^T lam < 0 exists if
    # and only if the system is empty, and searching for one is a plain LP.
    certificate, proven_infeasible = _certificate_by_lp(A, b)
    if proven_infeasible:
        defect = float(np.max(np.abs(A.T @ certificate)))
        return QpSolution(INFEASIBLE, None, None, defect, certificate)
    if hit_cap:
        raise QpIterationLimitError(
            f"iteration cap {cap} exhausted before convergence"
            + (
                f"; best residuals: stationarity {best_residuals.stationarity:.3e}, "
                f"primal {best_residuals.primal:.3e}, "
                f"complementarity {best_residuals.complementarity:.3e}"
                if best_residuals is not None
                else ""
            ),
            best_residuals,
        )
    raise QpSolverError(
        "no backend met the KKT tolerances"
        + (
            f"; best worst-case residual {best_residuals.worst():.3e}"
            if best_residuals is not None
            else ""
        ),
        best_residuals,
    )


def feasible_point(problem: QpProblem, max_iter: int | None = None) -> np.ndarray | None:
    """A point satisfying the constraints, or None when the system is empty.

    Uses the same LDP route, so the returned point is the minimum-norm one.
    """
    solution = solve_min_norm(problem, max_iter=max_iter)
    if solution.status == INFEASIBLE:
        return None
    return solution.delta
