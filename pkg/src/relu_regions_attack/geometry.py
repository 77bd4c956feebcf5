"""Polytope primitives shared by region extraction, the QP solver, and the attacks.

Every inequality system in this package uses a single orientation,

    P = { z in R^d : A z + b >= 0 },

with A of shape (m, d) and b of shape (m,). Rows are kept exactly as
constructed; redundant or duplicate rows are allowed and must be tolerated
downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Polytope",
    "BoxConstraint",
    "contains",
    "intersect",
    "box_to_polytope",
    "adversarial_constraints",
]


def _as_float_matrix(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {arr.shape}")
    return arr


def _as_float_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Polytope:
    """Closed inequality system { z : A z + b >= 0 }."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _as_float_matrix(self.A, "A")
        b = _as_float_vector(self.b, "b")
        if A.shape[0] != b.shape[0]:
            raise ValueError(
                f"row count mismatch: A has {A.shape[0]} rows, b has {b.shape[0]}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def empty(cls, dim: int) -> "Polytope":
        """Polytope with no rows (all of R^dim)."""
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def trivially_infeasible_rows(self) -> np.ndarray:
        """Indices of rows of the form 0 . z + b_i >= 0 with b_i < 0."""
        zero_rows = ~np.any(self.A, axis=1)
        return np.flatnonzero(zero_rows & (self.b < 0))


@dataclass(frozen=True)
class BoxConstraint:
    """Axis-aligned box lower <= z <= upper, encoded per coordinate."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _as_float_vector(self.lower, "lower")
        upper = _as_float_vector(self.upper, "upper")
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("box bounds must be finite")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise ValueError(
                f"coordinate {bad}: lower bound {lower[bad]} exceeds upper bound {upper[bad]}"
            )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, dim: int, lo: float, hi: float) -> "BoxConstraint":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def contains(polytope: Polytope, z, tol: float = 0.0) -> bool:
    """True when A z + b >= -tol holds for every row."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    z = _as_float_vector(z, "z")
    if z.shape[0] != polytope.dim:
        raise ValueError(
            f"dimension mismatch: polytope is {polytope.dim}-d, point is {z.shape[0]}-d"
        )
    if polytope.num_rows == 0:
        return True
    return bool(np.min(polytope.A @ z + polytope.b) >= -tol)


def intersect(p1: Polytope, p2: Polytope) -> Polytope:
    """Stack the rows of both systems; membership is the conjunction."""
    if p1.dim != p2.dim:
        raise ValueError(f"dimension mismatch: {p1.dim} vs {p2.dim}")
    return Polytope(np.vstack([p1.A, p2.A]), np.concatenate([p1.b, p2.b]))


def box_to_polytope(box: BoxConstraint) -> Polytope:
    """Rewrite lower <= z <= upper as 2 d rows: z - lower >= 0, upper - z >= 0."""
    d = box.dim
    eye = np.eye(d)
    A = np.vstack([eye, -eye])
    b = np.concatenate([-box.lower, box.upper])
    return Polytope(A, b)


def adversarial_constraints(
    out_map,
    c: int,
    l: int,
    region: Polytope,
    extra: Polytope,
    x,
) -> Polytope:
    """Constraint system over the perturbation delta for a targeted attack.

    ``out_map`` is the affine map (V, a) of the classifier output on the
    region, valid at z = x + delta. The rows are, in order:

      1. the decision row  <V_l - V_c, delta> + (<V_l - V_c, x> + a_l - a_c) >= 0,
      2. the region rows of ``region`` rewritten in delta via z = x + delta,
      3. the rows of ``extra`` (e.g. a box) rewritten the same way.

    Substituting z = x + delta turns A z + b >= 0 into A delta + (A x + b) >= 0,
    so only the offsets change.
    """
    x = _as_float_vector(x, "x")
    V, a = out_map.V, out_map.a
    k = V.shape[0]
    if not (0 <= c < k and 0 <= l < k):
        raise ValueError(f"class indices must lie in [0, {k}), got c={c}, l={l}")
    if c == l:
        raise ValueError("target class must differ from the current class")
    if region.dim != x.shape[0] or extra.dim != x.shape[0]:
        raise ValueError("constraint systems must match the input dimension")

    w = V[l] - V[c]
    offset = float(w @ x + a[l] - a[c])
    A = np.vstack([w[None, :], region.A, extra.A])
    b = np.concatenate(
        [[offset], region.A @ x + region.b, extra.A @ x + extra.b]
    )
    return Polytope(A, b)
