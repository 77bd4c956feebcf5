"""Minimum-norm QP solver: exactness, certificates, and hard geometries."""

from pathlib import Path

import numpy as np
import pytest

from helpers import enum_min_norm, make_net, random_qp

from relu_regions_attack.geometry import (
    BoxConstraint,
    Polytope,
    box_to_polytope,
    contains,
    intersect,
)
from relu_regions_attack.network import (
    Signature,
    affine_maps_for_signature,
    region_polytope_for_signature,
)
from relu_regions_attack.qpsolve import (
    INFEASIBLE,
    OPTIMAL,
    QpIterationLimitError,
    QpProblem,
    check_infeasibility_certificate,
    check_kkt,
    feasible_point,
    solve_min_norm,
)

DATA = Path(__file__).parent / "data"


def problem(A, b):
    return QpProblem(Polytope(np.asarray(A, dtype=np.float64), np.asarray(b, dtype=np.float64)))


class TestBasics:
    def test_no_rows_gives_zero(self):
        sol = solve_min_norm(QpProblem(Polytope.empty(3)))
        assert sol.status == OPTIMAL
        assert np.array_equal(sol.delta, np.zeros(3))

    def test_single_halfspace_projection(self):
        sol = solve_min_norm(problem([[1.0, 0.0]], [-1.0]))
        assert sol.status == OPTIMAL
        assert np.allclose(sol.delta, [1.0, 0.0], atol=1e-10)

    def test_contradictory_rows_infeasible(self):
        sol = solve_min_norm(problem([[1.0, 0.0], [-1.0, 0.0]], [-1.0, -0.1]))
        assert sol.status == INFEASIBLE
        assert sol.delta is None and sol.multipliers is None
        assert sol.certificate is not None
        A = np.array([[1.0, 0.0], [-1.0, 0.0]])
        b = np.array([-1.0, -0.1])
        assert check_infeasibility_certificate(A, b, sol.certificate)

    def test_rejects_nonfinite_problem(self):
        with pytest.raises(ValueError):
            problem([[np.inf, 0.0]], [0.0])

    def test_interior_origin_returns_zero(self):
        sol = solve_min_norm(problem([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0]))
        assert sol.status == OPTIMAL
        assert np.allclose(sol.delta, 0.0)
        assert np.allclose(sol.multipliers, 0.0, atol=1e-12)


class TestAgainstEnumeration:
    def test_random_problems_match_oracle(self):
        rng = np.random.default_rng(2024)
        solved = infeasible = 0
        for _ in range(300):
            A, b = random_qp(rng)
            sol = solve_min_norm(problem(A, b))
            reference = enum_min_norm(A, b)
            if sol.status == INFEASIBLE:
                assert reference is None
                infeasible += 1
                continue
            assert reference is not None
            assert abs(float(np.linalg.norm(sol.delta)) - reference[1]) <= 1e-7
            residuals = check_kkt(A, b, sol.delta, sol.multipliers)
            assert residuals.passed
            solved += 1
        assert solved > 100 and infeasible > 30

    def test_feasible_point_status_agrees(self):
        rng = np.random.default_rng(77)
        for _ in range(500):
            A, b = random_qp(rng)
            point = feasible_point(problem(A, b))
            reference = enum_min_norm(A, b)
            if point is None:
                assert reference is None
            else:
                assert reference is not None
                assert contains(Polytope(A, b), point, tol=1e-8) or A.shape[0] == 0

    def test_duplicate_rows_tolerated(self):
        A = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        b = np.array([-1.0, -1.0, -1.0])
        sol = solve_min_norm(problem(A, b))
        assert sol.status == OPTIMAL
        assert np.allclose(sol.delta, [1.0, 0.0], atol=1e-9)


class TestProperties:
    def test_row_scaling_equivariance(self):
        rng = np.random.default_rng(4)
        count = 0
        for _ in range(100):
            A, b = random_qp(rng)
            if A.shape[0] == 0:
                continue
            sol = solve_min_norm(problem(A, b))
            scale = rng.uniform(0.1, 10.0, size=A.shape[0])
            scaled = solve_min_norm(problem(A * scale[:, None], b * scale))
            assert scaled.status == sol.status
            if sol.status == OPTIMAL:
                assert np.allclose(scaled.delta, sol.delta, atol=1e-8)
                count += 1
        assert count > 30

    def test_determinism(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            A, b = random_qp(rng)
            first = solve_min_norm(problem(A, b))
            second = solve_min_norm(problem(A, b))
            assert first.status == second.status
            if first.status == OPTIMAL:
                assert np.array_equal(first.delta, second.delta)

    def test_kkt_checker_flags_bad_pairs(self):
        A = np.array([[1.0, 0.0]])
        b = np.array([-1.0])
        good = check_kkt(A, b, np.array([1.0, 0.0]), np.array([1.0]))
        assert good.passed
        wrong_point = check_kkt(A, b, np.array([0.5, 0.0]), np.array([1.0]))
        assert not wrong_point.passed
        wrong_dual = check_kkt(A, b, np.array([1.0, 0.0]), np.array([-1.0]))
        assert not wrong_dual.passed
        slack_violation = check_kkt(A, b, np.array([2.0, 0.0]), np.array([2.0]))
        assert not slack_violation.passed

    def test_certificate_checker_rejects_noise(self):
        A = np.array([[1.0, 0.0], [-1.0, 0.0]])
        b = np.array([-1.0, -0.1])
        assert check_infeasibility_certificate(A, b, np.array([1.0, 1.0]) / 1.1)
        assert not check_infeasibility_certificate(A, b, np.array([1.0, 0.0]))
        assert not check_infeasibility_certificate(A, b, np.array([-1.0, -1.0]))

    def test_iteration_cap_raises(self):
        A = np.array([[1.0, 0.3, 0.0], [0.2, 1.0, 0.1], [0.0, 0.4, 1.0]])
        b = np.array([-1.0, -1.0, -1.0])
        with pytest.raises(QpIterationLimitError):
            solve_min_norm(problem(A, b), max_iter=1)


class TestHardGeometries:
    """Systems harvested from random-net region QPs that broke naive pipelines."""

    def test_marginally_infeasible_region_box_intersection(self):
        # Region of a fixed activation pattern intersected with the unit box;
        # the feasible set is empty with a margin of only ~2e-3, so the NNLS
        # route stalls and the verdict must come from the certificate search.
        net = make_net(115, 4, (8, 4))
        sig = Signature(bits=(0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 0))
        maps = affine_maps_for_signature(net, sig)
        region = region_polytope_for_signature(net, sig, maps=maps)
        box = box_to_polytope(BoxConstraint.uniform(4, 0.0, 1.0))
        system = intersect(region, box)
        sol = solve_min_norm(QpProblem(system))
        assert sol.status == INFEASIBLE
        assert sol.certificate is not None
        assert check_infeasibility_certificate(system.A, system.b, sol.certificate)

    @pytest.mark.parametrize("name,expected", [
        ("far_sliver.npz", 1344.398712),
        ("far_sliver_wide.npz", 1980.188006),
    ])
    def test_feasible_sliver_far_from_origin(self, name, expected):
        # Feasible, but the nearest point sits at norm ~1e3: complementarity
        # products carry the squared scale, which the checker must tolerate.
        data = np.load(DATA / name)
        sol = solve_min_norm(problem(data["A"], data["b"]))
        assert sol.status == OPTIMAL
        assert float(np.linalg.norm(sol.delta)) == pytest.approx(expected, rel=1e-6)
        assert check_kkt(data["A"], data["b"], sol.delta, sol.multipliers).passed
