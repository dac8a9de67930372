import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nestt.errors import ConvergenceError, ParameterError
from nestt.problem import CompositeProblem, NonsmoothSpec
from nestt.prox import ProxRequest, project_l1_ball, prox_h, solve_z_subproblem

from conftest import l1_projection_bruteforce, nonsmooth_cycle, quad


class TestProxH:
    def test_soft_threshold(self):
        out = prox_h(
            ProxRequest(NonsmoothSpec.l1_penalty(0.3), np.array([1.0, -0.2]), 1.0)
        )
        np.testing.assert_allclose(out, [0.7, 0.0])

    def test_l1_ball_axis_point(self):
        out = prox_h(ProxRequest(NonsmoothSpec.l1_ball(1.0), np.array([3.0, 0.0]), 2.0))
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_l1_ball_thresholded(self):
        out = prox_h(ProxRequest(NonsmoothSpec.l1_ball(1.0), np.array([2.0, 1.0]), 1.0))
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_zero_and_box(self):
        center = np.array([2.0, -3.0])
        np.testing.assert_allclose(
            prox_h(ProxRequest(NonsmoothSpec.zero(), center, 5.0)), center
        )
        out = prox_h(
            ProxRequest(NonsmoothSpec.box(-np.ones(2), np.ones(2)), center, 5.0)
        )
        np.testing.assert_allclose(out, [1.0, -1.0])

    def test_gamma_must_be_positive(self):
        with pytest.raises(ParameterError):
            ProxRequest(NonsmoothSpec.zero(), np.zeros(2), 0.0)

    def test_prox_optimality_against_random_competitors(self, rng):
        # The returned point must beat feasible competitors on the prox
        # objective h(v) + (gamma/2)||v - center||^2.
        d = 4
        for idx in range(4):
            h = nonsmooth_cycle(idx, d)
            for _ in range(25):
                center = 3.0 * rng.standard_normal(d)
                gamma = float(rng.uniform(0.2, 5.0))
                v = prox_h(ProxRequest(h, center, gamma))
                obj_v = h.value(v) + 0.5 * gamma * np.sum((v - center) ** 2)
                assert np.isfinite(obj_v)
                for _ in range(25):
                    w = 1.5 * rng.standard_normal(d)
                    if h.kind == "l1_ball":
                        w = project_l1_ball(w, h.radius)
                    elif h.kind == "box":
                        w = np.clip(w, h.lo, h.hi)
                    obj_w = h.value(w) + 0.5 * gamma * np.sum((w - center) ** 2)
                    assert obj_v <= obj_w + 1e-9

    def test_nonexpansiveness(self, rng):
        d = 5
        for idx in range(4):
            h = nonsmooth_cycle(idx, d)
            for _ in range(50):
                u1, u2 = rng.standard_normal(d), rng.standard_normal(d)
                gamma = float(rng.uniform(0.5, 3.0))
                p1 = prox_h(ProxRequest(h, u1, gamma))
                p2 = prox_h(ProxRequest(h, u2, gamma))
                assert np.linalg.norm(p1 - p2) <= np.linalg.norm(u1 - u2) + 1e-10


class TestL1Projection:
    def test_interior_unchanged(self):
        v = np.array([0.2, -0.3])
        np.testing.assert_array_equal(project_l1_ball(v, 1.0), v)

    def test_symmetric_split(self):
        np.testing.assert_allclose(
            project_l1_ball(np.array([1.0, 1.0]), 1.0), [0.5, 0.5]
        )

    def test_sorted_threshold_case(self):
        np.testing.assert_allclose(
            project_l1_ball(np.array([2.0, -1.0, 0.0]), 1.0), [1.0, 0.0, 0.0]
        )

    def test_active_projection_lands_on_sphere(self, rng):
        for _ in range(100):
            v = 4.0 * rng.standard_normal(6)
            if np.abs(v).sum() <= 1.0:
                continue
            out = project_l1_ball(v, 1.0)
            assert abs(np.abs(out).sum() - 1.0) <= 1e-10

    def test_idempotent(self, rng):
        for _ in range(50):
            v = 3.0 * rng.standard_normal(5)
            once = project_l1_ball(v, 1.3)
            twice = project_l1_ball(once, 1.3)
            np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_matches_bruteforce_on_grid(self):
        grid = [-2.0, -1.0, 0.0, 1.0, 2.0]
        for radius in (0.5, 1.0, 2.0):
            for v in itertools.product(grid, repeat=3):
                v = np.array(v)
                fast = project_l1_ball(v, radius)
                slow = l1_projection_bruteforce(v, radius)
                np.testing.assert_allclose(fast, slow, atol=1e-9)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ParameterError):
            project_l1_ball(np.ones(2), 0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(
            st.floats(-50, 50, allow_nan=False, allow_infinity=False),
            min_size=1,
            max_size=8,
        ),
        st.floats(0.1, 10.0),
    )
    def test_projection_properties(self, values, radius):
        v = np.array(values)
        out = project_l1_ball(v, radius)
        assert np.abs(out).sum() <= radius * (1 + 1e-9) + 1e-9
        # never overshoots: projection shrinks coordinates toward zero
        assert np.all(np.abs(out) <= np.abs(v) + 1e-12)
        assert np.all(out * v >= -1e-12)


class TestZSubproblem:
    def test_identity_without_g0(self):
        prob = CompositeProblem.create([quad(np.zeros((2, 2)))], NonsmoothSpec.zero())
        out = solve_z_subproblem(prob, np.array([5.0, 5.0]), beta=0.1)
        np.testing.assert_allclose(out, [5.0, 5.0])

    def test_quadratic_g0_fixed_point(self):
        prob = CompositeProblem.create(
            [quad(np.zeros((2, 2)))], NonsmoothSpec.zero(), g0=quad(np.eye(2))
        )
        out = solve_z_subproblem(prob, np.array([1.1, 0.0]), beta=0.1)
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-9)

    def test_projection_case(self):
        prob = CompositeProblem.create(
            [quad(np.zeros((2, 2)))], NonsmoothSpec.l1_ball(1.0)
        )
        out = solve_z_subproblem(prob, np.array([3.0, 0.0]), beta=0.7)
        np.testing.assert_allclose(out, [1.0, 0.0])

    def test_residual_contract_with_g0(self, rng):
        prob = CompositeProblem.create(
            [quad(np.zeros((3, 3)))],
            NonsmoothSpec.l1_ball(1.0),
            g0=quad(np.eye(3) * 0.8, rng.standard_normal(3)),
        )
        beta = 0.2  # 1/beta = 5 > 3 * L0 = 2.4
        u = rng.standard_normal(3)
        z = solve_z_subproblem(prob, u, beta, tol=1e-12)
        again = prox_h(
            ProxRequest(prob.h, u - beta * prob.g0.grad(z), gamma=1.0 / beta)
        )
        assert np.linalg.norm(z - again) <= 1e-11

    def test_rejects_beta_violating_contraction(self):
        prob = CompositeProblem.create(
            [quad(np.zeros((2, 2)))], NonsmoothSpec.zero(), g0=quad(np.eye(2))
        )
        with pytest.raises(ParameterError, match="3\\*L0"):
            solve_z_subproblem(prob, np.zeros(2), beta=0.5)

    def test_iteration_cap_carries_residual(self):
        prob = CompositeProblem.create(
            [quad(np.zeros((2, 2)))], NonsmoothSpec.zero(), g0=quad(np.eye(2))
        )
        with pytest.raises(ConvergenceError) as err:
            solve_z_subproblem(prob, np.array([10.0, 0.0]), 0.3, tol=0.0, max_iters=2)
        assert err.value.residual > 0
