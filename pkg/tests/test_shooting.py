"""Boundary-value shooting, principal function, classification."""

import numpy as np
import pytest

from phasebound.core import action_functional
from phasebound.errors import FlowIncompleteError, NoSuchBranchError
from phasebound.integrators import IntegratorConfig, integrate_flow
from phasebound.shooting import (
    ShootingConfig,
    classify_theory,
    generating_function_check,
    hamilton_principal_function,
    shoot_residual,
    solve_dirichlet,
    solve_with_lagrangian_boundary,
)
from phasebound.systems import (
    make_cotangent_lift,
    make_free_particle,
    make_pendulum,
    make_sphere_geodesics,
)


def fast_cfg(step=1e-3, seed_count=12, **kw):
    return ShootingConfig(integrator=IntegratorConfig(step=step), seed_count=seed_count, **kw)


class TestShootResidual:
    def test_free_particle_on_target(self):
        free = make_free_particle()
        res, jac = shoot_residual(free.system, [0.0], [2.0], [2.0], fast_cfg())
        np.testing.assert_allclose(res, [0.0], atol=1e-12)
        np.testing.assert_allclose(jac, [[1.0]], atol=1e-12)

    def test_free_particle_miss(self):
        free = make_free_particle()
        res, jac = shoot_residual(free.system, [0.0], [0.0], [2.0], fast_cfg())
        np.testing.assert_allclose(res, [-2.0], atol=1e-12)
        np.testing.assert_allclose(jac, [[1.0]], atol=1e-12)

    def test_pendulum_self_consistency(self):
        pen = make_pendulum()
        fwd = integrate_flow(pen.system, [0.3], [1.1], IntegratorConfig())
        u1 = fwd.trajectory.positions[-1]
        res, _ = shoot_residual(pen.system, [0.3], [1.1], u1, fast_cfg())
        np.testing.assert_allclose(res, [0.0], atol=1e-12)

    def test_blowup_raises(self):
        from phasebound.systems import make_quartic

        quart = make_quartic()
        with pytest.raises(FlowIncompleteError):
            shoot_residual(quart.system, [4.0], [8.0], [0.0], fast_cfg())


class TestSolveDirichlet:
    def test_free_particle_unique(self):
        free = make_free_particle()
        sols = solve_dirichlet(free.system, [0.0], [2.0], fast_cfg())
        assert sols.classification.kind == "Unique"
        assert abs(sols.solutions[0].p0[0] - 2.0) <= 1e-8

    def test_pendulum_two_branches(self):
        pen = make_pendulum()
        sols = solve_dirichlet(pen.system, [0.0], [np.pi / 2], ShootingConfig())
        assert sols.classification.kind == "MultipleIsolated"
        assert len(sols.solutions) >= 2
        actions = sorted(action_functional(pen.system, b.trajectory) for b in sols.solutions)
        assert actions[1] - actions[0] >= 1e-3

    def test_cotangent_lift_unreachable(self):
        lift = make_cotangent_lift()
        sols = solve_dirichlet(lift.system, [1.0], [1.0], fast_cfg())  # only e*u0 reachable
        assert sols.classification.kind == "NoSolution"

    def test_branch_residual_invariant(self):
        pen = make_pendulum()
        cfg = fast_cfg()
        sols = solve_dirichlet(pen.system, [0.0], [np.pi / 2], cfg)
        for branch in sols.solutions:
            res, _ = shoot_residual(pen.system, [0.0], branch.p0, [np.pi / 2], cfg)
            assert np.abs(res).max() <= cfg.newton_tol * 10


class TestPrincipalFunction:
    def test_free_particle_value(self):
        free = make_free_particle()
        w = hamilton_principal_function(free.system, [0.0], [2.0], fast_cfg())
        assert abs(w - 2.0) <= 1e-6

    def test_static_solution_is_zero(self):
        free = make_free_particle()
        w = hamilton_principal_function(free.system, [0.7], [0.7], fast_cfg())
        assert abs(w) <= 1e-10

    def test_pendulum_branch_values_match_quadrature(self):
        pen = make_pendulum()
        cfg = fast_cfg()
        sols = solve_dirichlet(pen.system, [0.0], [np.pi / 2], cfg)
        w0 = hamilton_principal_function(pen.system, [0.0], [np.pi / 2], cfg, branch=0)
        assert abs(w0 - action_functional(pen.system, sols.solutions[0].trajectory)) <= 1e-12
        w1 = hamilton_principal_function(pen.system, [0.0], [np.pi / 2], cfg, branch=1)
        assert abs(w1 - w0) >= 1e-3

    def test_missing_branch(self):
        free = make_free_particle()
        with pytest.raises(NoSuchBranchError):
            hamilton_principal_function(free.system, [0.0], [2.0], fast_cfg(), branch=5)


class TestGeneratingFunction:
    def test_free_particle_defects(self):
        free = make_free_particle()
        rep = generating_function_check(free.system, [0.0], [2.0], fast_cfg())
        assert rep.defect_u0 <= 1e-6
        assert rep.defect_u1 <= 1e-6
        assert rep.symmetry_defect <= 1e-6

    def test_pendulum_branch_defects(self):
        pen = make_pendulum()
        for branch in (0, 1):
            rep = generating_function_check(pen.system, [0.0], [np.pi / 2], fast_cfg(),
                                            branch=branch)
            assert rep.defect_u0 <= 1e-5
            assert rep.defect_u1 <= 1e-5
            assert rep.symmetry_defect <= 1e-4

    def test_defects_refine_with_probe_step(self):
        pen = make_pendulum()
        coarse = generating_function_check(pen.system, [0.2], [1.1], fast_cfg(), fd_step=1e-3)
        fine = generating_function_check(pen.system, [0.2], [1.1], fast_cfg(), fd_step=1e-5)
        assert fine.symmetry_defect <= coarse.symmetry_defect + 1e-9


class TestClassifyTheory:
    def test_free_particle_dirichlet(self):
        free = make_free_particle()
        rng = np.random.default_rng(0)
        pairs = [(rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)) for _ in range(6)]
        verdict = classify_theory(free.system, pairs, fast_cfg(step=2e-3))
        assert verdict.kind == "Dirichlet"
        assert verdict.heuristic

    def test_pendulum_locally_dirichlet(self):
        pen = make_pendulum()
        rng = np.random.default_rng(1)
        pairs = [(rng.uniform(-2, 2, 1), rng.uniform(-2, 2, 1)) for _ in range(5)]
        verdict = classify_theory(pen.system, pairs, fast_cfg(step=2e-3))
        assert verdict.kind == "LocallyDirichlet"

    def test_cotangent_lift_neither(self):
        lift = make_cotangent_lift()
        pairs = [([1.0], [np.e]), ([0.5], [1.0])]  # one on the reachable graph, one off
        verdict = classify_theory(lift.system, pairs, fast_cfg(step=2e-3))
        assert verdict.kind == "Neither"
        assert verdict.witness is not None

    def test_sphere_antipodal_continuum(self):
        sph = make_sphere_geodesics()
        north = np.array([0.0, 0.0, 1.0])
        tilt = np.array([np.sin(1.0), 0.0, np.cos(1.0)])
        pairs = [(north, -north), (north, tilt)]
        verdict = classify_theory(sph.system, pairs,
                                  fast_cfg(step=1e-2, seed_count=48))
        assert verdict.kind == "Neither"
        assert "Continuum" in verdict.witness


class TestLagrangianBoundary:
    def test_zero_generating_function_static_curves(self):
        # p0 = p1 = 0 forces static curves; Newton lands near its seed
        free = make_free_particle()
        seeds = [(np.array([0.4]), np.array([0.5])), (np.array([-1.2]), np.array([-0.3]))]
        sols = solve_with_lagrangian_boundary(
            free.system, F=lambda u0, u1: 0.0,
            grad_F=lambda u0, u1: (np.zeros(1), np.zeros(1)),
            cfg=fast_cfg(), state_seeds=seeds)
        assert len(sols.solutions) >= 1
        for branch in sols.solutions:
            np.testing.assert_allclose(branch.p0, [0.0], atol=1e-9)
            traj = branch.trajectory
            assert np.abs(traj.positions - traj.positions[0]).max() <= 1e-9

    def test_fixed_endpoints_routes_to_dirichlet(self):
        free = make_free_particle()
        sols = solve_with_lagrangian_boundary(
            free.system, F=None, grad_F=None, cfg=fast_cfg(),
            fixed_endpoints=([0.0], [2.0]))
        assert sols.classification.kind == "Unique"
        assert abs(sols.solutions[0].p0[0] - 2.0) <= 1e-8

    def test_quadratic_boundary_function_pins_endpoint(self):
        # F = (u1 - a)^2 / 2 demands p0 = 0 and p1 = u1 - a, so u == a
        free = make_free_particle()
        a = 1.5
        sols = solve_with_lagrangian_boundary(
            free.system,
            F=lambda u0, u1: 0.5 * float((u1[0] - a) ** 2),
            grad_F=lambda u0, u1: (np.zeros(1), np.array([u1[0] - a])),
            cfg=fast_cfg(), state_seeds=[(np.array([0.0]), np.array([0.3]))])
        assert len(sols.solutions) == 1
        branch = sols.solutions[0]
        np.testing.assert_allclose(branch.p0, [0.0], atol=1e-9)
        np.testing.assert_allclose(branch.trajectory.positions[-1], [a], atol=1e-9)
        assert sols.classification.kind == "Unique"
