"""Bundled systems: closed-form facts and the small-kinetic-term limit."""

import numpy as np
import pytest

from phasebound.core import check_gradients
from phasebound.errors import NegativeLambdaError, NonPositiveMassError
from phasebound.integrators import IntegratorConfig, energy_drift, integrate_flow
from phasebound.shooting import ShootingConfig, solve_dirichlet
from phasebound.systems import (
    constant_vector_field,
    linear_vector_field,
    make_cotangent_lift,
    make_example,
    make_free_particle,
    make_lambda_family,
    make_pendulum,
    make_quartic,
    make_sphere_geodesics,
    second_order_residual,
    topological_limit_study,
)


def cfg(step=1e-3):
    return IntegratorConfig(step=step)


class TestConstructors:
    def test_nonpositive_mass_rejected(self):
        with pytest.raises(NonPositiveMassError):
            make_free_particle(m=0.0)
        with pytest.raises(NonPositiveMassError):
            make_quartic(m=-1.0)
        with pytest.raises(NonPositiveMassError):
            make_pendulum(m=1.0, k=0.0)

    def test_negative_lambda_rejected(self):
        with pytest.raises(NegativeLambdaError):
            make_lambda_family(-0.5)

    def test_registry_round_trip(self):
        ex = make_example("pendulum", m=2.0, k=3.0)
        assert ex.facts["small_angle_frequency"] == pytest.approx(np.sqrt(1.5))
        with pytest.raises(KeyError):
            make_example("nonesuch")

    def test_gradient_contract(self):
        for ex in (make_free_particle(), make_quartic(), make_pendulum(),
                   make_sphere_geodesics(), make_cotangent_lift(), make_lambda_family(0.7)):
            r = ex.system.dim
            probes = [(0.0, np.full(r, 0.4), np.full(r, 0.8))]
            assert check_gradients(ex.system, probes) <= 1e-6


class TestFreeParticle:
    def test_unit_mass_flow(self):
        free = make_free_particle()
        u, p = free.facts["flow"](1.0, np.array([0.0]), np.array([1.0]))
        np.testing.assert_allclose([u[0], p[0]], [1.0, 1.0])

    def test_heavier_mass_flow(self):
        free = make_free_particle(m=2.0)
        res = integrate_flow(free.system, [0.0], [1.0], cfg())
        np.testing.assert_allclose(res.trajectory.positions[-1], [0.5], atol=1e-12)

    def test_principal_function_fact(self):
        free = make_free_particle()
        assert free.facts["principal_function"]([0.0], [2.0]) == pytest.approx(2.0)


class TestQuartic:
    def test_escape_time_fact(self):
        quart = make_quartic()
        assert quart.facts["escape_time"](4.0) == pytest.approx(0.5)
        assert quart.facts["blows_up"](4.0)
        assert not quart.facts["blows_up"](1.0)

    def test_growing_branch_reaches_two(self):
        quart = make_quartic()
        res = integrate_flow(quart.system, [1.0], [0.5], cfg(5e-4))
        np.testing.assert_allclose(res.trajectory.positions[-1], [2.0], atol=1e-6)

    def test_decaying_branch(self):
        quart = make_quartic()
        res = integrate_flow(quart.system, [1.0], [-0.5], cfg(5e-4))
        np.testing.assert_allclose(res.trajectory.positions[-1], [2.0 / 3.0], atol=1e-6)


class TestSphere:
    def test_antipode_at_speed_pi(self):
        sph = make_sphere_geodesics()
        north = sph.facts["north_pole"]
        u1, _ = sph.facts["flow"](1.0, north, np.pi * np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(u1, -north, atol=1e-12)

    def test_zero_momentum_rest(self):
        sph = make_sphere_geodesics()
        north = sph.facts["north_pole"]
        u1, p1 = sph.facts["flow"](1.0, north, np.zeros(3))
        np.testing.assert_allclose(u1, north)
        np.testing.assert_allclose(p1, np.zeros(3))

    def test_flow_jacobian_matches_differences(self):
        from phasebound.integrators import _fd_flow_jacobian

        sph = make_sphere_geodesics()
        u0 = np.array([0.0, 0.0, 1.0])
        p0 = np.array([0.8, 0.4, 0.0])
        exact = sph.system.analytic_flow_jacobian(1.0, u0, p0)
        fd = _fd_flow_jacobian(sph.system, u0, p0, 1.0)
        np.testing.assert_allclose(exact, fd, atol=1e-7)

    def test_stays_on_sphere_for_tangent_data(self):
        sph = make_sphere_geodesics()
        res = integrate_flow(sph.system, [0.0, 0.0, 1.0], [1.3, 0.0, 0.0], cfg())
        radii = np.linalg.norm(res.trajectory.positions, axis=1)
        np.testing.assert_allclose(radii, 1.0, atol=1e-12)


class TestCotangentLift:
    def test_constant_field_translation(self):
        X, dX, d2X, x_flow = constant_vector_field([0.7])
        lift = make_cotangent_lift(X, dX, d2X, dim=1, x_flow=x_flow)
        res = integrate_flow(lift.system, [0.2], [1.4], cfg())
        np.testing.assert_allclose(res.trajectory.positions[-1], [0.9], atol=1e-10)
        np.testing.assert_allclose(res.trajectory.momenta[-1], [1.4], atol=1e-10)

    def test_linear_field_exponential(self):
        lift = make_cotangent_lift()
        res = integrate_flow(lift.system, [1.0], [1.0], cfg(1e-4))
        np.testing.assert_allclose(res.trajectory.positions[-1], [np.e], atol=1e-8)
        np.testing.assert_allclose(res.trajectory.momenta[-1], [1 / np.e], atol=1e-8)

    def test_off_graph_unreachable(self):
        X, dX, d2X, x_flow = constant_vector_field([1.0])
        lift = make_cotangent_lift(X, dX, d2X, dim=1, x_flow=x_flow)
        sols = solve_dirichlet(lift.system, [0.0], [0.5],
                               ShootingConfig(integrator=cfg(), seed_count=8))
        assert sols.classification.kind == "NoSolution"


class TestLambdaFamily:
    def test_zero_lambda_matches_cotangent_lift(self):
        X, dX, d2X, x_flow = linear_vector_field(1)
        fam = make_lambda_family(0.0, X, dX, d2X, dim=1, x_flow=x_flow)
        lift = make_cotangent_lift(X, dX, d2X, dim=1, x_flow=x_flow)
        rng = np.random.default_rng(8)
        for _ in range(5):
            u = rng.uniform(-1, 1, 1)
            p = rng.uniform(-1, 1, 1)
            assert fam.system.hamiltonian(0.0, u, p) == pytest.approx(
                lift.system.hamiltonian(0.0, u, p))
            np.testing.assert_allclose(fam.system.grad_p(0.0, u, p),
                                       lift.system.grad_p(0.0, u, p))

    def test_constant_field_momentum_formula(self):
        X, dX, d2X, x_flow = constant_vector_field([1.0])
        lam = 0.25
        fam = make_lambda_family(lam, X, dX, d2X, dim=1, x_flow=x_flow)
        sols = solve_dirichlet(fam.system, [0.0], [2.0],
                               ShootingConfig(integrator=cfg(), seed_count=8))
        assert sols.classification.kind == "Unique"
        np.testing.assert_allclose(sols.solutions[0].p0, [(2.0 - 1.0) / lam], atol=1e-8)

    def test_unit_lambda_zero_field_is_free(self):
        fam = make_lambda_family(1.0, *constant_vector_field([0.0])[:3], dim=1)
        free = make_free_particle()
        rng = np.random.default_rng(5)
        for _ in range(5):
            u = rng.uniform(-1, 1, 1)
            p = rng.uniform(-1, 1, 1)
            assert fam.system.hamiltonian(0.0, u, p) == pytest.approx(
                free.system.hamiltonian(0.0, u, p))


class TestTopologicalLimit:
    def test_momentum_diverges_as_inverse_lambda(self):
        lambdas = [1.0, 0.5, 0.25, 0.125]
        report = topological_limit_study(lambdas, [0.0], [2.0])
        for row, lam in zip(report.rows, lambdas):
            assert row.status == "ok"
            np.testing.assert_allclose(row.p0, [1.0 / lam], rtol=1e-6)
            assert row.second_order_residual <= 1e-6
        assert report.momentum_slope == pytest.approx(-1.0, abs=0.05)

    def test_on_graph_momentum_vanishes_and_flowline_converges(self):
        lambdas = [1.0, 0.5, 0.25]
        report = topological_limit_study(lambdas, [0.0], [1.0])  # u1 = u0 + c
        for row in report.rows:
            np.testing.assert_allclose(row.p0, [0.0], atol=1e-9)
            assert row.flowline_distance <= 1e-9

    def test_second_order_residual_detects_non_solutions(self):
        from phasebound.core import TimeGrid, Trajectory

        X, dX, _, _ = constant_vector_field([1.0])
        t = np.linspace(0, 1, 400)
        bogus = Trajectory(TimeGrid(t), (t ** 3)[:, None], np.ones((400, 1)))
        _, norm = second_order_residual(X, dX, bogus)
        assert norm > 1.0


class TestEnergyConservation:
    @pytest.mark.parametrize("maker,state", [
        (make_free_particle, ([0.3], [1.1])),
        (make_quartic, ([0.9], [0.3])),
        (make_pendulum, ([0.4], [1.2])),
        (make_cotangent_lift, ([1.0], [1.0])),
    ])
    def test_drift_within_budget(self, maker, state):
        ex = maker()
        res = integrate_flow(ex.system, state[0], state[1], cfg())
        assert energy_drift(ex.system, res.trajectory) <= 1e-6
