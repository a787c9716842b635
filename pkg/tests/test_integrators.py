"""One-step maps, flows, tangent flows, blow-up handling."""

import numpy as np
import pytest

from phasebound.errors import (
    DimensionMismatchError,
    FlowIncompleteError,
    NotSeparableError,
)
from phasebound.integrators import (
    BlowUp,
    Completed,
    IntegratorConfig,
    energy_drift,
    flow_jacobian,
    integrate_flow,
    step_implicit_midpoint,
    step_stormer_verlet,
    symplecticity_defect,
)
from phasebound.systems import (
    make_cotangent_lift,
    make_free_particle,
    make_pendulum,
    make_quartic,
)


class TestImplicitMidpointStep:
    def test_free_particle_exact(self):
        free = make_free_particle()
        u, p = step_implicit_midpoint(free.system, 0.0, [0.0], [1.0], 0.5)
        np.testing.assert_allclose(u, [0.5], atol=1e-14)
        np.testing.assert_allclose(p, [1.0], atol=1e-14)

    def test_vanishing_step_is_identity(self):
        pen = make_pendulum()
        u, p = step_implicit_midpoint(pen.system, 0.0, [0.7], [0.4], 1e-12)
        np.testing.assert_allclose(u, [0.7], atol=1e-10)
        np.testing.assert_allclose(p, [0.4], atol=1e-10)

    def test_matches_fixed_point_oracle(self):
        # independent solve of the midpoint equations by plain fixed-point iteration
        pen = make_pendulum()
        h = 0.1
        z = np.array([0.0, 1.0])
        z2 = z.copy()
        for _ in range(200):
            m = 0.5 * (z + z2)
            x = np.array([m[1], -np.sin(m[0])])
            z2 = z + h * x
        u, p = step_implicit_midpoint(pen.system, 0.0, [0.0], [1.0], h)
        np.testing.assert_allclose([u[0], p[0]], z2, atol=1e-12)


class TestStormerVerlet:
    def test_pendulum_hand_computed(self):
        pen = make_pendulum()
        u, p = step_stormer_verlet(pen.system, 0.0, [0.0], [1.0], 0.1)
        np.testing.assert_allclose(u, [0.1], atol=1e-14)
        np.testing.assert_allclose(p, [1.0 - 0.05 * np.sin(0.1)], atol=1e-14)

    def test_free_particle_exact_any_step(self):
        free = make_free_particle()
        u, p = step_stormer_verlet(free.system, 0.0, [0.3], [2.0], 0.7)
        np.testing.assert_allclose(u, [0.3 + 0.7 * 2.0], atol=1e-14)
        np.testing.assert_allclose(p, [2.0], atol=1e-14)

    def test_third_order_agreement_with_midpoint(self):
        # both schemes are second order, so single steps differ at O(h^3)
        quart = make_quartic()
        diffs = []
        steps = (0.01, 0.005)
        for h in steps:
            uv, pv = step_stormer_verlet(quart.system, 0.0, [1.0], [0.5], h)
            um, pm = step_implicit_midpoint(quart.system, 0.0, [1.0], [0.5], h)
            diffs.append(max(abs(uv[0] - um[0]), abs(pv[0] - pm[0])))
        assert diffs[0] <= 1e-5
        ratio = diffs[0] / diffs[1]
        assert 6.0 <= ratio <= 10.0  # halving h shrinks the gap ~8x

    def test_requires_separable(self):
        lift = make_cotangent_lift()
        with pytest.raises(NotSeparableError):
            step_stormer_verlet(lift.system, 0.0, [1.0], [1.0], 0.1)


class TestIntegrateFlow:
    def test_free_particle_completes(self):
        free = make_free_particle()
        res = integrate_flow(free.system, [0.0], [1.0], IntegratorConfig())
        assert isinstance(res.status, Completed)
        np.testing.assert_allclose(res.trajectory.positions[-1], [1.0], atol=1e-12)
        np.testing.assert_allclose(res.trajectory.momenta[-1], [1.0], atol=1e-14)

    def test_quartic_escapes_midway(self):
        quart = make_quartic()
        res = integrate_flow(quart.system, [4.0], [8.0], IntegratorConfig())
        assert isinstance(res.status, BlowUp)
        assert 0.45 <= res.status.t_escape <= 0.55
        u_last, p_last = res.trajectory.state(-1)
        assert abs(u_last).max() + abs(p_last).max() > IntegratorConfig().blowup_threshold

    def test_cotangent_lift_endpoint(self):
        lift = make_cotangent_lift()
        res = integrate_flow(lift.system, [1.0], [1.0], IntegratorConfig(step=1e-4))
        np.testing.assert_allclose(res.trajectory.positions[-1], [np.e], atol=1e-8)
        np.testing.assert_allclose(res.trajectory.momenta[-1], [1 / np.e], atol=1e-8)

    def test_verlet_scheme_flow(self):
        pen = make_pendulum()
        cfg = IntegratorConfig(scheme="stormer-verlet", step=1e-3)
        res = integrate_flow(pen.system, [0.5], [0.8], cfg)
        assert res.completed
        assert energy_drift(pen.system, res.trajectory) < 1e-6


class TestFlowJacobian:
    def test_free_particle_shear(self):
        free = make_free_particle()
        jac = flow_jacobian(free.system, [0.0], [1.0], IntegratorConfig())
        np.testing.assert_allclose(jac, [[1.0, 1.0], [0.0, 1.0]], atol=1e-12)

    def test_cotangent_lift_diagonal(self):
        lift = make_cotangent_lift()
        jac = flow_jacobian(lift.system, [1.0], [1.0], IntegratorConfig(step=1e-4))
        np.testing.assert_allclose(jac, np.diag([np.e, 1 / np.e]), atol=1e-8)

    def test_collapsed_span_is_identity(self):
        pen = make_pendulum()
        jac = flow_jacobian(pen.system, [0.3], [0.4], IntegratorConfig(), t0=0.5, t1=0.5)
        np.testing.assert_allclose(jac, np.eye(2))

    def test_incomplete_flow_raises(self):
        quart = make_quartic()
        with pytest.raises(FlowIncompleteError):
            flow_jacobian(quart.system, [4.0], [8.0], IntegratorConfig())


class TestSymplecticity:
    def test_identity(self):
        assert symplecticity_defect(np.eye(4)) == 0.0

    def test_free_particle_monodromy(self):
        free = make_free_particle()
        jac = flow_jacobian(free.system, [0.2], [0.9], IntegratorConfig())
        assert symplecticity_defect(jac) <= 1e-14

    def test_pendulum_monodromy(self):
        pen = make_pendulum()
        jac = flow_jacobian(pen.system, [0.4], [1.3], IntegratorConfig())
        assert symplecticity_defect(jac) <= 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            symplecticity_defect(np.eye(3))


class TestSchemeProperties:
    @pytest.mark.parametrize("scheme", ["implicit-midpoint", "stormer-verlet"])
    def test_energy_drift_second_order(self, scheme):
        pen = make_pendulum()
        steps = [1 / 125, 1 / 250, 1 / 500, 1 / 1000]
        drifts = []
        for h in steps:
            cfg = IntegratorConfig(scheme=scheme, step=h)
            res = integrate_flow(pen.system, [1.0], [0.8], cfg)
            drifts.append(energy_drift(pen.system, res.trajectory))
        slope = np.polyfit(np.log(steps), np.log(drifts), 1)[0]
        assert abs(slope - 2.0) <= 0.2

    def test_flow_composition(self):
        pen = make_pendulum()
        cfg = IntegratorConfig(step=2e-3)
        full = integrate_flow(pen.system, [0.3], [0.9], cfg)
        first = integrate_flow(pen.system, [0.3], [0.9], cfg, t0=0.0, t1=0.5)
        u_m, p_m = first.trajectory.state(-1)
        second = integrate_flow(pen.system, u_m, p_m, cfg, t0=0.5, t1=1.0)
        np.testing.assert_allclose(
            full.trajectory.state(-1)[0], second.trajectory.state(-1)[0], atol=1e-12)
        np.testing.assert_allclose(
            full.trajectory.state(-1)[1], second.trajectory.state(-1)[1], atol=1e-12)

    def test_blowup_monotone_and_near_exact(self):
        quart = make_quartic()
        cfg = IntegratorConfig(step=1e-4, blowup_threshold=1e10)
        escapes = []
        for u0 in (3.0, 4.0, 6.0):
            res = integrate_flow(quart.system, [u0], [u0 ** 2 / 2], cfg)
            assert isinstance(res.status, BlowUp)
            escapes.append(res.status.t_escape)
            assert abs(res.status.t_escape - 2.0 / u0) <= 0.05 * (2.0 / u0)
        assert escapes[0] > escapes[1] > escapes[2]
