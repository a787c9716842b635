"""Isotropy and rank certification of projected solution sets."""

import numpy as np

from phasebound.integrators import IntegratorConfig, integrate_flow
from phasebound.shooting import ShootingConfig, solve_dirichlet
from phasebound.systems import (
    make_cotangent_lift,
    make_free_particle,
    make_pendulum,
    make_quartic,
)
from phasebound.verify import (
    frame_defect_and_rank,
    frame_subspace_angles,
    isotropy_defect_bvp,
    isotropy_defect_flow,
    sample_phase_points,
    tangent_frame_bvp,
    tangent_frame_flow,
)


def shooting_cfg(step=1e-3):
    return ShootingConfig(integrator=IntegratorConfig(step=step), seed_count=12)


class TestFlowRoute:
    def test_free_particle(self):
        free = make_free_particle()
        points = sample_phase_points(1, 10, seed=3)
        rep = isotropy_defect_flow(free.system, points, IntegratorConfig(), seed=3)
        assert rep.samples == 10
        assert rep.max_defect <= 1e-12
        assert rep.rank_estimate == 2
        assert rep.seed == 3
        assert "hypothesis" in rep.caveat

    def test_pendulum(self):
        pen = make_pendulum()
        points = sample_phase_points(1, 10, seed=4)
        rep = isotropy_defect_flow(pen.system, points, IntegratorConfig(), seed=4)
        assert rep.max_defect <= 1e-8
        assert rep.rank_estimate == 2

    def test_escaping_sample_is_inapplicable(self):
        quart = make_quartic()
        rep = isotropy_defect_flow(quart.system, [([4.0], [8.0]), ([0.2], [0.1])],
                                   IntegratorConfig())
        assert rep.samples == 1
        assert len(rep.inapplicable) == 1
        assert "BlowUp" in rep.inapplicable[0][2]


class TestBvpRoute:
    def test_free_particle(self):
        free = make_free_particle()
        rep = isotropy_defect_bvp(free.system, [([0.0], [2.0])], shooting_cfg())
        assert rep.samples == 1
        assert rep.max_defect <= 1e-8
        assert rep.rank_estimate == 2

    def test_pendulum_both_branches(self):
        pen = make_pendulum()
        for branch in (0, 1):
            rep = isotropy_defect_bvp(pen.system, [([0.0], [np.pi / 2])], shooting_cfg(),
                                      branch=branch)
            assert rep.samples == 1
            assert rep.max_defect <= 1e-6
            assert rep.rank_estimate == 2

    def test_unreachable_endpoints_inapplicable(self):
        lift = make_cotangent_lift()
        rep = isotropy_defect_bvp(lift.system, [([0.5], [1.0])], shooting_cfg())
        assert rep.samples == 0
        assert len(rep.inapplicable) == 1


class TestFrameAgreement:
    def test_flow_and_bvp_frames_span_the_same_subspace(self):
        pen = make_pendulum()
        u0, p0 = np.array([0.2]), np.array([1.3])
        flow = integrate_flow(pen.system, u0, p0, IntegratorConfig())
        u1 = flow.trajectory.positions[-1]
        frame_flow, status = tangent_frame_flow(pen.system, u0, p0, IntegratorConfig())
        assert status is None
        cfg = ShootingConfig(integrator=IntegratorConfig(step=1e-3), seeds=(p0,))
        frame_bvp = tangent_frame_bvp(pen.system, u0, u1, p0, cfg, fd_step=1e-5)
        angles = frame_subspace_angles(frame_flow, frame_bvp)
        assert np.max(angles) <= 1e-4

    def test_defect_second_order_in_probe_step(self):
        pen = make_pendulum()
        cfg = shooting_cfg()
        sols = solve_dirichlet(pen.system, [0.0], [np.pi / 2], cfg)
        p0 = sols.solutions[0].p0
        defects = []
        steps = (4e-2, 2e-2, 1e-2, 5e-3)
        for fd in steps:
            frame = tangent_frame_bvp(pen.system, np.array([0.0]), np.array([np.pi / 2]),
                                      p0, cfg, fd_step=fd)
            defects.append(frame_defect_and_rank(frame)[0])
        slope = np.polyfit(np.log(steps), np.log(defects), 1)[0]
        assert abs(slope - 2.0) <= 0.2


class TestCotangentLiftGraph:
    def test_projected_solutions_lie_on_the_base_flow_graph(self):
        lift = make_cotangent_lift()
        x_flow = lift.facts["x_flow"]
        rng = np.random.default_rng(9)
        worst = 0.0
        for _ in range(6):
            u0 = rng.uniform(-1, 1, 1)
            p0 = rng.uniform(-1, 1, 1)
            res = integrate_flow(lift.system, u0, p0, IntegratorConfig(step=1e-4))
            u1 = res.trajectory.positions[-1]
            worst = max(worst, float(np.abs(u1 - x_flow(1.0, u0)).max()))
        assert worst <= 1e-8
