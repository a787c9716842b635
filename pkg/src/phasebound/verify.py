"""Numerical certification that projected solution sets are Lagrangian.

The boundary data of all solutions of the equations of motion sweeps out a
subset of T*Q x T*Q.  On tangent frames of that set the boundary two-form
must vanish (isotropy), and a frame rank of 2r certifies maximal dimension,
i.e. a Lagrangian submanifold.  Two independent tangent constructions are
provided: columns (I; DPhi_1) of the time-1 tangent flow, and finite
difference continuation of boundary-value branches in the endpoints.

These checks certify consequences at sample points; the smoothness of the
solution set itself is an hypothesis that numerics cannot confirm, which is
recorded as a caveat in every report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    HamiltonianSystem,
    as_point,
    boundary_omega_matrix,
)
from .errors import BranchLostError
from .integrators import IntegratorConfig, flow_with_jacobian
from .shooting import ShootingConfig, _continue_branch, solve_dirichlet

HYPOTHESIS_CAVEAT = (
    "certifies the vanishing of the boundary two-form on sampled tangent frames; "
    "the smooth-submanifold hypothesis itself is not numerically verifiable"
)

RANK_CUTOFF = 1e-8  # relative singular-value cutoff for frame rank


@dataclass(frozen=True)
class IsotropyReport:
    samples: int
    inapplicable: tuple
    max_defect: float
    tangent_source: str  # "flow-jacobian" | "bvp-continuation"
    rank_estimate: int
    seed: Optional[int] = None
    caveat: str = HYPOTHESIS_CAVEAT


def frame_defect_and_rank(frame):
    """Max |omega(v_i, v_j)| over frame columns, and the numerical frame rank."""
    frame = np.asarray(frame, dtype=float)
    r = frame.shape[0] // 4
    omega = boundary_omega_matrix(r)
    gram = frame.T @ omega @ frame
    defect = float(np.max(np.abs(gram)))
    sv = np.linalg.svd(frame, compute_uv=False)
    rank = int(np.sum(sv > RANK_CUTOFF * sv[0]))
    return defect, rank


def tangent_frame_flow(sys: HamiltonianSystem, u0, p0, cfg: IntegratorConfig):
    """Tangent frame (I; DPhi_1) to the graph of the time-1 flow at (u0, p0).

    Returns a (4r, 2r) matrix in (du0, dp0, du1, dp1) row layout, or None if
    the flow does not complete.
    """
    r = sys.dim
    result, jac = flow_with_jacobian(sys, as_point(u0, r), as_point(p0, r), cfg)
    if not result.completed:
        return None, result.status
    return np.vstack([np.eye(2 * r), jac]), None


def isotropy_defect_flow(sys: HamiltonianSystem, initial_points, cfg: IntegratorConfig,
                         seed=None):
    """Isotropy and rank of flow-graph tangent frames at sampled initial states.

    Points at which the flow does not complete are reported as inapplicable
    (the global-flow hypothesis fails there) rather than as failures.
    """
    defect = 0.0
    rank = None
    inapplicable = []
    n_ok = 0
    for point in initial_points:
        u0, p0 = point
        frame, status = tangent_frame_flow(sys, u0, p0, cfg)
        if frame is None:
            inapplicable.append((np.asarray(u0).tolist(), np.asarray(p0).tolist(),
                                 repr(status)))
            continue
        d, rk = frame_defect_and_rank(frame)
        defect = max(defect, d)
        rank = rk if rank is None else min(rank, rk)
        n_ok += 1
    return IsotropyReport(
        samples=n_ok,
        inapplicable=tuple(inapplicable),
        max_defect=defect,
        tangent_source="flow-jacobian",
        rank_estimate=rank if rank is not None else 0,
        seed=seed,
    )


def tangent_frame_bvp(sys: HamiltonianSystem, u0, u1, p0_branch, cfg: ShootingConfig,
                      fd_step=1e-5):
    """Tangent frame to the projected solution set by endpoint continuation.

    One column per endpoint coordinate displacement, each obtained by
    re-solving the boundary problem warm-started on the given branch.
    """
    r = sys.dim
    u0 = as_point(u0, r)
    u1 = as_point(u1, r)
    max_jump = 1e3 * fd_step
    cols = []
    for a in range(r):
        e = np.zeros(r)
        e[a] = fd_step
        bp = _continue_branch(sys, u0 + e, u1, p0_branch, cfg, max_jump)
        bm = _continue_branch(sys, u0 - e, u1, p0_branch, cfg, max_jump)
        dp0 = (bp.p0 - bm.p0) / (2 * fd_step)
        dp1 = (bp.p1 - bm.p1) / (2 * fd_step)
        cols.append(np.concatenate([e / fd_step, dp0, np.zeros(r), dp1]))
    for a in range(r):
        e = np.zeros(r)
        e[a] = fd_step
        bp = _continue_branch(sys, u0, u1 + e, p0_branch, cfg, max_jump)
        bm = _continue_branch(sys, u0, u1 - e, p0_branch, cfg, max_jump)
        dp0 = (bp.p0 - bm.p0) / (2 * fd_step)
        dp1 = (bp.p1 - bm.p1) / (2 * fd_step)
        cols.append(np.concatenate([np.zeros(r), dp0, e / fd_step, dp1]))
    return np.stack(cols, axis=1)


def isotropy_defect_bvp(sys: HamiltonianSystem, endpoint_samples, cfg: ShootingConfig,
                        fd_step=1e-5, branch=0, seed=None):
    """Isotropy report from boundary-value continuation tangent frames.

    Works branch by branch, so it applies even when no global flow graph is
    available, as long as local solutions exist near the sampled endpoints.
    """
    defect = 0.0
    rank = None
    inapplicable = []
    n_ok = 0
    for pair in endpoint_samples:
        u0 = as_point(pair[0], sys.dim)
        u1 = as_point(pair[1], sys.dim)
        sols = solve_dirichlet(sys, u0, u1, cfg)
        if branch >= len(sols.solutions):
            inapplicable.append((u0.tolist(), u1.tolist(),
                                 f"only {len(sols.solutions)} branches"))
            continue
        try:
            frame = tangent_frame_bvp(sys, u0, u1, sols.solutions[branch].p0, cfg, fd_step)
        except BranchLostError as exc:
            inapplicable.append((u0.tolist(), u1.tolist(), f"branch lost: {exc}"))
            continue
        d, rk = frame_defect_and_rank(frame)
        defect = max(defect, d)
        rank = rk if rank is None else min(rank, rk)
        n_ok += 1
    return IsotropyReport(
        samples=n_ok,
        inapplicable=tuple(inapplicable),
        max_defect=defect,
        tangent_source="bvp-continuation",
        rank_estimate=rank if rank is not None else 0,
        seed=seed,
    )


def frame_subspace_angles(frame_a, frame_b):
    """Principal angles between the column spans of two tangent frames."""
    from scipy.linalg import subspace_angles

    return subspace_angles(np.asarray(frame_a, dtype=float),
                           np.asarray(frame_b, dtype=float))


def sample_phase_points(dim, count, box=(-1.5, 1.5), seed=0):
    """Reproducible random (u0, p0) samples; the seed belongs in the report."""
    rng = np.random.default_rng(seed)
    lo, hi = box
    return [(rng.uniform(lo, hi, dim), rng.uniform(lo, hi, dim)) for _ in range(count)]
