"""Fixed-step symplectic integration of Hamilton's equations on [0, 1].

Two one-step maps are provided: the implicit midpoint rule (general H,
Newton-solved) and Stormer-Verlet (separable H only).  Both are second
order and symplectic.  Tangent flows are accumulated from the exact
derivative of each discrete step (for the midpoint rule, the Cayley
transform obtained by differentiating the Newton fixed point), so the
computed monodromy matrices are symplectic to solver tolerance.

Finite-time escape is a legitimate outcome, reported as a BlowUp status
with the threshold-crossing time rather than raised as an error.  The
sup-norm threshold is a numerical proxy for "the flow fails to exist";
it is surfaced in results, never hidden.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    HamiltonianSystem,
    TimeGrid,
    Trajectory,
    as_point,
    hamiltonian_hessian,
    linearized_field_matrix,
)
from .errors import (
    DimensionMismatchError,
    FlowIncompleteError,
    NewtonConvergenceError,
    NonFiniteError,
    NotSeparableError,
)


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "implicit-midpoint"
    step: float = 1e-3
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    blowup_threshold: float = 1e8
    max_step_halvings: int = 26
    hessian_fd_step: float = 1e-6

    def __post_init__(self):
        if self.scheme not in ("implicit-midpoint", "stormer-verlet"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (0.0 < self.step <= 1.0):
            raise ValueError("step must lie in (0, 1]")
        if self.newton_tol <= 0 or self.blowup_threshold <= 0:
            raise ValueError("tolerances and thresholds must be positive")


@dataclass(frozen=True)
class Completed:
    pass


@dataclass(frozen=True)
class BlowUp:
    t_escape: float


@dataclass(frozen=True)
class NewtonFailure:
    t: float


@dataclass(frozen=True)
class FlowResult:
    trajectory: Trajectory
    status: object

    @property
    def completed(self):
        return isinstance(self.status, Completed)


def state_norm(u, p):
    """Sup-norm size of a phase-space state, max|u| + max|p|."""
    return float(np.max(np.abs(u)) + np.max(np.abs(p)))


def _field(sys, t, z):
    r = z.shape[-1] // 2
    u, p = z[..., :r], z[..., r:]
    du = np.asarray(sys.grad_p(t, u, p), dtype=float)
    dp = -np.asarray(sys.grad_u(t, u, p), dtype=float)
    return np.concatenate([du, dp], axis=-1)


class _Escape(Exception):
    """Internal signal: the state crossed the blow-up threshold."""

    def __init__(self, t, z):
        self.t = t
        self.z = z


# ---------------------------------------------------------------------------
# One-step maps
# ---------------------------------------------------------------------------

def _midpoint_step(sys, t, z, h, cfg, want_tangent=False):
    """One implicit-midpoint step from z at time t.

    Solves z' = z + h X_H(t + h/2, (z + z')/2) by Newton iteration; one
    extra polish update is applied after the residual test passes, so the
    returned state sits at the fixed point to roundoff.
    """
    two_r = z.size
    eye = np.eye(two_r)
    z2 = z + h * _field(sys, t, z)
    converged = False
    a_mid = None
    for _ in range(cfg.newton_max_iter):
        m = 0.5 * (z + z2)
        if not np.all(np.isfinite(m)):
            raise NewtonConvergenceError(f"midpoint iterate not finite at t={t}")
        xm = _field(sys, t + 0.5 * h, m)
        g = z2 - z - h * xm
        if not np.all(np.isfinite(g)):
            raise NewtonConvergenceError(f"midpoint residual not finite at t={t}")
        r = m.size // 2
        a_mid = linearized_field_matrix(sys, t + 0.5 * h, m[:r], m[r:], cfg.hessian_fd_step)
        try:
            delta = np.linalg.solve(eye - 0.5 * h * a_mid, -g)
        except np.linalg.LinAlgError as exc:
            raise NewtonConvergenceError(f"singular Newton matrix at t={t}") from exc
        z2 = z2 + delta
        scale = 1.0 + max(np.max(np.abs(z)), np.max(np.abs(z2)))
        if np.max(np.abs(g)) <= cfg.newton_tol * scale:
            converged = True
            break
    if not converged:
        raise NewtonConvergenceError(f"midpoint Newton stalled at t={t}")
    if not want_tangent:
        return z2, None
    m = 0.5 * (z + z2)
    r = m.size // 2
    a_mid = linearized_field_matrix(sys, t + 0.5 * h, m[:r], m[r:], cfg.hessian_fd_step)
    tangent = np.linalg.solve(eye - 0.5 * h * a_mid, eye + 0.5 * h * a_mid)
    return z2, tangent


def _verlet_step(sys, t, z, h, cfg, want_tangent=False):
    """Kick-drift-kick composition for separable H = T(p) + V(u)."""
    if not sys.separable:
        raise NotSeparableError(f"system {sys.name!r} is not declared separable")
    r = z.size // 2
    u, p = z[:r], z[r:]
    p_half = p - 0.5 * h * np.asarray(sys.grad_u(t, u, p), dtype=float)
    u_new = u + h * np.asarray(sys.grad_p(t + 0.5 * h, u, p_half), dtype=float)
    p_new = p_half - 0.5 * h * np.asarray(sys.grad_u(t + h, u_new, p_half), dtype=float)
    z2 = np.concatenate([u_new, p_new])
    if not np.all(np.isfinite(z2)):
        raise NewtonConvergenceError(f"Verlet step not finite at t={t}")
    if not want_tangent:
        return z2, None

    def kick(tt, uu, pp):
        huu = hamiltonian_hessian(sys, tt, uu, pp, cfg.hessian_fd_step)[0]
        m = np.eye(2 * r)
        m[r:, :r] = -0.5 * h * huu
        return m

    def drift(tt, uu, pp):
        hpp = hamiltonian_hessian(sys, tt, uu, pp, cfg.hessian_fd_step)[2]
        m = np.eye(2 * r)
        m[:r, r:] = h * hpp
        return m

    tangent = kick(t + h, u_new, p_half) @ drift(t + 0.5 * h, u, p_half) @ kick(t, u, p)
    return z2, tangent


def _step_once(sys, t, z, h, cfg, want_tangent=False):
    if cfg.scheme == "stormer-verlet":
        return _verlet_step(sys, t, z, h, cfg, want_tangent)
    return _midpoint_step(sys, t, z, h, cfg, want_tangent)


def step_implicit_midpoint(sys: HamiltonianSystem, t, u, p, h, cfg: Optional[IntegratorConfig] = None):
    """Public one-step implicit midpoint map; returns (u', p')."""
    cfg = cfg or IntegratorConfig(step=min(h, 1.0))
    r = sys.dim
    z = np.concatenate([as_point(u, r), as_point(p, r)])
    z2, _ = _midpoint_step(sys, t, z, h, cfg)
    return z2[:r], z2[r:]


def step_stormer_verlet(sys: HamiltonianSystem, t, u, p, h, cfg: Optional[IntegratorConfig] = None):
    """Public one-step Stormer-Verlet map for separable systems."""
    cfg = cfg or IntegratorConfig(scheme="stormer-verlet", step=min(h, 1.0))
    r = sys.dim
    z = np.concatenate([as_point(u, r), as_point(p, r)])
    z2, _ = _verlet_step(sys, t, z, h, cfg)
    return z2[:r], z2[r:]


# ---------------------------------------------------------------------------
# Flow over an interval
# ---------------------------------------------------------------------------

def _advance(sys, t, z, h, cfg, depth, want_tangent):
    """Advance one interval of width h, halving the step on Newton failure.

    Raises _Escape as soon as the state crosses the blow-up threshold and
    NewtonConvergenceError if the smallest permitted substep still fails.
    Returns (z_new, tangent_over_interval_or_None).
    """
    try:
        z2, m = _step_once(sys, t, z, h, cfg, want_tangent)
    except NewtonConvergenceError:
        if depth >= cfg.max_step_halvings:
            raise
        z_mid, m1 = _advance(sys, t, z, 0.5 * h, cfg, depth + 1, want_tangent)
        z_end, m2 = _advance(sys, t + 0.5 * h, z_mid, 0.5 * h, cfg, depth + 1, want_tangent)
        return z_end, (m2 @ m1 if want_tangent else None)
    r = z2.size // 2
    if state_norm(z2[:r], z2[r:]) > cfg.blowup_threshold:
        raise _Escape(t + h, z2)
    return z2, m


def _analytic_flow_result(sys, u0, p0, cfg, t0, t1):
    n_steps = max(2, int(round((t1 - t0) / cfg.step)))
    grid = TimeGrid.uniform(n_steps, t0, t1)
    us, ps = [], []
    for t in grid.nodes:
        u, p = sys.analytic_flow(t, u0, p0)
        us.append(np.atleast_1d(np.asarray(u, dtype=float)))
        ps.append(np.atleast_1d(np.asarray(p, dtype=float)))
    traj = Trajectory(grid, np.stack(us), np.stack(ps))
    return FlowResult(traj, Completed())


def flow_with_jacobian(sys: HamiltonianSystem, u0, p0, cfg: IntegratorConfig,
                       t0=0.0, t1=1.0, want_jacobian=True):
    """Integrate from (u0, p0) over [t0, t1], optionally with the tangent flow.

    Returns (FlowResult, jacobian or None).  The jacobian is None whenever
    the flow does not complete.
    """
    r = sys.dim
    u0 = as_point(u0, r)
    p0 = as_point(p0, r)

    if sys.analytic_only:
        res = _analytic_flow_result(sys, u0, p0, cfg, t0, t1)
        jac = None
        if want_jacobian:
            if sys.analytic_flow_jacobian is not None:
                jac = np.asarray(sys.analytic_flow_jacobian(t1 - t0, u0, p0), dtype=float)
            else:
                jac = _fd_flow_jacobian(sys, u0, p0, t1 - t0)
        return res, jac

    span = t1 - t0
    n_steps = max(2, int(round(span / cfg.step)))
    h = span / n_steps
    z = np.concatenate([u0, p0])
    jac = np.eye(2 * r) if want_jacobian else None
    times = [t0]
    states = [z]
    status = Completed()
    for k in range(n_steps):
        t = t0 + k * h
        try:
            z, m = _advance(sys, t, z, h, cfg, 0, want_jacobian)
        except _Escape as esc:
            times.append(esc.t)
            states.append(esc.z)
            status = BlowUp(t_escape=esc.t)
            jac = None
            break
        except NewtonConvergenceError:
            last = states[-1]
            if state_norm(last[:r], last[r:]) > cfg.blowup_threshold / 10.0:
                status = BlowUp(t_escape=t)
            else:
                status = NewtonFailure(t=t)
            jac = None
            break
        if want_jacobian:
            jac = m @ jac
        times.append(t + h if k < n_steps - 1 else t1)
        states.append(z)
    states = np.stack(states)
    traj = Trajectory(TimeGrid(np.asarray(times)), states[:, :r], states[:, r:])
    return FlowResult(traj, status), jac


def integrate_flow(sys: HamiltonianSystem, u0, p0, cfg: IntegratorConfig, t0=0.0, t1=1.0):
    """March Hamilton's equations to t1 or stop at the blow-up threshold."""
    res, _ = flow_with_jacobian(sys, u0, p0, cfg, t0, t1, want_jacobian=False)
    return res


def _fd_flow_jacobian(sys, u0, p0, span, delta=1e-6):
    """Central-difference flow jacobian for analytic-flow systems."""
    r = u0.size
    cols = []
    for idx in range(2 * r):
        e = np.zeros(2 * r)
        e[idx] = delta
        up, pp = sys.analytic_flow(span, u0 + e[:r], p0 + e[r:])
        um, pm = sys.analytic_flow(span, u0 - e[:r], p0 - e[r:])
        zp = np.concatenate([np.atleast_1d(up), np.atleast_1d(pp)])
        zm = np.concatenate([np.atleast_1d(um), np.atleast_1d(pm)])
        cols.append((zp - zm) / (2 * delta))
    return np.stack(cols, axis=1)


def flow_jacobian(sys: HamiltonianSystem, u0, p0, cfg: IntegratorConfig, t0=0.0, t1=1.0):
    """Derivative of the time-t1 flow with respect to the initial state.

    Integrates the tangent flow alongside the trajectory using the exact
    derivative of each discrete step.  A collapsed span returns the
    identity.  Raises FlowIncompleteError if the flow does not reach t1.
    """
    if t1 == t0:
        return np.eye(2 * sys.dim)
    res, jac = flow_with_jacobian(sys, u0, p0, cfg, t0, t1, want_jacobian=True)
    if not res.completed:
        raise FlowIncompleteError(res.status)
    return jac


def canonical_skew(two_r):
    r = two_r // 2
    j = np.zeros((two_r, two_r))
    j[:r, r:] = np.eye(r)
    j[r:, :r] = -np.eye(r)
    return j


def symplecticity_defect(jac):
    """Max-norm defect of J^T S J - S for the canonical skew form S."""
    jac = np.asarray(jac, dtype=float)
    if jac.ndim != 2 or jac.shape[0] != jac.shape[1] or jac.shape[0] % 2 != 0:
        raise DimensionMismatchError(f"need a square even-dimensional matrix, got {jac.shape}")
    s = canonical_skew(jac.shape[0])
    return float(np.max(np.abs(jac.T @ s @ jac - s)))


def energy_drift(sys: HamiltonianSystem, traj: Trajectory):
    """Max |H(t) - H(0)| along a trajectory (meaningful for autonomous H)."""
    t = traj.grid.nodes
    vals = np.array([
        sys.hamiltonian(t[k], traj.positions[k], traj.momenta[k]) for k in range(len(t))
    ])
    if not np.all(np.isfinite(vals)):
        raise NonFiniteError("energy evaluation not finite along trajectory")
    return float(np.max(np.abs(vals - vals[0])))


# ---------------------------------------------------------------------------
# Batched flows (multistart workhorse)
# ---------------------------------------------------------------------------

def _field_batch(sys, t, Z):
    r = Z.shape[1] // 2
    U, P = Z[:, :r], Z[:, r:]
    if sys.vectorized:
        du = np.asarray(sys.grad_p(t, U, P), dtype=float)
        dp = -np.asarray(sys.grad_u(t, U, P), dtype=float)
        return np.concatenate([du, dp], axis=1)
    return np.stack([_field(sys, t, Z[b]) for b in range(Z.shape[0])])


def _linearized_batch(sys, t, Z, fd_step):
    r = Z.shape[1] // 2
    if sys.vectorized:
        return linearized_field_matrix(sys, t, Z[:, :r], Z[:, r:], fd_step)
    return np.stack([
        linearized_field_matrix(sys, t, Z[b, :r], Z[b, r:], fd_step) for b in range(Z.shape[0])
    ])


def _batch_solve(mats, rhs):
    try:
        return np.linalg.solve(mats, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(rhs)
        for b in range(mats.shape[0]):
            try:
                out[b] = np.linalg.solve(mats[b], rhs[b])
            except np.linalg.LinAlgError:
                out[b] = np.linalg.pinv(mats[b]) @ rhs[b]
        return out


def _midpoint_step_batch(sys, t, Z, h, cfg, want_tangent, tangent_exact=True):
    """Implicit midpoint over a batch of states; returns (Z', ok, tangents).

    The Newton matrix is assembled once per step at the predictor midpoint
    and frozen across iterations (the fixed point is unchanged; convergence
    stays fast at integration step sizes).  Tangent maps are Cayley
    transforms and therefore symplectic in either mode; ``tangent_exact``
    re-evaluates the linearization at the converged midpoint, which makes
    the tangent the exact derivative of the discrete step.
    """
    bsz, two_r = Z.shape
    eye = np.eye(two_r)
    with np.errstate(all="ignore"):
        Z2 = Z + h * _field_batch(sys, t, Z)
        ok = np.all(np.isfinite(Z2), axis=1)
        Z2 = np.where(ok[:, None], Z2, Z)
        m0 = np.where(ok[:, None], 0.5 * (Z + Z2), 0.0)
        a_mat = _linearized_batch(sys, t + 0.5 * h, m0, cfg.hessian_fd_step)
        a_mat = np.where(np.isfinite(a_mat), a_mat, 0.0)
        newton_mat = eye[None] - 0.5 * h * a_mat
    done = np.zeros(bsz, dtype=bool)
    for _ in range(cfg.newton_max_iter):
        active = ok & ~done
        if not active.any():
            break
        with np.errstate(all="ignore"):
            g = Z2 - Z - h * _field_batch(sys, t + 0.5 * h, 0.5 * (Z + Z2))
            finite = np.all(np.isfinite(g), axis=1)
            ok &= finite | done
            active &= finite
            if not active.any():
                break
            delta = _batch_solve(newton_mat, np.where(np.isfinite(g), -g, 0.0))
            gn = np.max(np.abs(np.where(finite[:, None], g, np.inf)), axis=1)
            scale = 1.0 + np.maximum(np.max(np.abs(Z), axis=1), np.max(np.abs(Z2), axis=1))
            Z2 = np.where((active[:, None]) & np.isfinite(delta), Z2 + delta, Z2)
        done |= active & (gn <= cfg.newton_tol * scale)
    ok &= done
    tangents = None
    if want_tangent:
        with np.errstate(all="ignore"):
            if tangent_exact:
                m_final = np.where(ok[:, None], 0.5 * (Z + Z2), 0.0)
                a_mat = _linearized_batch(sys, t + 0.5 * h, m_final, cfg.hessian_fd_step)
                a_mat = np.where(np.isfinite(a_mat), a_mat, 0.0)
            rhs = eye[None] + 0.5 * h * a_mat
            try:
                tangents = np.linalg.solve(eye[None] - 0.5 * h * a_mat, rhs)
            except np.linalg.LinAlgError:
                tangents = np.stack([
                    np.linalg.lstsq(eye - 0.5 * h * a_mat[b], rhs[b], rcond=None)[0]
                    for b in range(bsz)
                ])
    return Z2, ok, tangents


def _analytic_batch(sys, U0, P0, cfg, t0, t1, want_jacobian, store_path):
    bsz, r = U0.shape
    n_steps = max(2, int(round((t1 - t0) / cfg.step)))
    grid = TimeGrid.uniform(n_steps, t0, t1)
    path_u = np.empty((len(grid), bsz, r))
    path_p = np.empty_like(path_u)
    for i, t in enumerate(grid.nodes):
        if sys.vectorized:
            u, p = sys.analytic_flow(t, U0, P0)
            path_u[i], path_p[i] = u, p
        else:
            for b in range(bsz):
                u, p = sys.analytic_flow(t, U0[b], P0[b])
                path_u[i, b], path_p[i, b] = u, p
    ok = np.all(np.isfinite(path_u), axis=(0, 2)) & np.all(np.isfinite(path_p), axis=(0, 2))
    jac = None
    if want_jacobian:
        jac = np.empty((bsz, 2 * r, 2 * r))
        for b in range(bsz):
            if sys.analytic_flow_jacobian is not None:
                jac[b] = sys.analytic_flow_jacobian(t1 - t0, U0[b], P0[b])
            else:
                jac[b] = _fd_flow_jacobian(sys, U0[b], P0[b], t1 - t0)
    return grid, (path_u, path_p) if store_path else None, ok, jac


def flow_batch(sys: HamiltonianSystem, U0, P0, cfg: IntegratorConfig,
               t0=0.0, t1=1.0, want_jacobian=False, store_path=False,
               tangent_exact=True):
    """Integrate a batch of initial states over [t0, t1] simultaneously.

    No step-halving fallback: members whose Newton solve fails or that cross
    the blow-up threshold are flagged out via the ``ok`` mask.  Returns
    (grid, path or None, U1, P1, ok, jacobians or None) where path is a pair
    of (n_nodes, batch, r) arrays.
    """
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    bsz, r = U0.shape
    if sys.analytic_only:
        grid, path, ok, jac = _analytic_batch(sys, U0, P0, cfg, t0, t1, want_jacobian, True)
        pu, pp = path
        result_path = (pu, pp) if store_path else None
        return grid, result_path, pu[-1], pp[-1], ok, jac

    span = t1 - t0
    n_steps = max(2, int(round(span / cfg.step)))
    h = span / n_steps
    grid = TimeGrid.uniform(n_steps, t0, t1)
    Z = np.concatenate([U0, P0], axis=1)
    ok = np.all(np.isfinite(Z), axis=1)
    jac = np.tile(np.eye(2 * r), (bsz, 1, 1)) if want_jacobian else None
    path_u = np.empty((n_steps + 1, bsz, r)) if store_path else None
    path_p = np.empty((n_steps + 1, bsz, r)) if store_path else None
    if store_path:
        path_u[0], path_p[0] = U0, P0
    for k in range(n_steps):
        t = t0 + k * h
        Znew, step_ok, tangents = _midpoint_step_batch(
            sys, t, Z, h, cfg, want_jacobian, tangent_exact)
        ok &= step_ok
        with np.errstate(all="ignore"):
            norms = np.max(np.abs(Znew[:, :r]), axis=1) + np.max(np.abs(Znew[:, r:]), axis=1)
        ok &= np.isfinite(norms) & (norms <= cfg.blowup_threshold)
        Z = np.where(ok[:, None], Znew, Z)
        if want_jacobian:
            upd = np.einsum("bij,bjk->bik", np.where(ok[:, None, None], tangents, 0.0), jac)
            jac = np.where(ok[:, None, None], upd, jac)
        if store_path:
            path_u[k + 1], path_p[k + 1] = Z[:, :r], Z[:, r:]
    path = (path_u, path_p) if store_path else None
    return grid, path, Z[:, :r], Z[:, r:], ok, jac
