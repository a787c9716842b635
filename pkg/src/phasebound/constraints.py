"""Momentum constraints p = sigma(e) and their presymplectic analysis.

The constrained variational problem extends the phase space with a
multiplier Lambda and the constraint variable e, carrying the degenerate
two-form du^dp and the extended Hamiltonian

    H0(u, p, Lambda, e) = H(u, p) + Lambda . (p - sigma(e)).

Solvability of the dynamics along the kernel of the two-form recovers the
primary constraints: the momentum constraint phi = p - sigma(e) and the
polar constraint psi = Lambda^T dsigma (the multiplier must annihilate the
tangent space of the constraint image N = Im sigma).  The tangency of the
dynamics to the primary constraint set either determines the constraint
velocity D (and then a multiplier rate C, both minimal-norm here since the
defining equations need not pin them uniquely) or produces a secondary
constraint, in which case the probe state is reported unstable.

A Hamiltonian that is constant along the polar directions descends to the
quotient of N by them; ``check_hamiltonian_descends`` certifies this
numerically instead of constructing the quotient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import null_space

from .core import (
    HamiltonianSystem,
    TimeGrid,
    Trajectory,
    as_point,
    grid_derivative,
)
from .errors import (
    GridMismatchError,
    NewtonConvergenceError,
    NonFiniteError,
    OffConstraintError,
    UnstableConstraintError,
)
from .integrators import Completed, IntegratorConfig, NewtonFailure

ON_CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class ConstraintSpec:
    """The momentum constraint p = sigma(e) with its derivative.

    ``sigma``: K-point e (k-vector) -> covector (r-vector).
    ``dsigma``: e -> (r, k) matrix of partial derivatives.
    """

    k_dim: int
    sigma: Callable
    dsigma: Callable
    rank_tol: float = 1e-10
    name: str = "custom"

    def sigma_at(self, e):
        return np.atleast_1d(np.asarray(self.sigma(np.asarray(e, dtype=float)), dtype=float))

    def dsigma_at(self, e):
        d = np.asarray(self.dsigma(np.asarray(e, dtype=float)), dtype=float)
        return d.reshape(d.shape[0], self.k_dim) if d.ndim == 1 else d

    def d2sigma_at(self, e, fd_step=1e-5):
        """Second derivative d2 sigma_a / de_i de_j by differences of dsigma."""
        e = np.asarray(e, dtype=float)
        k = self.k_dim
        base = self.dsigma_at(e)
        out = np.zeros((base.shape[0], k, k))
        for j in range(k):
            step = np.zeros(k)
            step[j] = fd_step
            dp = self.dsigma_at(e + step)
            dm = self.dsigma_at(e - step)
            out[:, :, j] = (dp - dm) / (2 * fd_step)
        return out


@dataclass(frozen=True)
class ExtendedState:
    """A point (u, p, Lambda, e) of the extended phase space."""

    u: np.ndarray
    p: np.ndarray
    lam: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        for nm in ("u", "p", "lam", "e"):
            v = np.atleast_1d(np.asarray(getattr(self, nm), dtype=float))
            if not np.all(np.isfinite(v)):
                raise NonFiniteError(f"extended state component {nm} not finite")
            object.__setattr__(self, nm, v)


def check_dsigma(spec: ConstraintSpec, probes, fd_step=1e-6):
    """Max disagreement between dsigma and central differences of sigma."""
    worst = 0.0
    for e in probes:
        e = np.atleast_1d(np.asarray(e, dtype=float))
        d = spec.dsigma_at(e)
        for j in range(spec.k_dim):
            step = np.zeros(spec.k_dim)
            step[j] = fd_step
            fd = (spec.sigma_at(e + step) - spec.sigma_at(e - step)) / (2 * fd_step)
            worst = max(worst, float(np.abs(fd - d[:, j]).max()))
    return worst


def extended_action(sys: HamiltonianSystem, spec: ConstraintSpec, chi: Trajectory,
                    lambda_path, e_path):
    """Quadrature of the multiplier-extended action along sampled paths."""
    n = len(chi.grid)
    lambda_path = np.atleast_2d(np.asarray(lambda_path, dtype=float))
    e_path = np.atleast_2d(np.asarray(e_path, dtype=float))
    if lambda_path.shape[0] != n or e_path.shape[0] != n:
        raise GridMismatchError("multiplier and constraint paths must share the trajectory grid")
    t = chi.grid.nodes
    du = grid_derivative(chi.positions, t)
    h_vals = np.array([sys.hamiltonian(t[k], chi.positions[k], chi.momenta[k]) for k in range(n)])
    sigma_vals = np.stack([spec.sigma_at(e_path[k]) for k in range(n)])
    integrand = (np.sum(chi.momenta * du, axis=1) - h_vals
                 + np.sum(lambda_path * (chi.momenta - sigma_vals), axis=1))
    return float(np.trapezoid(integrand, t))


def constrained_vector_field(sys: HamiltonianSystem, spec: ConstraintSpec,
                             state: ExtendedState, t=0.0):
    """Bulk equations of the constrained problem: (dH/dp - Lambda, -dH/du).

    The constraints themselves are residuals, not substituted here.
    """
    du = np.asarray(sys.grad_p(t, state.u, state.p), dtype=float) - state.lam
    dp = -np.asarray(sys.grad_u(t, state.u, state.p), dtype=float)
    if not (np.all(np.isfinite(du)) and np.all(np.isfinite(dp))):
        raise NonFiniteError("constrained vector field not finite")
    return du, dp


def polar_constraint_residual(spec: ConstraintSpec, e, lam):
    """Lambda^T dsigma(e): zero iff the multiplier annihilates T(Im sigma)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return lam @ spec.dsigma_at(e)


def momentum_constraint_residual(spec: ConstraintSpec, p, e):
    """phi = p - sigma(e)."""
    return np.atleast_1d(np.asarray(p, dtype=float)) - spec.sigma_at(e)


def presymplectic_form_matrix(r, k):
    """Matrix of du^dp on coordinates (u, p, Lambda, e)."""
    n = 3 * r + k
    m = np.zeros((n, n))
    m[:r, r:2 * r] = np.eye(r)
    m[r:2 * r, :r] = -np.eye(r)
    return m


def _tangency_solve(sys, spec, t, u, e):
    """Minimal-norm D with dsigma(e) D = -dH/du, and the unmatched residual."""
    p = spec.sigma_at(e)
    grad_u = np.asarray(sys.grad_u(t, u, p), dtype=float)
    dsig = spec.dsigma_at(e)
    d_vec, *_ = np.linalg.lstsq(dsig, -grad_u, rcond=None)
    residual = dsig @ d_vec + grad_u
    return d_vec, residual, grad_u, dsig


@dataclass(frozen=True)
class GotayReport:
    """Pointwise output of the presymplectic constraint algorithm."""

    kernel_basis: np.ndarray          # columns spanning ker of the extended two-form
    kernel_dim: int
    primary_residual: np.ndarray      # phi = p - sigma(e) at the probe
    polar_residual: np.ndarray        # psi = Lambda^T dsigma at the probe
    stable: bool
    tangency_residual: float
    secondary_direction: Optional[np.ndarray]
    d_velocity: Optional[np.ndarray]  # minimal-norm constraint velocity D
    c_rate: Optional[np.ndarray]      # minimal-norm multiplier rate C
    c_residual: Optional[float]
    terminated: bool


def gotay_step(sys: HamiltonianSystem, spec: ConstraintSpec, state: ExtendedState, t=0.0):
    """One pass of the constraint algorithm at a probe state.

    Computes the kernel of the extended two-form, reads the solvability
    conditions along it (recovering the primary and polar constraints),
    then checks tangency of the dynamics to the primary constraint set:
    either the minimal-norm velocities (D, C) exist and the algorithm
    terminates, or the unmatched gradient direction is reported as a
    secondary constraint.
    """
    r = sys.dim
    k = spec.k_dim
    omega0 = presymplectic_form_matrix(r, k)
    kernel = null_space(omega0, rcond=spec.rank_tol)

    phi = momentum_constraint_residual(spec, state.p, state.e)
    psi = polar_constraint_residual(spec, state.e, state.lam)

    d_vec, tan_res, grad_u, dsig = _tangency_solve(sys, spec, t, state.u, state.e)
    scale = 1.0 + float(np.abs(grad_u).max())
    tan_norm = float(np.abs(tan_res).max())
    stable = tan_norm <= spec.rank_tol * scale * 1e2

    secondary = None
    c_vec = None
    c_res = None
    if stable:
        d2 = spec.d2sigma_at(state.e)
        rhs = -np.einsum("a,aij,j->i", state.lam, d2, d_vec)
        c_vec, *_ = np.linalg.lstsq(dsig.T, rhs, rcond=None)
        c_res = float(np.abs(dsig.T @ c_vec - rhs).max())
    else:
        secondary = tan_res / np.linalg.norm(tan_res)

    return GotayReport(
        kernel_basis=kernel,
        kernel_dim=kernel.shape[1],
        primary_residual=phi,
        polar_residual=np.atleast_1d(psi),
        stable=stable,
        tangency_residual=tan_norm,
        secondary_direction=secondary,
        d_velocity=d_vec if stable else None,
        c_rate=c_vec,
        c_residual=c_res,
        terminated=stable,
    )


def polar_space_basis(spec: ConstraintSpec, e):
    """Orthonormal basis of multipliers annihilating the image of dsigma."""
    dsig = spec.dsigma_at(e)
    return null_space(dsig.T)


def stability_check(sys: HamiltonianSystem, spec: ConstraintSpec, state: ExtendedState, t=0.0):
    """Max |Lambda . dH/du| over unit polar directions; zero iff stable.

    The probe must satisfy the momentum constraint.
    """
    phi = momentum_constraint_residual(spec, state.p, state.e)
    if np.abs(phi).max() > ON_CONSTRAINT_TOL:
        raise OffConstraintError(f"probe violates p = sigma(e) by {np.abs(phi).max():.3e}")
    basis = polar_space_basis(spec, state.e)
    if basis.shape[1] == 0:
        return 0.0
    grad_u = np.asarray(sys.grad_u(t, state.u, state.p), dtype=float)
    return float(np.abs(basis.T @ grad_u).max())


def check_hamiltonian_descends(sys: HamiltonianSystem, spec: ConstraintSpec, probes,
                               fd_step=1e-6):
    """Max directional difference quotient of H along polar directions.

    ``probes`` is a list of (u, e) pairs; the momentum is sigma(e), so every
    probe lies on the constraint image.  A zero value certifies that H is
    constant along the characteristic directions and defines a function on
    the reduced space.
    """
    worst = 0.0
    for u, e in probes:
        u = as_point(u, sys.dim)
        e = np.atleast_1d(np.asarray(e, dtype=float))
        p = spec.sigma_at(e)
        basis = polar_space_basis(spec, e)
        for idx in range(basis.shape[1]):
            lam_hat = basis[:, idx]
            plus = sys.hamiltonian(0.0, u + fd_step * lam_hat, p)
            minus = sys.hamiltonian(0.0, u - fd_step * lam_hat, p)
            worst = max(worst, abs(plus - minus) / (2 * fd_step))
    return worst


# ---------------------------------------------------------------------------
# Constrained integration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstrainedFlowResult:
    """Constrained trajectory with its drift diagnostics.

    The momentum path is sigma(e(t)) by construction, so the momentum
    constraint has exactly zero drift; the reported diagnostics are the
    energy drift, the polar residual of the supplied multiplier path, and
    the worst tangency residual of the per-step velocity solves.
    """

    trajectory: Trajectory
    e_path: np.ndarray
    lambda_path: np.ndarray
    status: object
    energy_drift: float
    max_polar_residual: float
    max_tangency_residual: float

    @property
    def completed(self):
        return isinstance(self.status, Completed)


def _implicit_midpoint_generic(f, t, y, h, tol, max_iter, jac_step=1e-7):
    """Implicit midpoint step for a generic field, Newton with FD Jacobian."""
    n = y.size
    eye = np.eye(n)
    y2 = y + h * f(t, y)
    for _ in range(max_iter):
        m = 0.5 * (y + y2)
        fm = f(t + 0.5 * h, m)
        g = y2 - y - h * fm
        if not np.all(np.isfinite(g)):
            raise NewtonConvergenceError(f"constrained midpoint residual not finite at t={t}")
        jac = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = jac_step
            jac[:, j] = (f(t + 0.5 * h, m + e) - f(t + 0.5 * h, m - e)) / (2 * jac_step)
        try:
            delta = np.linalg.solve(eye - 0.5 * h * jac, -g)
        except np.linalg.LinAlgError as exc:
            raise NewtonConvergenceError("singular constrained Newton matrix") from exc
        y2 = y2 + delta
        scale = 1.0 + max(np.max(np.abs(y)), np.max(np.abs(y2)))
        if np.max(np.abs(g)) <= tol * scale:
            return y2
    raise NewtonConvergenceError(f"constrained midpoint Newton stalled at t={t}")


def integrate_constrained(sys: HamiltonianSystem, spec: ConstraintSpec, u0, e0,
                          cfg: IntegratorConfig, gauge="lambda-zero"):
    """Integrate the constrained dynamics with p = sigma(e) held exactly.

    The state is (u, e); the momentum is evaluated from the constraint, the
    constraint velocity D comes from the per-step minimal-norm tangency
    solve, and the multiplier path is the chosen gauge (zero by default, or
    a callable t -> Lambda).  Raises UnstableConstraintError as soon as the
    tangency solve leaves a residual: the probe dynamics then requires a
    secondary constraint and does not stay on the primary set.
    """
    r = sys.dim
    k = spec.k_dim
    u0 = as_point(u0, r)
    e0 = np.atleast_1d(np.asarray(e0, dtype=float))
    if gauge == "lambda-zero":
        lam_of_t = lambda t: np.zeros(r)
    elif callable(gauge):
        lam_of_t = lambda t: as_point(gauge(t), r)
    else:
        raise ValueError("gauge must be 'lambda-zero' or a callable t -> Lambda")

    tangency_worst = 0.0

    def field(t, y):
        nonlocal tangency_worst
        u, e = y[:r], y[r:]
        p = spec.sigma_at(e)
        d_vec, tan_res, grad_u, _ = _tangency_solve(sys, spec, t, u, e)
        scale = 1.0 + float(np.abs(grad_u).max())
        tan_norm = float(np.abs(tan_res).max())
        tangency_worst = max(tangency_worst, tan_norm)
        if tan_norm > spec.rank_tol * scale * 1e2:
            raise UnstableConstraintError(t, tan_norm)
        du = np.asarray(sys.grad_p(t, u, p), dtype=float) - lam_of_t(t)
        return np.concatenate([du, d_vec])

    # the initial state must pass the constraint algorithm
    report = gotay_step(sys, spec, ExtendedState(u0, spec.sigma_at(e0), lam_of_t(0.0), e0))
    if not report.stable:
        raise UnstableConstraintError(0.0, report.tangency_residual)

    n_steps = max(2, int(round(1.0 / cfg.step)))
    h = 1.0 / n_steps
    grid = TimeGrid.uniform(n_steps)
    ys = np.empty((n_steps + 1, r + k))
    ys[0] = np.concatenate([u0, e0])
    status = Completed()
    last = n_steps
    for i in range(n_steps):
        t = i * h
        try:
            ys[i + 1] = _implicit_midpoint_generic(
                field, t, ys[i], h, cfg.newton_tol, cfg.newton_max_iter)
        except NewtonConvergenceError:
            status = NewtonFailure(t=t)
            last = i
            break
    ys = ys[:last + 1]
    nodes = grid.nodes[:last + 1]
    e_path = ys[:, r:]
    lam_path = np.stack([lam_of_t(t) for t in nodes])
    p_path = np.stack([spec.sigma_at(e) for e in e_path])
    traj = Trajectory(TimeGrid(nodes), ys[:, :r], p_path)

    h_vals = np.array([
        sys.hamiltonian(nodes[i], traj.positions[i], traj.momenta[i]) for i in range(len(nodes))
    ])
    polar = max(
        float(np.abs(polar_constraint_residual(spec, e_path[i], lam_path[i])).max())
        for i in range(len(nodes))
    )
    return ConstrainedFlowResult(
        trajectory=traj,
        e_path=e_path,
        lambda_path=lam_path,
        status=status,
        energy_drift=float(np.max(np.abs(h_vals - h_vals[0]))),
        max_polar_residual=polar,
        max_tangency_residual=tangency_worst,
    )


# ---------------------------------------------------------------------------
# Registered constraint families
# ---------------------------------------------------------------------------

def make_identity_constraint(dim=1):
    """sigma(e) = e with K = R^dim: constrains nothing."""
    eye = np.eye(int(dim))
    return ConstraintSpec(
        k_dim=int(dim),
        sigma=lambda e: np.asarray(e, dtype=float),
        dsigma=lambda e: eye,
        name="identity",
    )


def make_circle_constraint():
    """Momenta pinned to the unit circle: sigma(e) = (cos e, sin e), K = R."""
    return ConstraintSpec(
        k_dim=1,
        sigma=lambda e: np.array([np.cos(e[0]), np.sin(e[0])]),
        dsigma=lambda e: np.array([[-np.sin(e[0])], [np.cos(e[0])]]),
        name="circle",
    )


CONSTRAINT_REGISTRY = {
    "identity": make_identity_constraint,
    "circle": lambda **kw: make_circle_constraint(),
}


def make_constraint(name, **params):
    if name not in CONSTRAINT_REGISTRY:
        raise KeyError(
            f"unknown constraint {name!r}; known: {', '.join(sorted(CONSTRAINT_REGISTRY))}")
    return CONSTRAINT_REGISTRY[name](**params)
