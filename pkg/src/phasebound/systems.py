"""Bundled Hamiltonian systems with closed-form oracles.

Each factory returns an ExampleSystem: the system itself, a dictionary of
analytic facts (flow formulas, boundary-value momenta, escape times), and a
list of self-checks that re-verify every fact against the numerical stack at
its declared tolerance.  The self-checks power the command-line selftest.

Bundled systems:

  free-particle   kinetic Hamiltonian |p|^2/2m; global linear flow.
  quartic         p^2/2m - m u^4/8; the zero-energy branch has the closed
                  form u(t) = 2 u0 / (2 -+ u0 t) with p0 = -+... see facts;
                  the growing branch escapes in finite time 2/u0.
  pendulum        p^2/2m - k cos(theta) on the cylinder; generic endpoint
                  pairs are joined by at least two isolated trajectories.
  sphere          great-circle (geodesic) flow, realized as the smooth
                  Hamiltonian |u|^2 |p|^2 / 2 on R^6 whose restriction to
                  unit base points and tangent momenta is the geodesic
                  system; integrated from its closed-form flow.
  cotangent-lift  H = p . X(u); the flow is the cotangent lift of the flow
                  of X, so only endpoints on that flow's graph are joined.
  lambda-family   H = lam |p|^2 / 2 + p . X(u), interpolating between a
                  regular kinetic theory (lam > 0) and the drift theory
                  above (lam = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    ConfigSpace,
    HamiltonianSystem,
    Trajectory,
    as_point,
    check_gradients,
    el_residual,
    grid_derivative,
)
from .errors import NegativeLambdaError, NonPositiveMassError
from .integrators import (
    BlowUp,
    IntegratorConfig,
    energy_drift,
    flow_jacobian,
    integrate_flow,
)


@dataclass(frozen=True)
class SelfCheck:
    """One verifiable fact: ``run`` returns a measured defect, compared to tol."""

    name: str
    tol: float
    run: Callable[[], float]


@dataclass(frozen=True)
class ExampleSystem:
    name: str
    system: HamiltonianSystem
    facts: dict
    checks: tuple


def _default_cfg(step=1e-3):
    return IntegratorConfig(step=step)


def _gradient_check(sys, probes):
    return SelfCheck(
        name=f"{sys.name}: gradients match differences of H",
        tol=1e-6,
        run=lambda: check_gradients(sys, probes),
    )


def _energy_check(sys, u0, p0, tol=1e-6):
    def run():
        res = integrate_flow(sys, u0, p0, _default_cfg())
        return energy_drift(sys, res.trajectory)

    return SelfCheck(name=f"{sys.name}: energy drift over [0,1] at h=1e-3", tol=tol, run=run)


def _analytic_flow_residual_check(sys, u0, p0, n_nodes=2000, tol=1e-8):
    """Sampled analytic flow must satisfy the discrete equations of motion."""

    def run():
        t = np.linspace(0.0, 1.0, n_nodes)
        us, ps = [], []
        for tk in t:
            u, p = sys.analytic_flow(tk, as_point(u0, sys.dim), as_point(p0, sys.dim))
            us.append(np.atleast_1d(u))
            ps.append(np.atleast_1d(p))
        from .core import TimeGrid

        chi = Trajectory(TimeGrid(t), np.stack(us), np.stack(ps))
        return el_residual(sys, chi)[2]

    return SelfCheck(name=f"{sys.name}: analytic flow solves the equations", tol=tol, run=run)


# ---------------------------------------------------------------------------
# Free particle
# ---------------------------------------------------------------------------

def make_free_particle(m=1.0, dim=1):
    """Kinetic Hamiltonian |p|^2 / 2m on R^dim."""
    if m <= 0:
        raise NonPositiveMassError(f"mass must be positive, got {m}")
    r = int(dim)
    cfgspace = ConfigSpace(r)
    eye = np.eye(r)

    sys = HamiltonianSystem(
        config=cfgspace,
        hamiltonian=lambda t, u, p: np.sum(p * p, axis=-1) / (2.0 * m),
        grad_u=lambda t, u, p: np.zeros_like(np.asarray(u, dtype=float)),
        grad_p=lambda t, u, p: np.asarray(p, dtype=float) / m,
        hess_uu=lambda t, u, p: np.zeros(np.shape(u) + (r,)),
        hess_up=lambda t, u, p: np.zeros(np.shape(u) + (r,)),
        hess_pp=lambda t, u, p: np.broadcast_to(eye / m, np.shape(u) + (r,)),
        analytic_flow=lambda t, u0, p0: (np.asarray(u0) + np.asarray(p0) * t / m, np.asarray(p0)),
        separable=True,
        vectorized=True,
        name=f"free-particle(m={m})",
    )

    facts = {
        "mass": m,
        "flow": lambda t, u0, p0: (np.asarray(u0) + np.asarray(p0) * t / m, np.asarray(p0)),
        "principal_function": lambda u0, u1: 0.5 * m * float(
            np.sum((as_point(u1, r) - as_point(u0, r)) ** 2)
        ),
        "bvp_momentum": lambda u0, u1: m * (as_point(u1, r) - as_point(u0, r)),
    }

    def check_flow():
        res = integrate_flow(sys, np.zeros(r), np.ones(r), _default_cfg())
        u1, p1 = res.trajectory.state(-1)
        exact_u, exact_p = facts["flow"](1.0, np.zeros(r), np.ones(r))
        return float(max(np.abs(u1 - exact_u).max(), np.abs(p1 - exact_p).max()))

    def check_plane():
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(5):
            u0 = rng.uniform(-1, 1, r)
            p0 = rng.uniform(-2, 2, r)
            res = integrate_flow(sys, u0, p0, _default_cfg())
            u1, p1 = res.trajectory.state(-1)
            worst = max(worst, np.abs(p1 - p0).max(), np.abs(p0 - m * (u1 - u0)).max())
        return worst

    checks = (
        _gradient_check(sys, [(0.0, np.full(r, 0.7), np.full(r, 1.3))]),
        SelfCheck(f"{sys.name}: time-1 flow matches the linear formula", 1e-9, check_flow),
        SelfCheck(f"{sys.name}: boundary data satisfies p1 = p0 = m(u1-u0)", 1e-8, check_plane),
        _energy_check(sys, np.full(r, 0.3), np.full(r, 1.1)),
        _analytic_flow_residual_check(sys, np.zeros(r), np.ones(r)),
    )
    return ExampleSystem("free-particle", sys, facts, checks)


# ---------------------------------------------------------------------------
# Quartic potential with finite-time escape
# ---------------------------------------------------------------------------

def make_quartic(m=1.0):
    """H = p^2/2m - m u^4/8 on the line.

    The zero-energy branches have momentum p0 = +- m u0^2 / 2 and closed
    form u(t) = 2 u0 / (2 -+ u0 t); the growing branch (+) escapes at
    t = 2/u0 when u0 > 2.
    """
    if m <= 0:
        raise NonPositiveMassError(f"mass must be positive, got {m}")
    cfgspace = ConfigSpace(1)

    sys = HamiltonianSystem(
        config=cfgspace,
        hamiltonian=lambda t, u, p: np.sum(p * p, axis=-1) / (2.0 * m)
        - m * np.sum(u ** 4, axis=-1) / 8.0,
        grad_u=lambda t, u, p: -0.5 * m * np.asarray(u, dtype=float) ** 3,
        grad_p=lambda t, u, p: np.asarray(p, dtype=float) / m,
        hess_uu=lambda t, u, p: (-1.5 * m * np.asarray(u, dtype=float) ** 2)[..., None],
        hess_up=lambda t, u, p: np.zeros(np.shape(u) + (1,)),
        hess_pp=lambda t, u, p: np.full(np.shape(u) + (1,), 1.0 / m),
        separable=True,
        vectorized=True,
        name=f"quartic(m={m})",
    )

    def growing_curve(t, u0):
        return 2.0 * u0 / (2.0 - u0 * t)

    def decaying_curve(t, u0):
        return 2.0 * u0 / (2.0 + u0 * t)

    facts = {
        "mass": m,
        "growing_curve": growing_curve,
        "decaying_curve": decaying_curve,
        "growing_p0": lambda u0: 0.5 * m * u0 ** 2,
        "decaying_p0": lambda u0: -0.5 * m * u0 ** 2,
        "escape_time": lambda u0: 2.0 / u0,
        "blows_up": lambda u0: u0 > 2.0,
    }

    def check_growing_endpoint():
        cfg = IntegratorConfig(step=5e-4)
        res = integrate_flow(sys, [1.0], [facts["growing_p0"](1.0)], cfg)
        exact = growing_curve(res.trajectory.grid.nodes, 1.0)
        return float(np.abs(res.trajectory.positions[:, 0] - exact).max())

    def check_escape():
        u0 = 4.0
        res = integrate_flow(sys, [u0], [facts["growing_p0"](u0)], _default_cfg())
        if not isinstance(res.status, BlowUp):
            return 1.0
        return abs(res.status.t_escape - facts["escape_time"](u0))

    def check_decaying():
        res = integrate_flow(sys, [1.0], [facts["decaying_p0"](1.0)], IntegratorConfig(step=5e-4))
        return abs(res.trajectory.positions[-1, 0] - 2.0 / 3.0)

    checks = (
        _gradient_check(sys, [(0.0, [0.8], [0.4]), (0.5, [1.6], [-0.7])]),
        SelfCheck(f"{sys.name}: zero-energy growing branch matches closed form", 1e-6,
                  check_growing_endpoint),
        SelfCheck(f"{sys.name}: escape detected near t = 2/u0", 5e-2, check_escape),
        SelfCheck(f"{sys.name}: decaying branch reaches 2/3 at t=1", 1e-6, check_decaying),
        _energy_check(sys, [0.9], [0.3]),
    )
    return ExampleSystem("quartic", sys, facts, checks)


# ---------------------------------------------------------------------------
# Planar pendulum
# ---------------------------------------------------------------------------

def make_pendulum(m=1.0, k=1.0):
    """H = p^2/2m - k cos(theta) on the cylinder (theta angular)."""
    if m <= 0 or k <= 0:
        raise NonPositiveMassError(f"mass and stiffness must be positive, got m={m}, k={k}")
    cfgspace = ConfigSpace(1, kinds=("angular",))

    sys = HamiltonianSystem(
        config=cfgspace,
        hamiltonian=lambda t, u, p: np.sum(p * p, axis=-1) / (2.0 * m)
        - k * np.sum(np.cos(u), axis=-1),
        grad_u=lambda t, u, p: k * np.sin(np.asarray(u, dtype=float)),
        grad_p=lambda t, u, p: np.asarray(p, dtype=float) / m,
        hess_uu=lambda t, u, p: (k * np.cos(np.asarray(u, dtype=float)))[..., None],
        hess_up=lambda t, u, p: np.zeros(np.shape(u) + (1,)),
        hess_pp=lambda t, u, p: np.full(np.shape(u) + (1,), 1.0 / m),
        separable=True,
        vectorized=True,
        name=f"pendulum(m={m},k={k})",
    )

    facts = {
        "mass": m,
        "stiffness": k,
        "small_angle_frequency": math.sqrt(k / m),
        "min_branches": 2,
    }

    def check_fixed_point():
        from .core import hamiltonian_vector_field

        du, dp = hamiltonian_vector_field(sys, 0.0, [0.0], [0.0])
        return float(max(np.abs(du).max(), np.abs(dp).max()))

    def check_frequency():
        jac = flow_jacobian(sys, [0.0], [0.0], _default_cfg())
        eig = np.linalg.eigvals(jac)
        angle = abs(np.angle(eig[0]))
        return abs(angle - facts["small_angle_frequency"])

    def check_branches():
        from .shooting import ShootingConfig, solve_dirichlet
        from .core import action_functional

        sols = solve_dirichlet(sys, [0.0], [math.pi / 2], ShootingConfig())
        if len(sols.solutions) < 2:
            return 1.0
        w = sorted(action_functional(sys, b.trajectory) for b in sols.solutions)
        return 0.0 if (w[-1] - w[0]) >= 1e-3 else 1.0

    checks = (
        _gradient_check(sys, [(0.0, [0.6], [0.9]), (0.3, [-2.2], [0.1])]),
        SelfCheck(f"{sys.name}: equilibrium is a fixed point", 1e-14, check_fixed_point),
        SelfCheck(f"{sys.name}: small-angle frequency sqrt(k/m)", 1e-4, check_frequency),
        SelfCheck(f"{sys.name}: two branches join 0 to pi/2", 0.5, check_branches),
        _energy_check(sys, [0.4], [1.2]),
    )
    return ExampleSystem("pendulum", sys, facts, checks)


# ---------------------------------------------------------------------------
# Great circles on the sphere
# ---------------------------------------------------------------------------

def _sphere_flow(t, u0, p0):
    u0 = np.asarray(u0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    s = np.linalg.norm(p0, axis=-1, keepdims=True)
    st = s * t
    cos = np.cos(st)
    # sin(st)/s = t * sinc(st/pi); finite at s = 0
    sin_over_s = t * np.sinc(st / np.pi)
    u = cos * u0 + sin_over_s * p0
    p = -s * np.sin(st) * u0 + cos * p0
    return u, p


def _sphere_flow_jacobian(t, u0, p0):
    u0 = np.asarray(u0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    r = u0.size
    s = float(np.linalg.norm(p0))
    jac = np.zeros((2 * r, 2 * r))
    if s < 1e-12:
        jac[:r, :r] = np.eye(r)
        jac[:r, r:] = t * np.eye(r)
        jac[r:, r:] = np.eye(r)
        return jac
    st = s * t
    c, si = np.cos(st), np.sin(st)
    phat = p0 / s
    eye = np.eye(r)
    du_du0 = c * eye
    dp_du0 = -s * si * eye
    du_dp0 = (
        -t * si * np.outer(u0, phat)
        + (si / s) * eye
        + ((t * c * s - si) / s ** 2) * np.outer(p0, phat)
    )
    dp_dp0 = (
        -(si + st * c) * np.outer(u0, phat)
        + c * eye
        - t * si * np.outer(p0, phat)
    )
    jac[:r, :r] = du_du0
    jac[:r, r:] = du_dp0
    jac[r:, :r] = dp_du0
    jac[r:, r:] = dp_dp0
    return jac


def make_sphere_geodesics():
    """Great-circle flow on the unit sphere in embedded coordinates.

    The Hamiltonian |u|^2 |p|^2 / 2 on R^3 x R^3 restricts to the geodesic
    Hamiltonian on unit base points with tangent momenta, and its flow there
    is the closed-form great-circle motion used for integration.  Antipodal
    endpoint pairs are joined by a circle's worth of unit-speed solutions.
    """
    cfgspace = ConfigSpace(3)

    def hess_up(t, u, p):
        u = np.asarray(u, dtype=float)
        p = np.asarray(p, dtype=float)
        return 2.0 * u[..., :, None] * p[..., None, :]

    eye = np.eye(3)
    sys = HamiltonianSystem(
        config=cfgspace,
        hamiltonian=lambda t, u, p: 0.5 * np.sum(u * u, axis=-1) * np.sum(p * p, axis=-1),
        grad_u=lambda t, u, p: np.sum(p * p, axis=-1)[..., None] * np.asarray(u, dtype=float),
        grad_p=lambda t, u, p: np.sum(u * u, axis=-1)[..., None] * np.asarray(p, dtype=float),
        hess_uu=lambda t, u, p: np.sum(p * p, axis=-1)[..., None, None] * eye,
        hess_pp=lambda t, u, p: np.sum(u * u, axis=-1)[..., None, None] * eye,
        hess_up=hess_up,
        analytic_flow=_sphere_flow,
        analytic_flow_jacobian=_sphere_flow_jacobian,
        analytic_only=True,
        vectorized=True,
        name="sphere-geodesics",
    )

    north = np.array([0.0, 0.0, 1.0])
    facts = {
        "flow": _sphere_flow,
        "north_pole": north,
        "antipodal_speed": math.pi,
    }

    def check_antipode():
        p0 = math.pi * np.array([1.0, 0.0, 0.0])
        u1, _ = _sphere_flow(1.0, north, p0)
        return float(np.abs(u1 + north).max())

    def check_rest():
        u1, p1 = _sphere_flow(1.0, north, np.zeros(3))
        return float(max(np.abs(u1 - north).max(), np.abs(p1).max()))

    checks = (
        _gradient_check(sys, [(0.0, north, [0.3, 0.2, 0.0]), (0.0, [0.6, 0.8, 0.0], [0.0, 0.0, 1.0])]),
        SelfCheck("sphere: unit tangent momentum of speed pi reaches the antipode", 1e-12,
                  check_antipode),
        SelfCheck("sphere: zero momentum stays put", 1e-14, check_rest),
        _analytic_flow_residual_check(sys, north, [1.2, 0.0, 0.0]),
        _energy_check(sys, north, [1.2, 0.0, 0.0]),
    )
    return ExampleSystem("sphere", sys, facts, checks)


# ---------------------------------------------------------------------------
# Vector fields for the drift systems
# ---------------------------------------------------------------------------

def linear_vector_field(dim=1, scale=1.0):
    """X(u) = scale * u, with flow u0 * exp(scale * t)."""
    r = int(dim)
    eye = np.eye(r)

    def X(u):
        return scale * np.asarray(u, dtype=float)

    def dX(u):
        return np.broadcast_to(scale * eye, np.shape(u) + (r,))

    def d2X(u):
        return np.zeros(np.shape(u) + (r, r))

    def x_flow(t, u0):
        return np.asarray(u0, dtype=float) * math.exp(scale * t)

    return X, dX, d2X, x_flow


def constant_vector_field(c):
    """X(u) = c, with flow u0 + c t."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    r = c.size

    def X(u):
        return np.broadcast_to(c, np.shape(u))

    def dX(u):
        return np.zeros(np.shape(u) + (r,))

    def d2X(u):
        return np.zeros(np.shape(u) + (r, r))

    def x_flow(t, u0):
        return np.asarray(u0, dtype=float) + c * t

    return X, dX, d2X, x_flow


def _drift_callbacks(X, dX, d2X):
    def grad_u(t, u, p):
        return np.einsum("...b,...ba->...a", np.asarray(p, dtype=float), dX(u))

    def hess_up(t, u, p):
        return np.swapaxes(dX(u), -1, -2)

    hess_uu = None
    if d2X is not None:
        def hess_uu(t, u, p):
            return np.einsum("...b,...bac->...ac", np.asarray(p, dtype=float), d2X(u))

    return grad_u, hess_up, hess_uu


def make_cotangent_lift(X=None, dX=None, d2X=None, dim=1, x_flow=None, complete=True):
    """H = p . X(u): the flow is the cotangent lift of the flow of X.

    Defaults to X(u) = u on the line.  ``x_flow`` is the base-flow oracle
    (t, u0) -> u(t) used by the self-checks and graph diagnostics.
    """
    if X is None:
        X, dX, d2X, x_flow = linear_vector_field(dim)
    grad_u, hess_up, hess_uu = _drift_callbacks(X, dX, d2X)
    r = int(dim)
    cfgspace = ConfigSpace(r)

    sys = HamiltonianSystem(
        config=cfgspace,
        hamiltonian=lambda t, u, p: np.sum(np.asarray(p, dtype=float) * X(u), axis=-1),
        grad_u=grad_u,
        grad_p=lambda t, u, p: np.asarray(X(u), dtype=float),
        hess_uu=hess_uu,
        hess_up=hess_up,
        hess_pp=lambda t, u, p: np.zeros(np.shape(u) + (r,)),
        vectorized=True,
        name="cotangent-lift",
    )

    facts = {"x_flow": x_flow, "complete": complete}

    checks = [
        _gradient_check(sys, [(0.0, np.full(r, 0.9), np.full(r, -1.4))]),
    ]

    if x_flow is not None:
        def check_base_flow():
            cfg = IntegratorConfig(step=1e-4)
            res = integrate_flow(sys, np.full(r, 1.0), np.full(r, 1.0), cfg)
            u1 = res.trajectory.positions[-1]
            return float(np.abs(u1 - x_flow(1.0, np.full(r, 1.0))).max())

        checks.append(SelfCheck(
            "cotangent-lift: base flow reached at t=1 (h=1e-4)", 1e-8, check_base_flow))

        def check_unreachable():
            from .shooting import ShootingConfig, solve_dirichlet

            u0 = np.full(r, 0.0)
            off = x_flow(1.0, u0) + 0.5
            sols = solve_dirichlet(sys, u0, off, ShootingConfig())
            return 0.0 if sols.classification.kind == "NoSolution" else 1.0

        checks.append(SelfCheck(
            "cotangent-lift: endpoints off the base-flow graph are unreachable", 0.5,
            check_unreachable))

    checks.append(_energy_check(sys, np.full(r, 1.0), np.full(r, 1.0)))
    return ExampleSystem("cotangent-lift", sys, facts, tuple(checks))


def make_lambda_family(lam, X=None, dX=None, d2X=None, dim=1, x_flow=None):
    """H = lam |p|^2 / 2 + p . X(u); lam = 0 recovers the cotangent lift."""
    if lam < 0:
        raise NegativeLambdaError(f"kinetic weight must be nonnegative, got {lam}")
    if X is None:
        X, dX, d2X, x_flow = constant_vector_field(np.ones(dim))
    grad_u, hess_up, hess_uu = _drift_callbacks(X, dX, d2X)
    r = int(dim)
    cfgspace = ConfigSpace(r)
    eye = np.eye(r)

    sys = HamiltonianSystem(
        config=cfgspace,
        hamiltonian=lambda t, u, p: 0.5 * lam * np.sum(np.asarray(p) ** 2, axis=-1)
        + np.sum(np.asarray(p, dtype=float) * X(u), axis=-1),
        grad_u=grad_u,
        grad_p=lambda t, u, p: lam * np.asarray(p, dtype=float) + np.asarray(X(u), dtype=float),
        hess_uu=hess_uu,
        hess_up=hess_up,
        hess_pp=lambda t, u, p: np.broadcast_to(lam * eye, np.shape(u) + (r,)),
        vectorized=True,
        name=f"lambda-family(lam={lam})",
    )

    facts = {"lam": lam, "x_flow": x_flow}

    checks = (
        _gradient_check(sys, [(0.0, np.full(r, 0.2), np.full(r, 0.7))]),
        _energy_check(sys, np.full(r, 0.2), np.full(r, 0.7)),
    )
    return ExampleSystem("lambda-family", sys, facts, checks)


# ---------------------------------------------------------------------------
# The small-kinetic-term limit study
# ---------------------------------------------------------------------------

def second_order_residual(X, dX, traj: Trajectory):
    """Residual of the second-order base equation satisfied by drift solutions.

    Eliminating the momentum from Hamilton's equations of the lam-family
    Hamiltonian yields, independently of lam,

        u'' = (dX)^T X + (dX - dX^T) u',

    evaluated here with discrete derivatives along the trajectory.  Returns
    (per-node residual, max norm).
    """
    t = traj.grid.nodes
    du = grid_derivative(traj.positions, t)
    ddu = grid_derivative(du, t)
    xs = np.asarray(X(traj.positions), dtype=float)
    dxs = np.asarray(dX(traj.positions), dtype=float)
    drive = np.einsum("nb,nba->na", xs, dxs)
    skew = dxs - np.swapaxes(dxs, -1, -2)
    res = ddu - drive - np.einsum("nab,nb->na", skew, du)
    return res, float(np.abs(res).max())


@dataclass(frozen=True)
class LambdaStudyRow:
    lam: float
    p0: Optional[np.ndarray]
    action: Optional[float]
    second_order_residual: Optional[float]
    flowline_distance: Optional[float]
    status: str


@dataclass(frozen=True)
class LambdaStudyReport:
    rows: tuple
    momentum_slope: Optional[float]
    notes: str


def topological_limit_study(lambdas, u0, u1, shooting_cfg=None, X=None, dX=None,
                            d2X=None, dim=1, x_flow=None):
    """Tabulate the boundary-value momentum and action across a lam sweep.

    For each lam in the (decreasing) list the two-point problem (u0, u1) is
    solved for H = lam |p|^2/2 + p . X(u); the report records p0(lam), the
    action, the residual of the lam-independent second-order base equation,
    and (when the base-flow oracle is available) the distance of the
    trajectory to the flow line of X.  The momentum divergence rate is the
    fitted log-log slope of |p0| against lam.
    """
    from .shooting import ShootingConfig, solve_dirichlet

    if X is None:
        X, dX, d2X, x_flow = constant_vector_field(np.ones(dim))
    cfg = shooting_cfg or ShootingConfig()
    rows = []
    for lam in lambdas:
        ex = make_lambda_family(lam, X, dX, d2X, dim=dim, x_flow=x_flow)
        try:
            sols = solve_dirichlet(ex.system, u0, u1, cfg)
        except Exception as exc:  # pragma: no cover - defensive
            rows.append(LambdaStudyRow(lam, None, None, None, None, f"solver error: {exc}"))
            continue
        if not sols.solutions:
            rows.append(LambdaStudyRow(lam, None, None, None, None, "NoSolution"))
            continue
        branch = sols.solutions[0]
        from .core import action_functional

        res, res_norm = second_order_residual(X, dX, branch.trajectory)
        dist = None
        if x_flow is not None:
            line = np.stack([
                np.atleast_1d(x_flow(t, as_point(u0, ex.system.dim)))
                for t in branch.trajectory.grid.nodes
            ])
            dist = float(np.abs(branch.trajectory.positions - line).max())
        rows.append(LambdaStudyRow(
            lam=lam,
            p0=branch.p0,
            action=action_functional(ex.system, branch.trajectory),
            second_order_residual=res_norm,
            flowline_distance=dist,
            status="ok",
        ))
    usable = [(row.lam, np.linalg.norm(row.p0)) for row in rows
              if row.p0 is not None and np.linalg.norm(row.p0) > 1e-12]
    slope = None
    if len(usable) >= 2:
        ls, ps = zip(*usable)
        slope = float(np.polyfit(np.log(ls), np.log(ps), 1)[0])
    return LambdaStudyReport(tuple(rows), slope, "momentum slope fitted on nonzero branches")


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def _field_from_params(params):
    kind = params.get("field", "linear")
    dim = int(params.get("dim", 1))
    if kind == "linear":
        return linear_vector_field(dim, scale=float(params.get("scale", 1.0))), dim
    if kind == "constant":
        c = params.get("c", 1.0)
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return constant_vector_field(c), c.size
    raise ValueError(f"unknown vector-field kind {kind!r} (use 'linear' or 'constant')")


def _make_cotangent_named(**params):
    (X, dX, d2X, x_flow), dim = _field_from_params(params)
    return make_cotangent_lift(X, dX, d2X, dim=dim, x_flow=x_flow)


def _make_lambda_named(**params):
    lam = float(params.get("lam", params.get("lambda", 1.0)))
    (X, dX, d2X, x_flow), dim = _field_from_params(params)
    return make_lambda_family(lam, X, dX, d2X, dim=dim, x_flow=x_flow)


REGISTRY = {
    "free-particle": lambda **kw: make_free_particle(**kw),
    "quartic": lambda **kw: make_quartic(**kw),
    "pendulum": lambda **kw: make_pendulum(**kw),
    "sphere": lambda **kw: make_sphere_geodesics(**kw),
    "cotangent-lift": _make_cotangent_named,
    "lambda-family": _make_lambda_named,
}


def example_names():
    return sorted(REGISTRY)


def make_example(name, **params):
    if name not in REGISTRY:
        raise KeyError(f"unknown example {name!r}; known: {', '.join(example_names())}")
    return REGISTRY[name](**params)
