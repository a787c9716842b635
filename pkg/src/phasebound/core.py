"""Phase-space curves on [0,1], the action functional, and the boundary two-form.

A dynamical state is a point (u, p) of T*Q for a configuration space Q of
dimension r.  A trajectory is a sampled curve chi(t) = (u(t), p(t)) on a time
grid covering [0,1].  The boundary data of a trajectory is the quadruple
(u(0), p(0), u(1), p(1)) in T*Q x T*Q, which carries the canonical one-form

    alpha = p1 . du1 - p0 . du0

and its (constant-coefficient) differential omega.  Everything here is a pure
function of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    DimensionMismatchError,
    GridTooCoarseError,
    NonFiniteError,
)

TWO_PI = 2.0 * np.pi

# Acceptance threshold for calling an analytically-specified curve a solution
# of Hamilton's equations; integrated curves use a scheme-dependent multiple.
DEFAULT_EL_TOL = 1e-6


def integrated_el_tol(step, order=2, safety=10.0, scale=1.0):
    """Residual acceptance threshold for a curve produced by an integrator.

    A scheme of the given order leaves a residual of size ~ scale * step**order;
    the safety factor separates discretization error from modeling error.
    """
    return safety * scale * step ** order


def wrap_angle(d):
    """Wrap angle differences into (-pi, pi]."""
    d = np.asarray(d, dtype=float)
    return d - TWO_PI * np.ceil((d - np.pi) / TWO_PI)


@dataclass(frozen=True)
class ConfigSpace:
    """An r-dimensional configuration space with per-coordinate kind flags.

    ``kinds`` entries are "linear" or "angular"; angular coordinates are
    compared modulo 2*pi wherever a distance or equality on Q is taken.
    Stored values stay unwrapped along trajectories for continuity.
    """

    dim: int
    kinds: tuple = None
    embedding: object = None  # presentation only, unused by solvers

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatchError(f"configuration dimension must be >= 1, got {self.dim}")
        kinds = self.kinds if self.kinds is not None else ("linear",) * self.dim
        kinds = tuple(kinds)
        if len(kinds) != self.dim:
            raise DimensionMismatchError("one coordinate kind per dimension required")
        for k in kinds:
            if k not in ("linear", "angular"):
                raise ValueError(f"unknown coordinate kind {k!r}")
        object.__setattr__(self, "kinds", kinds)

    @property
    def angular_mask(self):
        return np.array([k == "angular" for k in self.kinds])

    def wrap_diff(self, a, b):
        """Componentwise a - b with angular coordinates wrapped to (-pi, pi]."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        mask = self.angular_mask
        if mask.any():
            d = np.where(mask, wrap_angle(d), d)
        return d

    def distance(self, a, b):
        """Sup-norm distance on Q respecting angular wrapping."""
        return float(np.max(np.abs(self.wrap_diff(a, b))))


def as_point(x, dim):
    """Coerce a scalar or sequence to a float vector of length ``dim``."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise DimensionMismatchError(f"expected point of dimension {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class HamiltonianSystem:
    """A Hamiltonian H(t, u, p) on T*Q x [0,1] with its first derivatives.

    ``grad_u`` and ``grad_p`` return dH/du and dH/dp.  The optional Hessian
    blocks (``hess_uu``, ``hess_up``, ``hess_pp``, with hess_up[a, b] =
    d2H/du^a dp_b) sharpen the tangent-flow computation; when absent they
    are approximated by symmetric differences of the gradients.

    ``analytic_flow`` is an oracle map (t, u0, p0) -> (u(t), p(t)) used for
    cross-checks.  Systems flagged ``analytic_only`` are integrated by
    sampling that oracle instead of stepping the vector field (then
    ``analytic_flow_jacobian`` supplies the tangent flow).

    ``vectorized`` declares that the callbacks broadcast over a leading batch
    axis of u and p, enabling batched integration.
    """

    config: ConfigSpace
    hamiltonian: Callable
    grad_u: Callable
    grad_p: Callable
    hess_uu: Optional[Callable] = None
    hess_up: Optional[Callable] = None
    hess_pp: Optional[Callable] = None
    analytic_flow: Optional[Callable] = None
    analytic_flow_jacobian: Optional[Callable] = None
    separable: bool = False
    analytic_only: bool = False
    vectorized: bool = False
    name: str = "custom"

    @property
    def dim(self):
        return self.config.dim


def hamiltonian_vector_field(sys: HamiltonianSystem, t, u, p):
    """Right-hand side of Hamilton's equations: (dH/dp, -dH/du) at (t, u, p)."""
    du = np.asarray(sys.grad_p(t, u, p), dtype=float)
    dp = -np.asarray(sys.grad_u(t, u, p), dtype=float)
    if not (np.all(np.isfinite(du)) and np.all(np.isfinite(dp))):
        raise NonFiniteError(f"vector field not finite at t={t}, u={u}, p={p}")
    return du, dp


def hamiltonian_hessian(sys: HamiltonianSystem, t, u, p, fd_step=1e-6):
    """Second-derivative blocks (Huu, Hup, Hpp) of H at (t, u, p).

    Analytic callbacks are used when present; otherwise central differences
    of the gradients.  Huu and Hpp are symmetrized so that downstream
    tangent-flow maps are exactly symplectic.
    """
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    r = u.shape[-1]

    def fd_block(grad, wrt_u):
        cols = []
        for a in range(r):
            e = np.zeros(r)
            e[a] = fd_step
            if wrt_u:
                gp = np.asarray(grad(t, u + e, p), dtype=float)
                gm = np.asarray(grad(t, u - e, p), dtype=float)
            else:
                gp = np.asarray(grad(t, u, p + e), dtype=float)
                gm = np.asarray(grad(t, u, p - e), dtype=float)
            cols.append((gp - gm) / (2.0 * fd_step))
        return np.stack(cols, axis=-1)  # [..., i, a] = d grad_i / d x_a

    if sys.hess_uu is not None:
        huu = np.asarray(sys.hess_uu(t, u, p), dtype=float)
    else:
        huu = fd_block(sys.grad_u, wrt_u=True)
    if sys.hess_pp is not None:
        hpp = np.asarray(sys.hess_pp(t, u, p), dtype=float)
    else:
        hpp = fd_block(sys.grad_p, wrt_u=False)
    if sys.hess_up is not None:
        hup = np.asarray(sys.hess_up(t, u, p), dtype=float)
    else:
        hup = fd_block(sys.grad_u, wrt_u=False)  # [a, b] = d(H_u)_a / d p_b

    swap = (-2, -1)
    huu = 0.5 * (huu + np.swapaxes(huu, *swap))
    hpp = 0.5 * (hpp + np.swapaxes(hpp, *swap))
    return huu, hup, hpp


def linearized_field_matrix(sys: HamiltonianSystem, t, u, p, fd_step=1e-6):
    """Jacobian A of the Hamiltonian vector field X_H with respect to (u, p).

    With symmetric Hessian blocks this matrix satisfies A^T J + J A = 0, so
    the implicit-midpoint tangent map (a Cayley transform of A) is exactly
    symplectic regardless of where A is evaluated.
    """
    huu, hup, hpp = hamiltonian_hessian(sys, t, u, p, fd_step)
    top = np.concatenate([np.swapaxes(hup, -2, -1), hpp], axis=-1)
    bot = np.concatenate([-huu, -hup], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def check_gradients(sys: HamiltonianSystem, probes, fd_step=1e-5):
    """Max relative disagreement between supplied gradients and differences of H.

    ``probes`` is an iterable of (t, u, p) triples.  Used by the self-test to
    enforce the consistency contract on user-supplied derivatives.
    """
    worst = 0.0
    for t, u, p in probes:
        u = as_point(u, sys.dim)
        p = as_point(p, sys.dim)
        gu = np.asarray(sys.grad_u(t, u, p), dtype=float)
        gp = np.asarray(sys.grad_p(t, u, p), dtype=float)
        scale = 1.0 + max(np.abs(gu).max(), np.abs(gp).max())
        for a in range(sys.dim):
            e = np.zeros(sys.dim)
            e[a] = fd_step
            fd_u = (sys.hamiltonian(t, u + e, p) - sys.hamiltonian(t, u - e, p)) / (2 * fd_step)
            fd_p = (sys.hamiltonian(t, u, p + e) - sys.hamiltonian(t, u, p - e)) / (2 * fd_step)
            worst = max(worst, abs(fd_u - gu[a]) / scale, abs(fd_p - gp[a]) / scale)
    return worst


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sample times inside [0, 1].

    Standard trajectories cover the whole interval (first node 0.0, last node
    1.0); partial grids are permitted so that trajectories that escape in
    finite time can still be stored and inspected.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise GridTooCoarseError("a time grid needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        if nodes[0] < 0.0 or nodes[-1] > 1.0 + 1e-12:
            raise ValueError("grid nodes must lie within [0, 1]")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, n_steps, t0=0.0, t1=1.0):
        if n_steps < 2:
            raise GridTooCoarseError("need at least 2 steps")
        return cls(np.linspace(t0, t1, n_steps + 1))

    def __len__(self):
        return self.nodes.size

    @property
    def spans_unit_interval(self):
        return self.nodes[0] == 0.0 and self.nodes[-1] == 1.0


@dataclass(frozen=True)
class Trajectory:
    """A sampled curve (u(t), p(t)) on a time grid.

    positions/momenta have shape (len(grid), r); angular coordinates are
    stored unwrapped.
    """

    grid: TimeGrid
    positions: np.ndarray
    momenta: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.positions, dtype=float))
        p = np.atleast_2d(np.asarray(self.momenta, dtype=float))
        n = len(self.grid)
        if q.shape[0] != n or p.shape != q.shape:
            raise GridTooCoarseError(
                f"positions {q.shape} / momenta {p.shape} do not match grid length {n}"
            )
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise NonFiniteError("trajectory entries must be finite")
        object.__setattr__(self, "positions", q)
        object.__setattr__(self, "momenta", p)

    @property
    def dim(self):
        return self.positions.shape[1]

    def state(self, k):
        return self.positions[k], self.momenta[k]


def trajectory_distance(config: ConfigSpace, a: Trajectory, b: Trajectory):
    """Sup-distance between two trajectories on the same grid (angular-aware)."""
    if len(a.grid) != len(b.grid) or not np.allclose(a.grid.nodes, b.grid.nodes):
        raise GridTooCoarseError("trajectory distance requires a common grid")
    dq = config.wrap_diff(a.positions, b.positions)
    dp = a.momenta - b.momenta
    return float(max(np.abs(dq).max(), np.abs(dp).max()))


@dataclass(frozen=True)
class BoundaryPoint:
    """An element (u0, p0; u1, p1) of T*Q x T*Q - boundary data of a curve."""

    u0: np.ndarray
    p0: np.ndarray
    u1: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        vals = {}
        dims = set()
        for name in ("u0", "p0", "u1", "p1"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(v)):
                raise NonFiniteError(f"boundary component {name} is not finite")
            vals[name] = v
            dims.add(v.shape)
        if len(dims) != 1:
            raise DimensionMismatchError("boundary components must share one dimension")
        for name, v in vals.items():
            object.__setattr__(self, name, v)

    def as_vector(self):
        """Concatenated (u0, p0, u1, p1), matching BoundaryTangent layout."""
        return np.concatenate([self.u0, self.p0, self.u1, self.p1])


@dataclass(frozen=True)
class BoundaryTangent:
    """A tangent vector (du0, dp0, du1, dp1) to T*Q x T*Q."""

    du0: np.ndarray
    dp0: np.ndarray
    du1: np.ndarray
    dp1: np.ndarray

    def __post_init__(self):
        dims = set()
        for name in ("du0", "dp0", "du1", "dp1"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            dims.add(v.shape)
            object.__setattr__(self, name, v)
        if len(dims) != 1:
            raise DimensionMismatchError("tangent components must share one dimension")

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        r = vec.size // 4
        return cls(vec[:r], vec[r:2 * r], vec[2 * r:3 * r], vec[3 * r:])


# ---------------------------------------------------------------------------
# Discrete differentiation
# ---------------------------------------------------------------------------

def fd_weights(x, x0):
    """First-derivative finite-difference weights at x0 from nodes x (Fornberg)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((n, 2))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, 1)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, 1]


def grid_derivative(values, nodes):
    """Discrete time derivative of node values along the grid.

    Five-point (fourth-order) stencils, clamped one-sided near the ends;
    three-point on very short grids.  Handles non-uniform node spacing.
    Values may have shape (n,) or (n, r).
    """
    y = np.asarray(values, dtype=float)
    t = np.asarray(nodes, dtype=float)
    n = t.size
    if y.shape[0] != n:
        raise GridTooCoarseError("values and nodes must have matching lengths")
    if n < 3:
        raise GridTooCoarseError("need at least 3 nodes to differentiate")
    w = 5 if n >= 5 else 3
    half = w // 2

    dt = np.diff(t)
    uniform = np.allclose(dt, dt[0], rtol=1e-12, atol=1e-15)
    out = np.empty_like(y)
    if uniform:
        h = dt[0]
        offsets = np.arange(w) * h
        # one weight row per clamped-window position (0..w-1 within the window)
        rows = [fd_weights(offsets, pos * h) for pos in range(w)]
        windows = np.lib.stride_tricks.sliding_window_view(y, w, axis=0)
        out[half:n - half] = np.tensordot(windows, rows[half], axes=([-1], [0]))
        for k in list(range(half)) + list(range(n - half, n)):
            s = min(max(k - half, 0), n - w)
            out[k] = np.tensordot(y[s:s + w], rows[k - s], axes=([0], [0]))
    else:
        for k in range(n):
            s = min(max(k - half, 0), n - w)
            out[k] = np.tensordot(y[s:s + w], fd_weights(t[s:s + w], t[k]), axes=([0], [0]))
    return out


def _trapezoid(values, nodes):
    return float(np.trapezoid(values, nodes))


# ---------------------------------------------------------------------------
# Action, residual, boundary forms
# ---------------------------------------------------------------------------

def _eval_along(sys: HamiltonianSystem, chi: Trajectory, fn):
    t = chi.grid.nodes
    return np.array([fn(t[k], chi.positions[k], chi.momenta[k]) for k in range(len(t))])


def action_functional(sys: HamiltonianSystem, chi: Trajectory):
    """Trapezoidal approximation of the action integral of p.du/dt - H."""
    if len(chi.grid) < 3:
        raise GridTooCoarseError("action quadrature needs at least 3 nodes")
    t = chi.grid.nodes
    du = grid_derivative(chi.positions, t)
    h_vals = _eval_along(sys, chi, sys.hamiltonian)
    integrand = np.sum(chi.momenta * du, axis=1) - h_vals
    if not np.all(np.isfinite(integrand)):
        raise NonFiniteError("action integrand is not finite")
    return _trapezoid(integrand, t)


def el_residual(sys: HamiltonianSystem, chi: Trajectory):
    """Per-node residual of Hamilton's equations along a sampled curve.

    Returns (res_u, res_p, norm) with res_u = du/dt - dH/dp,
    res_p = dp/dt + dH/du, and norm the max over nodes of the sup-norm.
    A curve is accepted as a solution when norm <= DEFAULT_EL_TOL for
    analytic curves (integrated curves carry scheme-order error).
    """
    if len(chi.grid) < 3:
        raise GridTooCoarseError("residual stencils need at least 3 nodes")
    t = chi.grid.nodes
    du = grid_derivative(chi.positions, t)
    dp = grid_derivative(chi.momenta, t)
    gu = _eval_along(sys, chi, sys.grad_u)
    gp = _eval_along(sys, chi, sys.grad_p)
    if not (np.all(np.isfinite(gu)) and np.all(np.isfinite(gp))):
        raise NonFiniteError("gradient evaluation along trajectory not finite")
    res_u = du - gp
    res_p = dp + gu
    norm = float(max(np.abs(res_u).max(), np.abs(res_p).max()))
    return res_u, res_p, norm


def el_pairing(sys: HamiltonianSystem, chi: Trajectory, delta_u, delta_p):
    """Pairing of the dynamical residual one-form with a variation field.

    This is the bulk term of the first-variation identity

        dS(chi)(delta) = <EL(chi), delta> + alpha(boundary variation),

    so the residual in u pairs with delta_p and the residual in p pairs with
    -delta_u (the sign produced by integrating the p.d(delta u)/dt term by
    parts).
    """
    res_u, res_p, _ = el_residual(sys, chi)
    delta_u = np.asarray(delta_u, dtype=float)
    delta_p = np.asarray(delta_p, dtype=float)
    integrand = np.sum(res_u * delta_p, axis=1) - np.sum(res_p * delta_u, axis=1)
    return _trapezoid(integrand, chi.grid.nodes)


def boundary_projection(chi: Trajectory):
    """Endpoint data (u(0), p(0), u(1), p(1)) of a full-interval trajectory."""
    if not chi.grid.spans_unit_interval:
        raise GridTooCoarseError("boundary projection requires a trajectory covering [0, 1]")
    return BoundaryPoint(chi.positions[0], chi.momenta[0], chi.positions[-1], chi.momenta[-1])


def alpha_eval(bp: BoundaryPoint, v: BoundaryTangent):
    """Canonical boundary one-form: p1.du1 - p0.du0."""
    if bp.u0.shape != v.du0.shape:
        raise DimensionMismatchError("tangent dimension does not match boundary point")
    return float(np.dot(bp.p1, v.du1) - np.dot(bp.p0, v.du0))


def omega_eval(v: BoundaryTangent, w: BoundaryTangent):
    """Boundary symplectic form (the differential of alpha) on two tangents.

    omega(v, w) = (du1.dp1' - dp1.du1') - (du0.dp0' - dp0.du0').
    """
    if v.du0.shape != w.du0.shape:
        raise DimensionMismatchError("tangent dimensions do not match")
    plus = np.dot(v.du1, w.dp1) - np.dot(v.dp1, w.du1)
    minus = np.dot(v.du0, w.dp0) - np.dot(v.dp0, w.du0)
    return float(plus - minus)


def boundary_omega_matrix(r):
    """Matrix of the boundary symplectic form in (du0, dp0, du1, dp1) layout."""
    j = np.zeros((2 * r, 2 * r))
    j[:r, r:] = np.eye(r)
    j[r:, :r] = -np.eye(r)
    m = np.zeros((4 * r, 4 * r))
    m[:2 * r, :2 * r] = -j
    m[2 * r:, 2 * r:] = j
    return m
