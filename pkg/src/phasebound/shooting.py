"""Two-point boundary problems by multistart Newton shooting.

Given endpoints u0, u1 in Q, the solver searches for initial momenta p0 such
that the time-1 flow from (u0, p0) lands on u1.  A multistart seed set,
damped Newton iteration on the shooting residual, and trajectory-distance
deduplication together give an operational meaning to "the solutions joining
u0 to u1 are isolated": distinct representatives survive when the
deduplication radius is halved.

The classification emitted by these routines (Unique / MultipleIsolated /
Continuum / NoSolution, and the derived Dirichlet / locally-Dirichlet /
neither verdicts) is a numerical heuristic over the sampled seeds and
endpoints, and is labeled as such in reports.

The action evaluated on a boundary-value solution is the principal function
of the endpoint pair; its endpoint derivatives reproduce the boundary
momenta (generating-function identities), which is checked here by
branch-tracked finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import (
    ConfigSpace,
    HamiltonianSystem,
    Trajectory,
    action_functional,
    as_point,
    trajectory_distance,
)
from .errors import (
    BranchLostError,
    FlowIncompleteError,
    NoSuchBranchError,
)
from .integrators import (
    IntegratorConfig,
    flow_batch,
    flow_with_jacobian,
)


@dataclass(frozen=True)
class ShootingConfig:
    """Newton-shooting parameters and the multistart seed specification.

    ``seeds`` (explicit momenta) overrides the sampler given by
    ``seed_count`` seeds drawn from ``seed_box``^r (a deterministic grid in
    one dimension, a seeded uniform sample otherwise).
    """

    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    newton_tol: float = 1e-10
    max_iter: int = 80
    seeds: Optional[tuple] = None
    seed_count: int = 32
    seed_box: tuple = (-6.0, 6.0)
    seed_rng: int = 0
    distinctness_radius: float = 1e-4
    singular_cond: float = 1e10

    def __post_init__(self):
        if self.distinctness_radius <= 0:
            raise ValueError("distinctness radius must be positive")
        if self.seeds is not None and len(self.seeds) == 0:
            raise ValueError("need at least one seed")

    def resolve_seeds(self, r):
        if self.seeds is not None:
            return np.atleast_2d(np.asarray(self.seeds, dtype=float)).reshape(-1, r)
        lo, hi = self.seed_box
        if r == 1:
            return np.linspace(lo, hi, self.seed_count)[:, None]
        rng = np.random.default_rng(self.seed_rng)
        return rng.uniform(lo, hi, size=(self.seed_count, r))


@dataclass(frozen=True)
class Classification:
    """Numerical verdict for a solution set; heuristic over the seed sample."""

    kind: str  # Unique | MultipleIsolated | Continuum | NoSolution
    count: int
    notes: str = ""
    heuristic: bool = True


@dataclass(frozen=True)
class BvpBranch:
    p0: np.ndarray
    trajectory: Trajectory
    residual: float
    jacobian: np.ndarray  # du(1)/dp0
    cond: float

    @property
    def p1(self):
        return self.trajectory.momenta[-1]

    @property
    def u1(self):
        return self.trajectory.positions[-1]


@dataclass(frozen=True)
class BvpSolutionSet:
    endpoints: Optional[tuple]
    solutions: tuple
    classification: Classification


def shoot_residual(sys: HamiltonianSystem, u0, p0, u1, cfg: ShootingConfig):
    """Shooting residual u(1; u0, p0) - u1 and its derivative in p0.

    Angular coordinates are wrapped into (-pi, pi].  Raises
    FlowIncompleteError when the flow from (u0, p0) does not reach t = 1.
    """
    r = sys.dim
    u0 = as_point(u0, r)
    p0 = as_point(p0, r)
    u1 = as_point(u1, r)
    result, jac = flow_with_jacobian(sys, u0, p0, cfg.integrator)
    if not result.completed:
        raise FlowIncompleteError(result.status)
    res = sys.config.wrap_diff(result.trajectory.positions[-1], u1)
    return res, jac[:r, r:]


def _cond(mat):
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] <= 0 or not np.isfinite(sv[-1]):
        return float("inf")
    return float(sv[0] / sv[-1])


def _batch_eval(sys, u0, P, u1, icfg, want_jacobian):
    """Residuals (and du1/dp0 blocks) for a batch of momentum seeds."""
    r = u0.size
    U0 = np.broadcast_to(u0, P.shape)
    _, _, U1, _, ok, jac = flow_batch(sys, U0, P, icfg, want_jacobian=want_jacobian,
                                      tangent_exact=False)
    res = sys.config.wrap_diff(U1, np.broadcast_to(u1, U1.shape))
    with np.errstate(all="ignore"):
        rnorm = np.max(np.abs(res), axis=1)
    rnorm = np.where(ok & np.isfinite(rnorm), rnorm, np.inf)
    blocks = jac[:, :r, r:] if want_jacobian else None
    return res, rnorm, blocks, ok


def _newton_directions(blocks, res):
    """Least-squares Newton directions, robust to singular shooting matrices."""
    try:
        return -np.linalg.solve(blocks, res[..., None])[..., 0]
    except np.linalg.LinAlgError:
        pinv = np.linalg.pinv(blocks)
        return -np.einsum("bij,bj->bi", pinv, res)


def _multistart_newton(sys, u0, u1, seeds, cfg):
    """Run damped Newton from every seed; return converged momenta."""
    icfg = cfg.integrator
    P = seeds.copy()
    bsz = P.shape[0]
    res, rnorm, blocks, ok = _batch_eval(sys, u0, P, u1, icfg, want_jacobian=True)
    alive = ok.copy()
    for _ in range(cfg.max_iter):
        work = alive & (rnorm > cfg.newton_tol)
        if not work.any():
            break
        idx = np.flatnonzero(work)
        delta = _newton_directions(blocks[idx], res[idx])
        delta = np.where(np.isfinite(delta), delta, 0.0)
        # a vanishing direction (e.g. singular shooting matrix at an
        # unreachable target) cannot be line-searched; retire those seeds
        dead = np.max(np.abs(delta), axis=1) <= 1e-14 * (1.0 + np.max(np.abs(P[idx]), axis=1))
        alive[idx[dead]] = False
        damp = np.ones(idx.size)
        improved = np.zeros(idx.size, dtype=bool)
        cand = P[idx].copy()
        for _bt in range(14):
            trying = ~improved & ~dead
            if not trying.any():
                break
            trial = P[idx][trying] + damp[trying, None] * delta[trying]
            _, tnorm, _, tok = _batch_eval(sys, u0, trial, u1, icfg, want_jacobian=False)
            better = tok & (tnorm < (1.0 - 1e-4) * rnorm[idx][trying])
            sub = np.flatnonzero(trying)
            cand[sub[better]] = trial[better]
            improved[sub[better]] = True
            damp[sub[~better]] *= 0.5
        alive[idx[~improved & ~dead]] = False
        moved = idx[improved]
        if moved.size:
            P[moved] = cand[improved]
            nres, nnorm, nblocks, nok = _batch_eval(
                sys, u0, P[moved], u1, icfg, want_jacobian=True)
            res[moved], rnorm[moved], blocks[moved] = nres, nnorm, nblocks
            alive[moved] &= nok
    conv = alive & (rnorm <= cfg.newton_tol)
    return P[conv], rnorm[conv]


def _branches_from_momenta(sys, u0, u1, momenta, rnorms, cfg):
    """Final trajectories, dedup by trajectory distance, sorted branches."""
    if momenta.shape[0] == 0:
        return []
    icfg = cfg.integrator
    U0 = np.broadcast_to(u0, momenta.shape)
    grid, path, U1, P1, ok, jac = flow_batch(
        sys, U0, momenta, icfg, want_jacobian=True, store_path=True)
    path_u, path_p = path
    r = u0.size
    entries = []
    for b in range(momenta.shape[0]):
        if not ok[b]:
            continue
        traj = Trajectory(grid, path_u[:, b], path_p[:, b])
        block = jac[b, :r, r:]
        entries.append(BvpBranch(
            p0=momenta[b].copy(),
            trajectory=traj,
            residual=float(rnorms[b]),
            jacobian=block,
            cond=_cond(block),
        ))
    # sort by momentum, lexicographically, for a deterministic merge order
    order = np.lexsort(tuple(np.array([e.p0 for e in entries]).T[::-1]))
    return [entries[i] for i in order]


def _dedupe(config: ConfigSpace, entries, radius):
    reps = []
    for e in entries:
        matched = None
        for i, rep in enumerate(reps):
            if trajectory_distance(config, e.trajectory, rep.trajectory) < radius:
                matched = i
                break
        if matched is None:
            reps.append(e)
        elif e.residual < reps[matched].residual:
            reps[matched] = e
    return reps


def _classify(config, entries, cfg):
    if not entries:
        return Classification("NoSolution", 0, "no seed converged"), []
    reps = _dedupe(config, entries, cfg.distinctness_radius)
    reps_half = _dedupe(config, entries, 0.5 * cfg.distinctness_radius)
    stable = len(reps_half) == len(reps)
    n_singular = sum(1 for e in reps if e.cond > cfg.singular_cond)
    if len(reps) >= 2 and (n_singular >= 2 or not stable):
        note = (f"{len(reps)} representatives, {n_singular} with shooting matrix "
                f"condition > {cfg.singular_cond:.0e}; dedup "
                + ("stable" if stable else "unstable") + " under radius halving")
        return Classification("Continuum", len(reps), note), reps
    if len(reps) == 1:
        return Classification("Unique", 1, f"condition {reps[0].cond:.3e}"), reps
    return Classification(
        "MultipleIsolated", len(reps),
        f"{len(reps)} isolated representatives, dedup stable"), reps


def solve_dirichlet(sys: HamiltonianSystem, u0, u1, cfg: ShootingConfig):
    """All boundary-value solutions found from the multistart seed set."""
    r = sys.dim
    u0 = as_point(u0, r)
    u1 = as_point(u1, r)
    seeds = cfg.resolve_seeds(r)
    momenta, rnorms = _multistart_newton(sys, u0, u1, seeds, cfg)
    entries = _branches_from_momenta(sys, u0, u1, momenta, rnorms, cfg)
    classification, reps = _classify(sys.config, entries, cfg)
    return BvpSolutionSet(endpoints=(u0, u1), solutions=tuple(reps),
                          classification=classification)


def hamilton_principal_function(sys: HamiltonianSystem, u0, u1, cfg: ShootingConfig, branch=0):
    """Action evaluated on the selected boundary-value solution.

    For theories with several isolated branches this is the per-branch value
    of the (locally defined, multivalued) principal function.
    """
    sols = solve_dirichlet(sys, u0, u1, cfg)
    if branch >= len(sols.solutions):
        raise NoSuchBranchError(
            f"requested branch {branch}, found {len(sols.solutions)} solutions")
    return action_functional(sys, sols.solutions[branch].trajectory)


def _continue_branch(sys, u0, u1, p0_seed, cfg, max_jump):
    """Re-solve at displaced endpoints, warm-started on one branch.

    Raises BranchLostError when the converged momentum jumps farther than
    ``max_jump`` from the seed (the continuation fell onto another branch)
    or when the warm-started Newton fails.
    """
    single = replace(cfg, seeds=(np.asarray(p0_seed, dtype=float),))
    momenta, rnorms = _multistart_newton(sys, u0, u1, single.resolve_seeds(u0.size), single)
    if momenta.shape[0] == 0:
        raise BranchLostError(f"continuation from p0={p0_seed} did not converge")
    jump = float(np.max(np.abs(momenta[0] - p0_seed)))
    if jump > max_jump:
        raise BranchLostError(
            f"continuation jumped {jump:.3e} > {max_jump:.3e} in p0")
    entries = _branches_from_momenta(sys, u0, u1, momenta, rnorms, cfg)
    if not entries:
        raise BranchLostError("continuation trajectory could not be reconstructed")
    return entries[0]


@dataclass(frozen=True)
class GeneratingFunctionReport:
    """Finite-difference check that the principal function generates the branch.

    defect_u1 = |dW/du1 - p1|, defect_u0 = |dW/du0 + p0|, and the symmetry
    defect compares the two finite-difference routes to the mixed second
    derivatives of W (closedness of the boundary one-form on the projected
    solution set).
    """

    defect_u1: float
    defect_u0: float
    symmetry_defect: float
    p0: np.ndarray
    p1: np.ndarray
    action: float


def generating_function_check(sys: HamiltonianSystem, u0, u1, cfg: ShootingConfig,
                              branch=0, fd_step=1e-5):
    r = sys.dim
    u0 = as_point(u0, r)
    u1 = as_point(u1, r)
    sols = solve_dirichlet(sys, u0, u1, cfg)
    if branch >= len(sols.solutions):
        raise NoSuchBranchError(
            f"requested branch {branch}, found {len(sols.solutions)} solutions")
    center = sols.solutions[branch]
    p0c = center.p0
    p1c = center.p1
    max_jump = 1e3 * fd_step

    w_u0 = np.zeros((r, 2))
    w_u1 = np.zeros((r, 2))
    p1_of_u0 = np.zeros((r, 2, r))
    p0_of_u1 = np.zeros((r, 2, r))
    for a in range(r):
        e = np.zeros(r)
        e[a] = fd_step
        for sgn_idx, sgn in enumerate((+1.0, -1.0)):
            b0 = _continue_branch(sys, u0 + sgn * e, u1, p0c, cfg, max_jump)
            w_u0[a, sgn_idx] = action_functional(sys, b0.trajectory)
            p1_of_u0[a, sgn_idx] = b0.p1
            b1 = _continue_branch(sys, u0, u1 + sgn * e, p0c, cfg, max_jump)
            w_u1[a, sgn_idx] = action_functional(sys, b1.trajectory)
            p0_of_u1[a, sgn_idx] = b1.p0

    grad_w_u0 = (w_u0[:, 0] - w_u0[:, 1]) / (2 * fd_step)
    grad_w_u1 = (w_u1[:, 0] - w_u1[:, 1]) / (2 * fd_step)
    defect_u0 = float(np.max(np.abs(grad_w_u0 + p0c)))
    defect_u1 = float(np.max(np.abs(grad_w_u1 - p1c)))

    # d2W/du0^a du1^b via p1 displacements in u0, and via p0 displacements in u1
    mixed_1 = (p1_of_u0[:, 0, :] - p1_of_u0[:, 1, :]) / (2 * fd_step)  # [a, b]
    mixed_2 = -(p0_of_u1[:, 0, :] - p0_of_u1[:, 1, :]) / (2 * fd_step)  # [b, a]
    symmetry_defect = float(np.max(np.abs(mixed_1 - mixed_2.T)))
    return GeneratingFunctionReport(
        defect_u1=defect_u1,
        defect_u0=defect_u0,
        symmetry_defect=symmetry_defect,
        p0=p0c,
        p1=p1c,
        action=action_functional(sys, center.trajectory),
    )


@dataclass(frozen=True)
class TheoryClassification:
    """Sampled verdict on endpoint solvability; a heuristic, with evidence."""

    kind: str  # Dirichlet | LocallyDirichlet | Neither
    evidence: tuple
    witness: Optional[str] = None
    heuristic: bool = True


def classify_theory(sys: HamiltonianSystem, sample_endpoints, cfg: ShootingConfig,
                    probe_radius=1e-2):
    """Classify endpoint solvability over a sample of (u0, u1) pairs.

    Dirichlet: every sampled pair has exactly one solution.  Locally
    Dirichlet: every pair that has solutions has only isolated ones, and
    solutions persist under small endpoint perturbations (openness probe).
    Anything else is Neither, with the witnessing pair recorded.
    """
    if not sample_endpoints:
        raise ValueError("need at least one endpoint pair")
    r = sys.dim
    evidence = []
    any_solutions = False
    all_unique = True
    all_isolated = True
    witness = None
    solvable_pairs = []
    for pair in sample_endpoints:
        u0 = as_point(pair[0], r)
        u1 = as_point(pair[1], r)
        sols = solve_dirichlet(sys, u0, u1, cfg)
        kind = sols.classification.kind
        evidence.append((u0.tolist(), u1.tolist(), kind, sols.classification.count))
        if kind == "NoSolution":
            all_unique = False
        elif kind == "Continuum":
            all_isolated = False
            all_unique = False
            if witness is None:
                witness = f"Continuum at endpoints ({u0.tolist()}, {u1.tolist()})"
        else:
            any_solutions = True
            solvable_pairs.append((u0, u1, sols))
            if kind != "Unique":
                all_unique = False

    openness_ok = True
    for u0, u1, sols in solvable_pairs:
        warm = replace(cfg, seeds=tuple(b.p0 for b in sols.solutions))
        for a in range(r):
            e = np.zeros(r)
            e[a] = probe_radius
            for sgn in (+1.0, -1.0):
                probe = solve_dirichlet(sys, u0, u1 + sgn * e, warm)
                if probe.classification.kind == "NoSolution":
                    openness_ok = False
                    if witness is None:
                        witness = (f"no solution after perturbing u1 to "
                                   f"{(u1 + sgn * e).tolist()} (from u0={u0.tolist()})")
                    break
            if not openness_ok:
                break
        if not openness_ok:
            break

    if not any_solutions:
        return TheoryClassification(
            "Neither", tuple(evidence),
            witness or "no sampled endpoint pair is joined by a solution")
    if all_unique and openness_ok and len(solvable_pairs) == len(sample_endpoints):
        return TheoryClassification("Dirichlet", tuple(evidence))
    if all_isolated and openness_ok and len(solvable_pairs) == len(sample_endpoints):
        return TheoryClassification("LocallyDirichlet", tuple(evidence))
    return TheoryClassification("Neither", tuple(evidence),
                                witness or "mixed solvability over the sample")


def solve_with_lagrangian_boundary(sys: HamiltonianSystem, F: Optional[Callable],
                                   grad_F: Optional[Callable], cfg: ShootingConfig,
                                   state_seeds=None, fixed_endpoints=None,
                                   fd_step=1e-6):
    """Critical curves whose boundary data lies on the graph of dF.

    The implemented boundary submanifolds are graphs {p0 = -dF/du0,
    p1 = dF/du1} over Q x Q; the fixed-endpoint problem is not of graph type
    and is routed to the Dirichlet solver via ``fixed_endpoints``.  Newton
    runs on the unknowns (u0, p0) with least-squares steps, so families of
    solutions (rank-deficient boundary conditions) converge to the member
    nearest the seed.
    """
    if fixed_endpoints is not None:
        return solve_dirichlet(sys, fixed_endpoints[0], fixed_endpoints[1], cfg)
    if grad_F is None:
        raise ValueError("graph-type boundary data needs the gradient of F")
    r = sys.dim
    icfg = cfg.integrator

    def residual_and_jac(x):
        u0, p0 = x[:r], x[r:]
        result, jac = flow_with_jacobian(sys, u0, p0, icfg)
        if not result.completed:
            return None
        u1 = result.trajectory.positions[-1]
        p1 = result.trajectory.momenta[-1]
        g0, g1 = (np.asarray(g, dtype=float) for g in grad_F(u0, u1))
        res = np.concatenate([p0 + g0, p1 - g1])

        # Hessian blocks of F by differences of its gradient
        h00 = np.zeros((r, r))
        h01 = np.zeros((r, r))
        h10 = np.zeros((r, r))
        h11 = np.zeros((r, r))
        for a in range(r):
            e = np.zeros(r)
            e[a] = fd_step
            gp0, gp1 = grad_F(u0 + e, u1)
            gm0, gm1 = grad_F(u0 - e, u1)
            h00[:, a] = (np.asarray(gp0) - np.asarray(gm0)) / (2 * fd_step)
            h10[:, a] = (np.asarray(gp1) - np.asarray(gm1)) / (2 * fd_step)
            gp0, gp1 = grad_F(u0, u1 + e)
            gm0, gm1 = grad_F(u0, u1 - e)
            h01[:, a] = (np.asarray(gp0) - np.asarray(gm0)) / (2 * fd_step)
            h11[:, a] = (np.asarray(gp1) - np.asarray(gm1)) / (2 * fd_step)

        uu, up = jac[:r, :r], jac[:r, r:]
        pu, pp = jac[r:, :r], jac[r:, r:]
        top = np.concatenate([h00 + h01 @ uu, np.eye(r) + h01 @ up], axis=1)
        bot = np.concatenate([pu - h10 - h11 @ uu, pp - h11 @ up], axis=1)
        full_jac = np.concatenate([top, bot], axis=0)
        return res, full_jac, result.trajectory

    if state_seeds is None:
        momenta = cfg.resolve_seeds(r)
        state_seeds = [(np.zeros(r), p) for p in momenta]

    entries = []
    for u0_seed, p0_seed in state_seeds:
        x = np.concatenate([as_point(u0_seed, r), as_point(p0_seed, r)])
        evaluated = residual_and_jac(x)
        if evaluated is None:
            continue
        res, jac, traj = evaluated
        rnorm = float(np.max(np.abs(res)))
        ok = True
        for _ in range(cfg.max_iter):
            if rnorm <= cfg.newton_tol:
                break
            delta = np.linalg.lstsq(jac, -res, rcond=None)[0]
            damp, improved = 1.0, False
            for _bt in range(25):
                trial = residual_and_jac(x + damp * delta)
                if trial is not None:
                    tnorm = float(np.max(np.abs(trial[0])))
                    if tnorm < (1.0 - 1e-4) * rnorm:
                        x = x + damp * delta
                        res, jac, traj = trial
                        rnorm = tnorm
                        improved = True
                        break
                damp *= 0.5
            if not improved:
                ok = False
                break
        if ok and rnorm <= cfg.newton_tol:
            entries.append(BvpBranch(
                p0=x[r:].copy(),
                trajectory=traj,
                residual=rnorm,
                jacobian=jac,
                cond=_cond(jac),
            ))
    order = np.lexsort(tuple(np.array([e.p0 for e in entries]).T[::-1])) if entries else []
    entries = [entries[i] for i in order]
    classification, reps = _classify(sys.config, entries, cfg)
    return BvpSolutionSet(endpoints=None, solutions=tuple(reps), classification=classification)
