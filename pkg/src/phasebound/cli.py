"""Scenario-driven command-line front end.

A scenario is a JSON file naming a registered system, a task, and the task's
parameters; running it emits a JSON report (all numbers at full 17-digit
precision, keys sorted, so identical scenarios and seeds produce identical
bytes outside the timing block) and comma-separated trajectory tables.
Output files are written atomically (temp file, then rename).

Exit codes: 0 success, 2 scenario/schema error (nothing written), 3
task-level failure (e.g. no solution where one was required; the report is
still written when possible).

    phasebound run scenario.json [--out DIR] [--seed N] [--step H]
    phasebound selftest [--strict] [--out DIR]
    phasebound list-examples

The default output directory is $PHASEBOUND_OUT, else the working directory.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys as _sys
import time

import numpy as np

from . import __version__
from .constraints import (
    ExtendedState,
    gotay_step,
    integrate_constrained,
    make_constraint,
)
from .errors import PhaseboundError, UnstableConstraintError
from .integrators import (
    BlowUp,
    Completed,
    IntegratorConfig,
    NewtonFailure,
    energy_drift,
    integrate_flow,
)
from .shooting import (
    ShootingConfig,
    classify_theory,
    generating_function_check,
    solve_dirichlet,
)
from .systems import example_names, make_example, topological_limit_study, _field_from_params
from .verify import isotropy_defect_bvp, isotropy_defect_flow, sample_phase_points

ENV_OUT_DIR = "PHASEBOUND_OUT"

TASKS = (
    "flow", "bvp", "classify", "isotropy", "generating-function",
    "lambda-study", "constrained", "gotay",
)

TOP_KEYS = {"system", "task", "integrator", "shooting", "parameters", "seed", "output"}
INTEGRATOR_KEYS = {"scheme", "step", "newton_tol", "newton_max_iter", "blowup_threshold"}
SHOOTING_KEYS = {"newton_tol", "max_iter", "seeds", "seed_count", "seed_box",
                 "distinctness_radius"}
OUTPUT_KEYS = {"report", "trajectory"}
TASK_PARAM_KEYS = {
    "flow": {"u0", "p0", "t0", "t1"},
    "bvp": {"endpoints", "require_solutions"},
    "classify": {"endpoint_pairs", "sample_count", "box", "probe_radius"},
    "isotropy": {"route", "points", "endpoint_pairs", "sample_count", "box", "fd_step"},
    "generating-function": {"endpoints", "branch", "fd_step"},
    "lambda-study": {"lambdas", "endpoints"},
    "constrained": {"constraint", "u0", "e0", "gauge"},
    "gotay": {"constraint", "state"},
}


class ScenarioError(PhaseboundError):
    """Scenario file is malformed; maps to exit code 2."""


class TaskFailure(PhaseboundError):
    """The task ran but its requirement failed; maps to exit code 3."""


# ---------------------------------------------------------------------------
# Full-precision serialization
# ---------------------------------------------------------------------------

def _fmt_float(x):
    if np.isnan(x):
        return "NaN"
    if np.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return f"{x:.17g}"


def dump_full_precision(obj, indent=0):
    """JSON text with every float at 17 significant digits, keys sorted."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for key in sorted(obj):
            items.append(f'{pad}  {json.dumps(str(key))}: '
                         f'{dump_full_precision(obj[key], indent + 1)}')
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}  {dump_full_precision(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    return json.dumps(str(obj))


def to_jsonable(obj):
    """Recursively convert numpy containers to plain Python."""
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def atomic_write(path, text):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w") as handle:
        handle.write(text)
    os.replace(tmp, path)


def write_trajectory_csv(path, traj):
    r = traj.dim
    header = ["t"] + [f"u_{a}" for a in range(r)] + [f"p_{a}" for a in range(r)]
    lines = [",".join(header)]
    for k, t in enumerate(traj.grid.nodes):
        row = [_fmt_float(t)]
        row += [_fmt_float(v) for v in traj.positions[k]]
        row += [_fmt_float(v) for v in traj.momenta[k]]
        lines.append(",".join(row))
    atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Scenario loading and validation
# ---------------------------------------------------------------------------

def _reject_unknown(mapping, allowed, where):
    unknown = set(mapping) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in {where}; "
                            f"allowed: {sorted(allowed)}")


def load_scenario(path):
    try:
        with open(path) as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    _reject_unknown(data, TOP_KEYS, "scenario")
    if "system" not in data or "task" not in data:
        raise ScenarioError("scenario needs 'system' and 'task'")
    task = data["task"]
    if task not in TASKS:
        raise ScenarioError(f"unknown task {task!r}; known tasks: {', '.join(TASKS)}")
    _reject_unknown(data.get("integrator", {}), INTEGRATOR_KEYS, "integrator")
    _reject_unknown(data.get("shooting", {}), SHOOTING_KEYS, "shooting")
    _reject_unknown(data.get("output", {}), OUTPUT_KEYS, "output")
    params = data.get("parameters", {})
    if not isinstance(params, dict):
        raise ScenarioError("'parameters' must be an object")
    _reject_unknown(params, TASK_PARAM_KEYS[task], f"parameters of task {task!r}")
    system = data["system"]
    if isinstance(system, str):
        system = {"name": system, "params": {}}
    elif isinstance(system, dict):
        _reject_unknown(system, {"name", "params"}, "system")
        system = {"name": system.get("name"), "params": system.get("params", {})}
    else:
        raise ScenarioError("'system' must be a name or {name, params}")
    if system["name"] not in example_names():
        raise ScenarioError(f"unknown system {system['name']!r}; "
                            f"known: {', '.join(example_names())}")
    data = dict(data)
    data["system"] = system
    return data


def _build_example(scenario):
    try:
        return make_example(scenario["system"]["name"], **scenario["system"]["params"])
    except TypeError as exc:
        raise ScenarioError(f"bad system parameters: {exc}") from exc


def _integrator_config(scenario, step_override=None):
    kwargs = dict(scenario.get("integrator", {}))
    if step_override is not None:
        kwargs["step"] = step_override
    try:
        return IntegratorConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad integrator configuration: {exc}") from exc


def _shooting_config(scenario, icfg):
    kwargs = dict(scenario.get("shooting", {}))
    if "seeds" in kwargs:
        kwargs["seeds"] = tuple(np.atleast_1d(np.asarray(s, dtype=float))
                                for s in kwargs["seeds"])
    if "seed_box" in kwargs:
        kwargs["seed_box"] = tuple(kwargs["seed_box"])
    try:
        return ShootingConfig(integrator=icfg, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad shooting configuration: {exc}") from exc


def _status_dict(status):
    if isinstance(status, Completed):
        return {"kind": "Completed"}
    if isinstance(status, BlowUp):
        return {"kind": "BlowUp", "t_escape": status.t_escape}
    if isinstance(status, NewtonFailure):
        return {"kind": "NewtonFailure", "t": status.t}
    return {"kind": str(status)}


# ---------------------------------------------------------------------------
# Task runners: each returns (results dict, trajectory or None)
# ---------------------------------------------------------------------------

def _task_flow(ex, scenario, icfg, scfg, seed):
    params = scenario.get("parameters", {})
    if "u0" not in params or "p0" not in params:
        raise ScenarioError("flow task needs parameters u0 and p0")
    res = integrate_flow(ex.system, params["u0"], params["p0"], icfg,
                         t0=params.get("t0", 0.0), t1=params.get("t1", 1.0))
    out = {
        "status": _status_dict(res.status),
        "final_time": float(res.trajectory.grid.nodes[-1]),
        "u_end": res.trajectory.positions[-1],
        "p_end": res.trajectory.momenta[-1],
        "n_nodes": len(res.trajectory.grid),
    }
    if res.completed:
        out["energy_drift"] = energy_drift(ex.system, res.trajectory)
    return out, res.trajectory


def _branch_dict(ex, branch):
    from .core import action_functional

    return {
        "p0": branch.p0,
        "p1": branch.p1,
        "u1": branch.u1,
        "residual": branch.residual,
        "jacobian_cond": branch.cond,
        "action": action_functional(ex.system, branch.trajectory),
    }


def _task_bvp(ex, scenario, icfg, scfg, seed):
    params = scenario.get("parameters", {})
    if "endpoints" not in params:
        raise ScenarioError("bvp task needs parameters.endpoints = [u0, u1]")
    u0, u1 = params["endpoints"]
    sols = solve_dirichlet(ex.system, u0, u1, scfg)
    out = {
        "classification": {
            "kind": sols.classification.kind,
            "count": sols.classification.count,
            "notes": sols.classification.notes,
            "heuristic": sols.classification.heuristic,
        },
        "branches": [_branch_dict(ex, b) for b in sols.solutions],
    }
    required = int(params.get("require_solutions", 0))
    traj = sols.solutions[0].trajectory if sols.solutions else None
    if len(sols.solutions) < required:
        raise TaskFailure(
            f"required {required} solution(s), found {len(sols.solutions)} "
            f"({sols.classification.kind})", )
    return out, traj


def _endpoint_pairs(ex, params, seed):
    if "endpoint_pairs" in params:
        return [(p[0], p[1]) for p in params["endpoint_pairs"]]
    count = int(params.get("sample_count", 10))
    lo, hi = params.get("box", (-1.0, 1.0))
    rng = np.random.default_rng(seed)
    r = ex.system.dim
    return [(rng.uniform(lo, hi, r), rng.uniform(lo, hi, r)) for _ in range(count)]


def _task_classify(ex, scenario, icfg, scfg, seed):
    params = scenario.get("parameters", {})
    pairs = _endpoint_pairs(ex, params, seed)
    verdict = classify_theory(ex.system, pairs, scfg,
                              probe_radius=params.get("probe_radius", 1e-2))
    return {
        "verdict": verdict.kind,
        "heuristic": verdict.heuristic,
        "witness": verdict.witness,
        "evidence": [
            {"u0": e[0], "u1": e[1], "kind": e[2], "count": e[3]} for e in verdict.evidence
        ],
    }, None


def _task_isotropy(ex, scenario, icfg, scfg, seed):
    params = scenario.get("parameters", {})
    route = params.get("route", "flow")
    if route == "flow":
        if "points" in params:
            points = [(p[0], p[1]) for p in params["points"]]
        else:
            points = sample_phase_points(ex.system.dim, int(params.get("sample_count", 10)),
                                         tuple(params.get("box", (-1.5, 1.5))), seed)
        report = isotropy_defect_flow(ex.system, points, icfg, seed=seed)
    elif route == "bvp":
        pairs = _endpoint_pairs(ex, params, seed)
        report = isotropy_defect_bvp(ex.system, pairs, scfg,
                                     fd_step=params.get("fd_step", 1e-5), seed=seed)
    else:
        raise ScenarioError(f"isotropy route must be 'flow' or 'bvp', got {route!r}")
    return {
        "samples": report.samples,
        "inapplicable": [list(entry) for entry in report.inapplicable],
        "max_defect": report.max_defect,
        "tangent_source": report.tangent_source,
        "rank_estimate": report.rank_estimate,
        "seed": report.seed,
        "caveat": report.caveat,
    }, None


def _task_generating_function(ex, scenario, icfg, scfg, seed):
    params = scenario.get("parameters", {})
    if "endpoints" not in params:
        raise ScenarioError("generating-function task needs parameters.endpoints")
    u0, u1 = params["endpoints"]
    rep = generating_function_check(ex.system, u0, u1, scfg,
                                    branch=int(params.get("branch", 0)),
                                    fd_step=params.get("fd_step", 1e-5))
    return {
        "defect_u1": rep.defect_u1,
        "defect_u0": rep.defect_u0,
        "symmetry_defect": rep.symmetry_defect,
        "p0": rep.p0,
        "p1": rep.p1,
        "action": rep.action,
    }, None


def _task_lambda_study(ex, scenario, icfg, scfg, seed):
    params = scenario.get("parameters", {})
    if scenario["system"]["name"] != "lambda-family":
        raise ScenarioError("lambda-study requires system 'lambda-family'")
    if "lambdas" not in params or "endpoints" not in params:
        raise ScenarioError("lambda-study needs parameters.lambdas and parameters.endpoints")
    (X, dX, d2X, x_flow), dim = _field_from_params(scenario["system"]["params"])
    u0, u1 = params["endpoints"]
    report = topological_limit_study(params["lambdas"], u0, u1, scfg,
                                     X=X, dX=dX, d2X=d2X, dim=dim, x_flow=x_flow)
    rows = []
    for row in report.rows:
        rows.append({
            "lambda": row.lam,
            "p0": row.p0,
            "action": row.action,
            "second_order_residual": row.second_order_residual,
            "flowline_distance": row.flowline_distance,
            "status": row.status,
        })
    return {"rows": rows, "momentum_slope": report.momentum_slope, "notes": report.notes}, None


def _constraint_from_params(params):
    spec = params.get("constraint")
    if not isinstance(spec, dict) or "name" not in spec:
        raise ScenarioError("constrained/gotay tasks need parameters.constraint = {name, ...}")
    extra = {k: v for k, v in spec.items() if k != "name"}
    try:
        return make_constraint(spec["name"], **extra)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(str(exc)) from exc


def _task_constrained(ex, scenario, icfg, scfg, seed):
    params = scenario.get("parameters", {})
    spec = _constraint_from_params(params)
    if "u0" not in params or "e0" not in params:
        raise ScenarioError("constrained task needs parameters u0 and e0")
    gauge = params.get("gauge", "lambda-zero")
    if gauge != "lambda-zero":
        raise ScenarioError("only the lambda-zero gauge is scenario-selectable")
    try:
        res = integrate_constrained(ex.system, spec, params["u0"], params["e0"], icfg)
    except UnstableConstraintError as exc:
        raise TaskFailure(f"constraint unstable at t={exc.t}: tangency residual "
                          f"{exc.residual:.6e}") from exc
    out = {
        "status": _status_dict(res.status),
        "u_end": res.trajectory.positions[-1],
        "p_end": res.trajectory.momenta[-1],
        "e_end": res.e_path[-1],
        "energy_drift": res.energy_drift,
        "max_polar_residual": res.max_polar_residual,
        "max_tangency_residual": res.max_tangency_residual,
        "momentum_constraint_drift": 0.0,  # p = sigma(e) holds by construction
    }
    return out, res.trajectory


def _task_gotay(ex, scenario, icfg, scfg, seed):
    params = scenario.get("parameters", {})
    spec = _constraint_from_params(params)
    state = params.get("state")
    if not isinstance(state, dict) or not {"u", "p", "lambda", "e"} <= set(state):
        raise ScenarioError("gotay task needs parameters.state = {u, p, lambda, e}")
    st = ExtendedState(state["u"], state["p"], state["lambda"], state["e"])
    rep = gotay_step(ex.system, spec, st)
    return {
        "kernel_dim": rep.kernel_dim,
        "primary_residual": rep.primary_residual,
        "polar_residual": rep.polar_residual,
        "stable": rep.stable,
        "tangency_residual": rep.tangency_residual,
        "secondary_direction": rep.secondary_direction,
        "d_velocity": rep.d_velocity,
        "c_rate": rep.c_rate,
        "c_residual": rep.c_residual,
        "terminated": rep.terminated,
    }, None


_TASK_RUNNERS = {
    "flow": _task_flow,
    "bvp": _task_bvp,
    "classify": _task_classify,
    "isotropy": _task_isotropy,
    "generating-function": _task_generating_function,
    "lambda-study": _task_lambda_study,
    "constrained": _task_constrained,
    "gotay": _task_gotay,
}


# ---------------------------------------------------------------------------
# Report assembly and entry points
# ---------------------------------------------------------------------------

def _provenance(scenario, seed):
    canonical = dump_full_precision(to_jsonable(scenario))
    return {
        "package": "phasebound",
        "version": __version__,
        "seed": seed,
        "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
    }


def run_scenario(path, out_dir=None, seed=None, step=None):
    """Execute a scenario file; returns (report dict, files written, exit code)."""
    scenario = load_scenario(path)
    seed = int(scenario.get("seed", 0)) if seed is None else int(seed)
    out_dir = out_dir or os.environ.get(ENV_OUT_DIR) or "."
    os.makedirs(out_dir, exist_ok=True)
    icfg = _integrator_config(scenario, step_override=step)
    ex = _build_example(scenario)
    scfg = _shooting_config(scenario, icfg)
    started = time.perf_counter()
    failure = None
    try:
        results, traj = _TASK_RUNNERS[scenario["task"]](ex, scenario, icfg, scfg, seed)
    except TaskFailure as exc:
        failure = str(exc)
        results, traj = {"failure": failure}, None
    walltime = time.perf_counter() - started

    report = {
        "scenario": to_jsonable(scenario),
        "results": to_jsonable(results),
        "provenance": _provenance(to_jsonable(scenario), seed),
        "timing": {
            "walltime_s": walltime,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    }
    output = scenario.get("output", {})
    report_path = os.path.join(out_dir, output.get("report", "report.json"))
    written = [report_path]
    atomic_write(report_path, dump_full_precision(report) + "\n")
    if traj is not None:
        traj_path = os.path.join(out_dir, output.get("trajectory", "trajectory.csv"))
        write_trajectory_csv(traj_path, traj)
        written.append(traj_path)
    return report, written, (3 if failure else 0)


def run_selftest(strict=False, out_dir=None, seed=0):
    """Run the bundled verification suite; returns (report, exit code)."""
    from .selftest import run_checks

    started = time.perf_counter()
    results = run_checks(tighten=1e6 if strict else 1.0)
    walltime = time.perf_counter() - started
    n_failed = sum(1 for r in results if not r.passed)
    report = {
        "checks": [
            {"name": r.name, "measured": r.measured, "tol": r.tol,
             "passed": r.passed} for r in results
        ],
        "n_checks": len(results),
        "n_failed": n_failed,
        "strict": strict,
        "provenance": _provenance({"task": "selftest", "strict": strict}, seed),
        "timing": {
            "walltime_s": walltime,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    }
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        atomic_write(os.path.join(out_dir, "selftest.json"),
                     dump_full_precision(report) + "\n")
    return report, (1 if n_failed else 0)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="phasebound",
        description="Boundary-value and flow diagnostics for Hamiltonian systems on [0,1]",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a JSON scenario file")
    p_run.add_argument("scenario", help="path to the scenario file")
    p_run.add_argument("--out", default=None, help="output directory "
                       f"(default ${ENV_OUT_DIR} or the working directory)")
    p_run.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    p_run.add_argument("--step", type=float, default=None, help="override the integrator step")

    p_self = sub.add_parser("selftest", help="verify every bundled fact and invariant")
    p_self.add_argument("--strict", action="store_true",
                        help="tighten all tolerances a million-fold (expected to fail; "
                             "demonstrates defect reporting)")
    p_self.add_argument("--out", default=None, help="also write selftest.json here")

    sub.add_parser("list-examples", help="list registered example systems")

    args = parser.parse_args(argv)

    if args.command == "list-examples":
        for name in example_names():
            print(name)
        return 0

    if args.command == "selftest":
        report, code = run_selftest(strict=args.strict, out_dir=args.out)
        for check in report["checks"]:
            flag = "PASS" if check["passed"] else "FAIL"
            print(f"{flag}  {check['name']}  measured={check['measured']:.3e} "
                  f"tol={check['tol']:.3e}")
        print(f"{report['n_checks'] - report['n_failed']}/{report['n_checks']} checks passed")
        return code

    try:
        report, written, code = run_scenario(args.scenario, out_dir=args.out,
                                             seed=args.seed, step=args.step)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=_sys.stderr)
        return 2
    except PhaseboundError as exc:
        print(f"task error: {exc}", file=_sys.stderr)
        return 3
    for path in written:
        print(path)
    if code != 0:
        print(f"task failure: {report['results'].get('failure')}", file=_sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
