"""Command line pipeline: ``plan``, ``verify`` and ``inspect``.

Exit codes: 0 verified plan / satisfied traces, 1 error, 3 unsatisfiable,
4 solver timeout, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .milp import assemble_problem
from .oracle import UNSAT
from .plan import PlanResult, Verdict, check_team, extract_plan, task_groups
from .plot import render_svg
from .scenario import Scenario, load_scenario
from .solver import (ERROR, INFEASIBLE, TIMEOUT, UNBOUNDED, SolverError, export_lp,
                     solve)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_UNSAT, EXIT_TIMEOUT, EXIT_VERIFY = 0, 1, 3, 4, 5

EFFORT_NOTE = {
    "l1": "control effort is the 1-norm sum of |u| (linear), standing in for the Euclidean norm",
    "l2": "control effort is the sum of squared controls (mixed-integer QP)",
}


class TraceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# traces


def write_traces(path, trajectories, controls=None):
    trajectories = {p: np.asarray(t, float) for p, t in trajectories.items()}
    controls = controls or {}
    nx = max(t.shape[1] for t in trajectories.values())
    nu = max((np.asarray(u).reshape(len(u), -1).shape[1] for u in controls.values()
              if len(u)), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent", "k"] + [f"x{i}" for i in range(nx)] + [f"u{i}" for i in range(nu)])
        for p in sorted(trajectories):
            tr = trajectories[p]
            u = np.asarray(controls.get(p, np.zeros((0, 0))))
            for k, x in enumerate(tr):
                row = [p, k] + [repr(float(v) + 0.0) for v in x] + [""] * (nx - len(x))
                if k < len(u):
                    uk = [repr(float(v) + 0.0) for v in np.atleast_1d(u[k])]
                    row += uk + [""] * (nu - len(uk))
                else:
                    row += [""] * nu
                w.writerow(row)


def read_traces(path, fleet=None, models=None) -> dict[int, np.ndarray]:
    rows: dict[int, dict[int, list[float]]] = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if not header or header[:2] != ["agent", "k"]:
            raise TraceError(f"{path}: header must start with agent,k")
        xcols = [i for i, h in enumerate(header) if h.startswith("x")]
        for line_no, row in enumerate(r, start=2):
            if not row:
                continue
            try:
                p, k = int(row[0]), int(row[1])
                x = [float(row[i]) for i in xcols if i < len(row) and row[i] != ""]
            except ValueError as e:
                raise TraceError(f"{path}:{line_no}: {e}") from None
            if k in rows.setdefault(p, {}):
                raise TraceError(f"{path}:{line_no}: duplicate row for agent {p}, k={k}")
            rows[p][k] = x
    team = {}
    for p, by_k in rows.items():
        if sorted(by_k) != list(range(len(by_k))):
            raise TraceError(f"agent {p}: steps must run 0..H without gaps")
        team[p] = np.array([by_k[k] for k in range(len(by_k))], float)
    if fleet is not None:
        if sorted(team) != list(fleet.ids):
            raise TraceError(f"trace agents {sorted(team)} do not match fleet {list(fleet.ids)}")
        for a in fleet.agents:
            if models is not None and team[a.id].shape[1] != models[a.model].nx:
                raise TraceError(f"agent {a.id}: expected {models[a.model].nx} state components")
    lengths = {len(t) for t in team.values()}
    if len(lengths) > 1:
        raise TraceError(f"agents have different trace lengths {sorted(lengths)}")
    return team


# ---------------------------------------------------------------------------
# reports


def _num(v):
    if v is UNSAT:
        return "UNSAT"
    if isinstance(v, float) and math.isinf(v):
        return "n/a"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return int(v) if v.is_integer() and abs(v) < 2 ** 53 else v
    return v


def _group(g):
    return None if g is None else [list(e) for e in g]


def verdict_report(v: Verdict) -> dict:
    return {
        "sat_global": v.sat_global,
        "rho_global": _num(v.rho_global),
        "tasks": {n: {"sat": t.sat, "witness": _group(t.witness), "violations": t.violations}
                  for n, t in v.tasks.items()},
        "sync": {n: {"rho": _num(s.rho), "witness": _group(s.witness),
                     "start": s.window.start if s.window.duration > 0 else None,
                     "duration": max(s.window.duration, 0)}
                 for n, s in v.sync.items()},
        "failures": v.failures(),
    }


def plan_report(scenario: Scenario, res: PlanResult, effort_norm: str, model_stats: dict) -> dict:
    sol = res.solution
    return {
        "scenario": scenario.name,
        "horizon": scenario.horizon,
        "verified": res.verified,
        "solver": {"id": scenario.solve.solver, "status": sol.status,
                   "objective": _num(sol.objective), "gap": _num(sol.gap)},
        "effort_norm": effort_norm,
        "notes": [EFFORT_NOTE[effort_norm]],
        "rho": {k: _num(v) for k, v in res.rho.items()},
        "rho_global": _num(res.rho_global),
        "witnesses": {k: _group(g) for k, g in res.witnesses.items()},
        "objective": {k: _num(v) for k, v in res.objective.items()},
        "oracle": verdict_report(res.verdict),
        "max_residual": res.max_residual,
        "warnings": res.warnings,
        "problems": res.problems(),
        "model": model_stats,
    }


def summary_text(report: dict) -> str:
    lines = [f"scenario   {report['scenario']} (H={report.get('horizon')})",
             f"status     {report['status']}"]
    s = report.get("solver")
    if s:
        lines.append(f"solver     {s['id']}: {s['status']}, objective {s['objective']}, "
                     f"gap {s['gap']}")
    o = report.get("oracle")
    if o:
        lines.append(f"verified   {report.get('verified')}")
        for name, t in o["tasks"].items():
            lines.append(f"  task {name:<8} {'ok' if t['sat'] else 'VIOLATED'}  "
                         f"group {t['witness']}")
        for name, t in o["sync"].items():
            lines.append(f"  sync {name:<8} rho {t['rho']} (model {report['rho'].get(name)})  "
                         f"window start {t['start']} duration {t['duration']}  "
                         f"group {t['witness']}")
        lines.append(f"rho_global {o['rho_global']}")
    if report.get("objective"):
        ob = report["objective"]
        lines.append(f"objective  {ob['total']} = rho {ob['rho_term']} + effort {ob['effort_term']}")
    for m in report.get("diagnostics", []) + report.get("failures", []):
        lines.append(f"! {m}")
    for m in report.get("warnings", []):
        lines.append(f"warning: {m}")
    t = report.get("timing", {})
    if t:
        lines.append("timing     " + ", ".join(f"{k} {v:.2f}s" for k, v in t.items()))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# plan


@dataclass
class PlanOutcome:
    status: str  # ok | unsat | timeout | verification_failure | error
    exit_code: int
    report: dict
    result: PlanResult | None = None
    out_dir: Path | None = None
    files: dict[str, Path] = field(default_factory=dict)


def _usage_error(msg):
    return any(s in msg for s in ("horizon exceeded", "not in the fleet"))


def run_plan(scenario: Scenario, out_dir=None, solver: str | None = None,
             time_limit: float | None = None, seed: int | None = None,
             effort_norm: str = "l1", write: bool = True) -> PlanOutcome:
    """validate -> groups -> MILP -> solve -> extract -> oracle -> files."""
    opts = scenario.solve
    overrides = {k: v for k, v in (("solver", solver), ("time_limit", time_limit),
                                   ("seed", seed)) if v is not None}
    if overrides:
        opts = dataclasses.replace(opts, **overrides)
        scenario = dataclasses.replace(scenario, solve=opts)
    out = Path(out_dir or scenario.out_dir or f"runs/{scenario.name}")
    report = {"scenario": scenario.name, "horizon": scenario.horizon}
    timing = {}

    def finish(status, code, result=None, stage=None):
        report["status"] = status
        report["exit_code"] = code
        if stage:
            report["stage"] = stage
        report["timing"] = timing
        files = _emit(out, scenario, report, result) if write else {}
        return PlanOutcome(status, code, report, result, out if write else None, files)

    diags = scenario.diagnostics()
    if diags:
        report["diagnostics"] = [d.message for d in diags]
        if any(_usage_error(d.message) for d in diags):
            return finish("error", EXIT_ERROR, stage="validate")
        return finish("unsat", EXIT_UNSAT, stage="validate")

    t0 = time.perf_counter()
    groups = task_groups(scenario.spec, scenario.fleet)
    problem = assemble_problem(scenario.spec, scenario.fleet, scenario.models,
                               scenario.context(effort_norm), groups)
    timing["build"] = time.perf_counter() - t0
    report["model"] = problem.model.stats()
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "model.lp").write_text(export_lp(problem.model))

    try:
        sol = solve(problem.model, opts)
    except SolverError as e:
        report["failures"] = [str(e)]
        return finish("error", EXIT_ERROR, stage="solve")
    timing["solve"] = sol.solve_time
    report["solver"] = {"id": opts.solver, "status": sol.status, "objective": _num(sol.objective),
                        "gap": _num(sol.gap)}
    if sol.status in (INFEASIBLE, UNBOUNDED) and not sol.has_values:
        report["failures"] = [f"solver reports {sol.status}: no plan satisfies every task"]
        return finish("unsat", EXIT_UNSAT, stage="solve")
    if not sol.has_values:
        if sol.status == TIMEOUT:
            report["failures"] = ["time limit reached without an incumbent"]
            return finish("timeout", EXIT_TIMEOUT, stage="solve")
        report["failures"] = [f"solver status {sol.status}"]
        return finish("error", EXIT_ERROR, stage="solve")

    t0 = time.perf_counter()
    res = extract_plan(sol, problem, scenario.spec, groups, strict=False)
    timing["verify"] = time.perf_counter() - t0
    report.update(plan_report(scenario, res, effort_norm, report["model"]))
    if not res.verified:
        report["failures"] = res.verdict.failures() + res.problems()
        return finish("verification_failure", EXIT_VERIFY, res, stage="verify")
    if sol.status == TIMEOUT:
        return finish("timeout", EXIT_TIMEOUT, res)
    return finish("ok", EXIT_OK, res)


def _emit(out: Path, scenario, report, result):
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    if result is not None:
        files["trajectories"] = out / "trajectories.csv"
        write_traces(files["trajectories"], result.trajectories, result.controls)
        files["plot"] = out / "plot.svg"
        pos = next(iter(scenario.models.values())).position
        caps = {a.id: f"{a.id} {'/'.join(sorted(a.capabilities))}" for a in scenario.fleet.agents}
        files["plot"].write_text(render_svg(scenario.regions, result.trajectories, pos,
                                            labels=caps))
    files["report"] = out / "report.json"
    files["report"].write_text(json.dumps(report, indent=2, sort_keys=False) + "\n")
    files["summary"] = out / "summary.txt"
    files["summary"].write_text(summary_text(report))
    if (out / "model.lp").exists():
        files["model"] = out / "model.lp"
    return files


# ---------------------------------------------------------------------------
# verify


def run_verify(scenario: Scenario, traces) -> dict:
    """Oracle-only monitoring of recorded trajectories."""
    team = read_traces(traces, scenario.fleet, scenario.models) if not isinstance(traces, dict) \
        else traces
    v = check_team(scenario.spec, team, scenario.fleet)
    report = {"scenario": scenario.name, "horizon": len(next(iter(team.values()))) - 1}
    report.update(verdict_report(v))
    return report


# ---------------------------------------------------------------------------
# inspect


def model_statistics(scenario: Scenario) -> dict:
    problem = assemble_problem(scenario.spec, scenario.fleet, scenario.models, scenario.context(),
                               task_groups(scenario.spec, scenario.fleet))
    m = problem.model
    stats = m.stats()
    per_task = {}
    for t in scenario.spec.all_tasks:
        sites = [s for s in m.sites if s.task == t.name]
        entry = {"binaries": sum(len(s.binaries) for s in sites), "sites": len(sites),
                 "groups": len(problem.encoder.groups[_task_key(problem, t.name)])}
        top = [s for s in sites if s.kind == "task"]
        if top:
            entry["disjunction"] = {"width": top[0].width, "binaries": len(top[0].binaries)}
        per_task[t.name] = entry
    attributed = sum(e["binaries"] for e in per_task.values())
    if attributed != m.num_binaries:
        per_task["(shared)"] = {"binaries": m.num_binaries - attributed}
    Ms = sorted(v[0] for v in m.big_m.values())
    stats["per_task"] = per_task
    stats["big_m"] = {"count": len(Ms), "min": Ms[0] if Ms else None,
                      "max": Ms[-1] if Ms else None,
                      "distinct": sorted({round(v, 9) for v in Ms})}
    return stats


def _task_key(problem, name):
    return next(t for t in problem.encoder.groups if t.name == name)


def linear_fit(xs, ys) -> dict:
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def run_inspect(scenario: Scenario, sweep: tuple[int, int] | None = None,
                horizons=None) -> dict:
    report = {"scenario": scenario.name, "horizon": scenario.horizon}
    report.update(model_statistics(scenario))
    if sweep is not None or horizons is not None:
        hs = list(horizons) if horizons is not None else list(range(sweep[0], sweep[1] + 1))
        rows = []
        for H in hs:
            s = scenario.with_horizon(H)
            diags = s.diagnostics()
            if diags:
                raise ValueError(f"H={H}: " + "; ".join(d.message for d in diags))
            st = model_statistics(s)
            rows.append({"horizon": H, "binaries": st["binaries"], "variables": st["variables"],
                         "constraints": st["constraints"]})
        report["sweep"] = {"rows": rows}
        if len(rows) >= 2:
            report["sweep"]["fit"] = linear_fit([r["horizon"] for r in rows],
                                                [r["binaries"] for r in rows])
    return report


# ---------------------------------------------------------------------------


def _span(text):
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}") from None
    if a > b:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="syncstl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("plan", help="solve a scenario and verify the plan")
    p.add_argument("scenario")
    p.add_argument("--out")
    p.add_argument("--solver", help="highs, highs-cli or command (template from "
                                    "$SYNCSTL_SOLVER_CMD)")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--effort-norm", choices=("l1", "l2"), default="l1")
    v = sub.add_parser("verify", help="check recorded trajectories with the oracle")
    v.add_argument("scenario")
    v.add_argument("--traces", required=True)
    v.add_argument("--out", help="write the report here instead of stdout")
    i = sub.add_parser("inspect", help="model size, binaries per task, big-M values")
    i.add_argument("scenario")
    i.add_argument("--sweep-horizon", type=_span, metavar="A:B")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = load_scenario(args.scenario)
    except (OSError, ValueError) as e:
        print(f"error [load]: {e}", file=sys.stderr)
        return EXIT_ERROR
    try:
        if args.cmd == "plan":
            o = run_plan(scenario, args.out, args.solver, args.time_limit, args.seed,
                         args.effort_norm)
            sys.stdout.write(summary_text(o.report))
            if o.out_dir:
                print(f"outputs in {o.out_dir}")
            return o.exit_code
        if args.cmd == "verify":
            rep = run_verify(scenario, args.traces)
            text = json.dumps(rep, indent=2) + "\n"
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return EXIT_OK if rep["sat_global"] else EXIT_VERIFY
        rep = run_inspect(scenario, args.sweep_horizon)
        sys.stdout.write(json.dumps(rep, indent=2) + "\n")
        return EXIT_OK
    except (TraceError, ValueError, SolverError) as e:
        print(f"error [{args.cmd}]: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
