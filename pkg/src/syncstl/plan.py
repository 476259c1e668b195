"""From a solver solution to a checked plan.

Trajectories are re-rolled from the control values so the dynamics hold
exactly; every verdict comes from the oracle, not from the model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import check_bounds, rollout
from .groups import enumerate_groups
from .milp import Problem, decode_sos1
from .oracle import UNSAT, SyncWindow, first_violation, rho_sync_detail, sat_task
from .solver import Solution, VerificationFailure
from .spec import Fleet, GlobalSpec

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6
BOUND_TOL = 1e-6


@dataclass
class TaskVerdict:
    sat: bool
    witness: tuple | None = None
    violations: list[str] = field(default_factory=list)


@dataclass
class SyncVerdict:
    rho: object  # int or UNSAT
    witness: tuple | None
    window: SyncWindow


@dataclass
class Verdict:
    tasks: dict[str, TaskVerdict]
    sync: dict[str, SyncVerdict]

    @property
    def sat_global(self) -> bool:
        return all(v.sat for v in self.tasks.values()) and \
            all(v.rho is not UNSAT for v in self.sync.values())

    @property
    def rho_global(self):
        """min over synchronous tasks; inf when there are none."""
        if any(v.rho is UNSAT for v in self.sync.values()):
            return UNSAT
        return min((v.rho for v in self.sync.values()), default=math.inf)

    def failures(self) -> list[str]:
        out = []
        for name, v in self.tasks.items():
            if not v.sat:
                out.extend(v.violations or [f"{name}: no agent group satisfies the task"])
        for name, v in self.sync.items():
            if v.rho is UNSAT:
                out.append(f"{name}: no group holds the body for the required duration "
                           f"(best run {max(v.window.duration, 0)})")
        return out


def task_groups(spec: GlobalSpec, fleet: Fleet) -> dict:
    return {t: enumerate_groups(t, fleet) for t in spec.all_tasks}


def check_team(spec: GlobalSpec, team, fleet: Fleet, groups: Mapping | None = None) -> Verdict:
    """Oracle verdicts for every task, with named violations for failed tasks."""
    groups = groups if groups is not None else task_groups(spec, fleet)
    tasks, sync = {}, {}
    for t in spec.tasks:
        gs = groups[t]
        ok, j = sat_task(t, team, gs)
        v = TaskVerdict(ok, gs[j] if ok else None)
        if not ok and len(gs) == 1:
            # one candidate group: point at the broken elements
            for e in gs[0]:
                step = first_violation(t.inner, team, e)
                if step is not None:
                    who = f"agent {e[0]}" if len(e) == 1 else f"agents {e}"
                    v.violations.append(f"{t.name}: {who} violated at step {step}")
        tasks[t.name] = v
    for ts in spec.sync_tasks:
        gs = groups[ts]
        rho, j, w = rho_sync_detail(ts, team, gs)
        sync[ts.name] = SyncVerdict(rho, gs[j] if j is not None else None, w)
    return Verdict(tasks, sync)


@dataclass
class PlanResult:
    controls: dict[int, np.ndarray]
    trajectories: dict[int, np.ndarray]
    rho: dict[str, float]  # model values
    rho_global: float
    witnesses: dict[str, tuple]  # model-chosen groups
    objective: dict[str, float]
    solution: Solution
    verdict: Verdict
    max_residual: float = 0.0
    warnings: list[str] = field(default_factory=list)
    bound_violations: list[str] = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return self.verdict.sat_global and not self.problems()

    def problems(self) -> list[str]:
        out = list(self.bound_violations)
        for name, r in self.rho.items():
            o = self.verdict.sync[name].rho
            if o is UNSAT or o < r - 1e-6:
                out.append(f"{name}: model rho {r:g} exceeds oracle rho {o}")
        return out


def _model_witnesses(problem: Problem, values) -> dict[str, tuple]:
    out = {}
    enc = problem.encoder
    groups = {getattr(t, "name", None): g for t, g in enc.groups.items()}
    flat = [values.get(n, 0.0) for n in problem.model.names]
    for site in problem.model.sites:
        if site.kind == "task":
            lab = site.labels[decode_sos1(site, flat)]
            if lab is not None and site.task in groups:
                out[site.task] = groups[site.task][lab]
    for name in enc.rho:
        durs = []
        j = 0
        while f"dur_{name}_g{j}" in values:
            durs.append(values[f"dur_{name}_g{j}"])
            j += 1
        if durs:
            out[name] = groups[name][int(np.argmax(durs))]
    return out


def extract_plan(solution: Solution, problem: Problem, spec: GlobalSpec | None = None,
                 groups: Mapping | None = None, strict: bool = True) -> PlanResult:
    """Read controls, roll out, decode witnesses and verify with the oracle.

    ``spec`` is the task set to verify against (defaults to the normalized one
    held by the problem). With ``strict`` a failed check raises
    VerificationFailure; the partial result is attached as ``.result``.
    """
    if not solution.has_values:
        raise ValueError(f"solution has no values (status {solution.status})")
    enc = problem.encoder
    vals = solution.values
    fleet, H = enc.fleet, enc.H
    controls, trajs, warnings, bounds = {}, {}, [], []
    residual = 0.0
    for a in fleet.agents:
        am = enc.models[a.id]
        try:
            u = np.array([[vals[f"u_p{a.id}_k{k}_{i}"] for i in range(am.nu)] for k in range(H)])
            xs = np.array([[vals[f"x_p{a.id}_k{k}_{i}"] for i in range(am.nx)]
                           for k in range(H + 1)])
        except KeyError as e:
            raise VerificationFailure(f"solution is missing variable {e.args[0]}") from None
        u = u.reshape(H, am.nu)
        traj = rollout(am, a.x0, u)
        residual = max(residual, float(np.abs(traj - xs).max()))
        for v in check_bounds(am, traj, u, tol=BOUND_TOL):
            bounds.append(f"agent {a.id}: {v.kind} component {v.component} = {v.value:.6g} "
                          f"outside {list(v.bound)} at step {v.k}")
        controls[a.id], trajs[a.id] = u, traj
    if residual > RESIDUAL_TOL:
        msg = f"rollout differs from solver states by up to {residual:.3g}"
        log.warning(msg)
        warnings.append(msg)

    rho = {}
    for name in enc.rho:
        r = float(vals[f"rho_{name}"])
        # run lengths are integers; snap away solver tolerance
        if abs(r - round(r)) > 1e-4:
            warnings.append(f"{name}: model rho {r} is not integral")
        else:
            r = float(round(r))
        rho[name] = r
    rho_global = min(rho.values()) if rho else math.inf
    beta = enc.ctx.beta
    if enc.ctx.effort_norm == "l1":
        effort = sum(float(np.abs(u).sum()) for u in controls.values())
    else:
        effort = sum(float((u ** 2).sum()) for u in controls.values())
    objective = {"rho_term": rho_global if rho else 0.0, "effort": effort,
                 "effort_term": -beta * effort}
    objective["total"] = objective["rho_term"] + objective["effort_term"]

    spec = spec if spec is not None else problem.spec
    verdict = check_team(spec, trajs, fleet, groups)
    result = PlanResult(controls, trajs, rho, rho_global, _model_witnesses(problem, vals),
                        objective, solution, verdict, residual, warnings, bounds)
    if strict:
        errs = verdict.failures() + result.problems()
        if errs:
            e = VerificationFailure("; ".join(errs))
            e.result = result
            raise e
    return result
