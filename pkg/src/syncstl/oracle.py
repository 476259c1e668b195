"""Direct evaluation of the specification language on concrete trajectories.

Everything here works by plain recursion and run-length scans so it can be
used as an independent check of the MILP encoding.

A team trajectory is a mapping ``agent id -> array (H+1, n_x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .groups import AgentGroup, Element, GroupSet, enumerate_groups
from .spec import (And, Finally, Fleet, GlobalSpec, Globally, LinearPredicate,
                   Not, Or, Pred, SyncTask, Task, Until, formula_horizon)

TeamTrajectory = Mapping[int, np.ndarray]


class HorizonViolation(ValueError):
    pass


class _Unsat:
    """Robustness is undefined: the synchronous task is not satisfied."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "UNSAT"

    def __reduce__(self):
        return (_Unsat, ())


UNSAT = _Unsat()


@dataclass(frozen=True)
class SyncWindow:
    start: int
    duration: int


def eval_predicate(pred: LinearPredicate, states: Sequence[np.ndarray]) -> float:
    """Value of alpha for the per-slot states (slot 1 is ``states[0]``)."""
    if pred.n_slots > len(states):
        raise ValueError(f"predicate uses {pred.n_slots} slots, got {len(states)} states")
    val = pred.offset
    for (slot, comp), coef in pred.coeffs:
        x = states[slot - 1]
        if comp >= len(x):
            raise ValueError(f"state component {comp} out of range for dimension {len(x)}")
        val += coef * float(x[comp])
    return val


def _length(team: TeamTrajectory, element: Element) -> int:
    return min(len(team[p]) for p in element) - 1


def sat_inner(f, team: TeamTrajectory, element: Element, k: int = 0) -> bool:
    """``(S_element, k) |= f``; slot n of ``f`` is bound to ``element[n-1]``."""
    H = _length(team, element)
    if k + formula_horizon(f) > H:
        raise HorizonViolation(
            f"formula needs {formula_horizon(f)} steps from k={k}, trajectory has H={H}")
    return _sat(f, team, element, k)


def _sat(f, team, element, k):
    if isinstance(f, Pred):
        return eval_predicate(f.pred, [team[p][k] for p in element]) >= 0
    if isinstance(f, Not):
        return not _sat(f.child, team, element, k)
    if isinstance(f, And):
        return all(_sat(c, team, element, k) for c in f.children)
    if isinstance(f, Or):
        return any(_sat(c, team, element, k) for c in f.children)
    if isinstance(f, Globally):
        return all(_sat(f.child, team, element, t) for t in range(k + f.a, k + f.b + 1))
    if isinstance(f, Finally):
        return any(_sat(f.child, team, element, t) for t in range(k + f.a, k + f.b + 1))
    if isinstance(f, Until):
        for t in range(k + f.a, k + f.b + 1):
            if _sat(f.right, team, element, t) and all(
                    _sat(f.left, team, element, s) for s in range(k, t + 1)):
                return True
        return False
    raise TypeError(f"not a formula: {f!r}")


def sat_task(task: Task, team: TeamTrajectory, groups: GroupSet,
             k: int = 0) -> tuple[bool, int | None]:
    """Task satisfaction and the index of the first satisfying group."""
    for j, g in enumerate(groups):
        if all(sat_inner(task.inner, team, e, k) for e in g):
            return True, j
    return False, None


def sync_sequence(ts: SyncTask, team: TeamTrajectory, group: AgentGroup,
                  k: int = 0) -> dict[int, bool]:
    """q(k') for k' in [k+a, H - horizon(inner)]: every element satisfies the body."""
    H = min(_length(team, e) for e in group)
    last = H - formula_horizon(ts.inner)
    return {t: all(_sat(ts.inner, team, e, t) for e in group)
            for t in range(k + ts.a, last + 1)}


def best_run(q: Mapping[int, bool] | Sequence[bool], lo: int, hi: int) -> SyncWindow:
    """Longest run of consecutive ones starting in [lo, hi]; earliest start on ties.

    Runs may continue past ``hi``.
    """
    if not isinstance(q, Mapping):
        q = dict(enumerate(q))
    best = SyncWindow(lo, 0)
    for s in range(lo, hi + 1):
        n = 0
        while q.get(s + n, False):
            n += 1
        if n > best.duration:
            best = SyncWindow(s, n)
    return best


def sync_window(ts: SyncTask, team: TeamTrajectory, group: AgentGroup,
                k: int = 0) -> SyncWindow:
    return best_run(sync_sequence(ts, team, group, k), k + ts.a, k + ts.b)


def _groups(task, fleet, groups):
    if groups is not None:
        return groups
    if fleet is None:
        raise ValueError("need either a fleet or precomputed groups")
    return enumerate_groups(task, fleet)


def rho_sync_detail(ts: SyncTask, team: TeamTrajectory, groups: GroupSet,
                    k: int = 0):
    """(rho or UNSAT, best group index, its SyncWindow)."""
    best_j, best_w = None, SyncWindow(k + ts.a, -1)
    for j, g in enumerate(groups):
        w = sync_window(ts, team, g, k)
        if w.duration > best_w.duration:
            best_j, best_w = j, w
    if best_j is None or best_w.duration - ts.hold < 0:
        return UNSAT, best_j, best_w
    return best_w.duration - ts.hold, best_j, best_w


def rho_sync(ts: SyncTask, team: TeamTrajectory, groups: GroupSet, k: int = 0):
    """Synchronous robustness: best common run length minus the hold, or UNSAT."""
    return rho_sync_detail(ts, team, groups, k)[0]


def rho_sync_global(spec: GlobalSpec, team: TeamTrajectory, fleet: Fleet | None = None,
                    k: int = 0, groups: Mapping | None = None):
    """Minimum over the synchronous tasks; ``math.inf`` when there are none."""
    rho = math.inf
    for ts in spec.sync_tasks:
        g = groups[ts] if groups is not None else _groups(ts, fleet, None)
        r = rho_sync(ts, team, g, k)
        if r is UNSAT:
            return UNSAT
        rho = min(rho, r)
    return rho


def sat_global(spec: GlobalSpec, team: TeamTrajectory, fleet: Fleet | None = None,
               k: int = 0, groups: Mapping | None = None) -> bool:
    for t in spec.tasks:
        g = groups[t] if groups is not None else _groups(t, fleet, None)
        if not sat_task(t, team, g, k)[0]:
            return False
    return rho_sync_global(spec, team, fleet, k, groups) is not UNSAT


def first_violation(f, team: TeamTrajectory, element: Element, k: int = 0) -> int | None:
    """Step where ``f`` first breaks for this element, or None if it holds.

    Descends through conjunctions and G windows; any other failing node is
    reported at its own evaluation time.
    """
    if _sat(f, team, element, k):
        return None
    if isinstance(f, Globally):
        for t in range(k + f.a, k + f.b + 1):
            if not _sat(f.child, team, element, t):
                return first_violation(f.child, team, element, t)
    if isinstance(f, And):
        for c in f.children:
            if not _sat(c, team, element, k):
                return first_violation(c, team, element, k)
    return k
