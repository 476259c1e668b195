import itertools
import math

import numpy as np
import pytest

from syncstl.groups import GroupSet, enumerate_groups
from syncstl.oracle import (UNSAT, HorizonViolation, SyncWindow, best_run, first_violation,
                            rho_sync, rho_sync_detail, rho_sync_global, sat_global, sat_inner,
                            sat_task, sync_window)
from syncstl.spec import (Agent, And, Capability, Finally, Fleet, GlobalSpec, Globally,
                          LinearPredicate, Not, Or, PairwiseDisjointElements, Pred, SyncTask, Task, Until)

POS = Pred(LinearPredicate.from_terms({(1, 0): 1.0}, -0.5))  # x >= 0.5
NEG = Pred(LinearPredicate.from_terms({(1, 0): -1.0}, 0.5))  # x <= 0.5


def bits_trace(bits):
    return np.array([[1.0 if b else 0.0] for b in bits])


def test_predicate_and_boolean_nodes():
    team = {1: bits_trace([1, 0])}
    assert sat_inner(POS, team, (1,), 0)
    assert not sat_inner(POS, team, (1,), 1)
    assert sat_inner(Or((POS, NEG)), team, (1,), 1)
    assert not sat_inner(And((POS, Not(POS))), team, (1,), 0)


def test_horizon_violation():
    with pytest.raises(HorizonViolation):
        sat_inner(Globally(0, 3, POS), {1: bits_trace([1, 1, 1])}, (1,))


def _until_reference(left, right, a, b, k=0):
    for t in range(k + a, k + b + 1):
        if right[t] and all(left[s] for s in range(k, t + 1)):
            return True
    return False


def test_until_exhaustive():
    """Every pair of 5-step boolean signals, several windows."""
    R = Pred(LinearPredicate.from_terms({(1, 1): 1.0}, -0.5))
    for a, b in [(0, 1), (1, 3), (0, 4), (2, 4)]:
        f = Until(a, b, POS, R)
        for lb, rb in itertools.product(range(32), repeat=2):
            left = [lb >> i & 1 for i in range(5)]
            right = [rb >> i & 1 for i in range(5)]
            team = {1: np.array([[l, r] for l, r in zip(left, right)], float)}
            assert sat_inner(f, team, (1,)) == _until_reference(left, right, a, b)


def test_best_run_examples():
    q = dict(enumerate([0, 0, 0] + [1] * 7))  # ones on 3..9
    assert best_run(q, 3, 7) == SyncWindow(3, 7)
    q = {t: t in {3, 4, 6, 7, 8} for t in range(10)}
    assert best_run(q, 3, 7) == SyncWindow(6, 3)
    assert best_run({t: False for t in range(5)}, 0, 3).duration == 0


def _scan(bits, lo, hi):
    best = 0
    for s in range(lo, hi + 1):
        n = 0
        while s + n < len(bits) and bits[s + n]:
            n += 1
        best = max(best, n)
    return best


def test_run_lengths_all_sequences():
    for n in range(1, 11):
        for v in range(2 ** n):
            bits = [v >> i & 1 for i in range(n)]
            lo, hi = n // 3, max(n // 3, n - 2)
            w = best_run(bits, lo, hi)
            assert w.duration == _scan(bits, lo, hi)


def _fleet(n, cap="v"):
    return Fleet(tuple(Agent(p, frozenset([cap]), "m", (0.0,)) for p in range(1, n + 1)))


def test_rho_sync_two_groups():
    fleet = _fleet(3)
    ts = SyncTask(1, 3, 1, POS, 2, (PairwiseDisjointElements(),), "S")
    groups = enumerate_groups(ts, fleet)
    team = {1: bits_trace([0, 1, 1, 1, 1, 0]),
            2: bits_trace([0, 0, 1, 1, 1, 1]),
            3: bits_trace([1, 1, 1, 0, 0, 0])}
    rho, j, w = rho_sync_detail(ts, team, groups)
    assert groups[j] == ((1,), (2,)) and w == SyncWindow(2, 3) and rho == 2


def test_rho_sync_unsat():
    ts = SyncTask(0, 2, 3, POS, 1, (), "S")
    team = {1: bits_trace([1, 1, 0, 1, 1, 0])}
    gs = GroupSet([((1,),)], ts)
    assert rho_sync(ts, team, gs) is UNSAT
    spec = GlobalSpec((), (ts,))
    assert rho_sync_global(spec, team, _fleet(1)) is UNSAT
    assert not sat_global(spec, team, _fleet(1))


def test_rho_global_without_sync_tasks():
    spec = GlobalSpec((Task(Finally(0, 2, POS), 1, (), "T"),))
    team = {1: bits_trace([0, 0, 1])}
    assert rho_sync_global(spec, team, _fleet(1)) == math.inf
    assert sat_global(spec, team, _fleet(1))


def test_task_needs_every_element_of_one_group():
    fleet = Fleet((Agent(1, frozenset(["a"]), "m", (0.0,)), Agent(2, frozenset(["b"]), "m", (0.0,)),
                   Agent(3, frozenset(["a"]), "m", (0.0,))))
    t = Task(POS, 1, (Capability(1, 1, "a"),), "T")
    team = {1: bits_trace([0]), 2: bits_trace([1]), 3: bits_trace([1])}
    ok, j = sat_task(t, team, enumerate_groups(t, fleet))
    assert ok and enumerate_groups(t, fleet)[j] == ((3,),)


def test_first_violation():
    f = Globally(0, 4, And((POS, Globally(0, 1, POS))))
    team = {1: bits_trace([1, 1, 1, 1, 0, 1])}
    assert first_violation(f, team, (1,)) == 4
    assert first_violation(Globally(0, 2, POS), {1: bits_trace([1, 1, 1])}, (1,)) is None


def test_sync_window_runs_past_b():
    ts = SyncTask(1, 2, 0, POS, 1, (), "S")
    team = {1: bits_trace([0, 0, 1, 1, 1, 1])}
    assert sync_window(ts, team, ((1,),)) == SyncWindow(2, 4)
