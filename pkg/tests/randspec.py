"""Random formulas, traces and small instances for the property tests.

Predicates are drawn with integer coefficients and quarter offsets while
states live on a half grid, so |alpha| >= 0.25 everywhere: no evaluation
sits near the satisfaction boundary and the margins used by the encoder
never matter.
"""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from syncstl.dynamics import single_integrator
from syncstl.spec import (Agent, And, Capability, Finally, Fleet, GlobalSpec, Globally,
                          LinearPredicate, Not, NotEqual, Or, PairwiseDisjointElements, Pred,
                          SyncTask, Task, Until, slot_count)

GRID = 0.5
SIDE = 4.0  # states in [0, SIDE]


def random_predicate(rng, n_slots, dims=2):
    while True:
        terms = {}
        for _ in range(rng.integers(1, 3)):
            key = (int(rng.integers(1, n_slots + 1)), int(rng.integers(0, dims)))
            terms[key] = float(rng.choice([-2, -1, 1, 2]))
        if any(terms.values()):
            break
    offset = float(rng.integers(-8, 9)) + 0.25
    return LinearPredicate.from_terms(terms, offset)


def random_box(rng, slot=1):
    """Membership of slot ``slot`` in an axis box with quarter-point edges."""
    lo = rng.integers(0, 7, size=2) * GRID + 0.25
    hi = lo + rng.integers(1, 5, size=2) * GRID
    preds = []
    for c in (0, 1):
        preds.append(Pred(LinearPredicate.from_terms({(slot, c): 1.0}, -lo[c])))
        preds.append(Pred(LinearPredicate.from_terms({(slot, c): -1.0}, hi[c])))
    return And(tuple(preds))


def random_formula(rng, n_slots, depth, max_horizon, until=True, negation=False):
    """Random inner formula with horizon <= max_horizon."""
    leaf = depth <= 0 or rng.random() < 0.25
    if leaf:
        if rng.random() < 0.3:
            return random_box(rng, int(rng.integers(1, n_slots + 1)))
        return Pred(random_predicate(rng, n_slots))
    ops = ["and", "or", "G", "F"] + (["U"] if until else []) + (["not"] if negation else [])
    op = ops[rng.integers(len(ops))]
    if op in ("and", "or"):
        kids = tuple(random_formula(rng, n_slots, depth - 1, max_horizon, until, negation)
                     for _ in range(rng.integers(2, 4)))
        return And(kids) if op == "and" else Or(kids)
    if op == "not":
        return Not(random_formula(rng, n_slots, depth - 1, max_horizon, False, negation))
    if max_horizon < 1:
        return Pred(random_predicate(rng, n_slots))
    b = int(rng.integers(1, min(max_horizon, 3) + 1))
    a = int(rng.integers(0, b))
    rest = max_horizon - b
    if op == "U":
        return Until(a, b, random_formula(rng, n_slots, depth - 1, rest, until, negation),
                     random_formula(rng, n_slots, depth - 1, rest, until, negation))
    child = random_formula(rng, n_slots, depth - 1, rest, until, negation)
    return Globally(a, b, child) if op == "G" else Finally(a, b, child)


def random_team(rng, ids, H, dims=2):
    return {p: rng.integers(0, int(SIDE / GRID) + 1, size=(H + 1, dims)) * GRID for p in ids}


def random_fleet(rng, n_agents, caps=("a", "b")):
    agents = []
    for p in range(1, n_agents + 1):
        have = frozenset(c for c in caps if rng.random() < 0.6) or frozenset([caps[0]])
        agents.append(Agent(p, have, "si", (0.0, 0.0)))
    return Fleet(tuple(agents), frozenset(caps))


def random_pattern(rng, count, n_slots, caps=("a", "b")):
    pat = []
    for i in range(1, count + 1):
        for n in range(1, n_slots + 1):
            if rng.random() < 0.4:
                pat.append(Capability(i, n, caps[rng.integers(len(caps))]))
    if count > 1 and rng.random() < 0.5:
        pat.append(PairwiseDisjointElements())
    if n_slots > 1 and rng.random() < 0.5:
        pat.append(NotEqual((1, 1), (1, 2)))
    return tuple(pat)


def random_instance(rng, max_agents=3, max_H=6, depth=3):
    """(spec, fleet, models, H, team) with at least one task."""
    n = int(rng.integers(1, max_agents + 1))
    H = int(rng.integers(1, max_H + 1))
    fleet = random_fleet(rng, n)
    tasks, syncs = [], []
    for m in range(int(rng.integers(0, 3))):
        slots = int(rng.integers(1, min(n, 2) + 1))
        count = int(rng.integers(1, 3))
        f = random_formula(rng, slots, depth, H, until=True)
        tasks.append(Task(f, count, random_pattern(rng, count, slot_count(f)), f"T{m}"))
    if rng.random() < 0.6 or not tasks:
        slots = int(rng.integers(1, min(n, 2) + 1))
        count = int(rng.integers(1, 3))
        b = int(rng.integers(1, H + 1))
        hold = int(rng.integers(0, H - b + 1))
        a = int(rng.integers(0, b))
        f = random_formula(rng, slots, depth - 1, H - b - hold, until=True)
        syncs.append(SyncTask(a, b, hold, f, count, random_pattern(rng, count, slot_count(f)),
                              "S0"))
    models = {"si": single_integrator(2, [(0, SIDE)] * 2, [(-1, 1)] * 2)}
    spec = GlobalSpec(tuple(tasks), tuple(syncs))
    return spec, fleet, models, H, random_team(rng, fleet.ids, H)


# hypothesis wrappers -------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)


@st.composite
def formulas(draw, n_slots=2, depth=3, max_horizon=4, until=True, negation=False):
    rng = np.random.default_rng(draw(seeds))
    return random_formula(rng, n_slots, depth, max_horizon, until, negation)
