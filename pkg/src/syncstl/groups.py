"""Enumeration of the agent groups that satisfy a task's selection pattern.

A group assigns an agent to every slot of every element. Elements are
interchangeable (each must satisfy the same inner formula), so groups are
stored with their elements sorted and deduplicated under element
permutation. Slots inside an element are never permuted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

from .spec import (AllDifferentWithinElement, Assign, Capability, Fleet,
                   NotEqual, PairwiseDisjointElements, SyncTask, Task)

DEFAULT_MAX_GROUPS = 10**6

Element = tuple[int, ...]
AgentGroup = tuple[Element, ...]


class EmptyGroupSet(ValueError):
    pass


class ExplosionGuard(RuntimeError):
    pass


@dataclass(frozen=True)
class GroupSet:
    groups: tuple[AgentGroup, ...]
    task: Task | SyncTask

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __getitem__(self, j):
        return self.groups[j]

    def elements(self) -> list[Element]:
        """Distinct elements over all groups, sorted."""
        return sorted({e for g in self.groups for e in g})


def _positions(c, n):
    return [(i, s) for i in range(c) for s in range(n)]


def _permuted(con, perm):
    """Constraint with element indices relabelled by ``perm`` (0-based map)."""
    m = lambda i: perm[i - 1] + 1
    if isinstance(con, Capability):
        return Capability(m(con.element), con.slot, con.name)
    if isinstance(con, Assign):
        return Assign(m(con.element), con.slot, con.agent)
    if isinstance(con, AllDifferentWithinElement):
        return AllDifferentWithinElement(m(con.element))
    if isinstance(con, NotEqual):
        a, b = sorted([(m(con.first[0]), con.first[1]), (m(con.second[0]), con.second[1])])
        return NotEqual(a, b)
    return con


def _canon_set(pattern):
    out = set()
    for con in pattern:
        if isinstance(con, NotEqual):
            a, b = sorted([con.first, con.second])
            con = NotEqual(a, b)
        out.add(con)
    return out


def element_symmetric(pattern, count) -> bool:
    """True when every permutation of elements maps the pattern onto itself."""
    base = _canon_set(pattern)
    for i in range(count - 1):
        perm = list(range(count))
        perm[i], perm[i + 1] = perm[i + 1], perm[i]
        if _canon_set(_permuted(c, perm) for c in pattern) != base:
            return False
    return True


class _Search:
    """Backtracking over (element, slot) positions with forward checks."""

    def __init__(self, task, fleet):
        self.c = task.count
        self.n = task.n_slots
        self.pos = _positions(self.c, self.n)
        ids = fleet.ids
        dom = {p: set(ids) for p in self.pos}
        self.pairs_ne = set()
        self.disjoint = False
        for con in task.pattern:
            if isinstance(con, Capability):
                dom[(con.element - 1, con.slot - 1)] &= set(fleet.with_capability(con.name))
            elif isinstance(con, Assign):
                dom[(con.element - 1, con.slot - 1)] &= {con.agent}
            elif isinstance(con, AllDifferentWithinElement):
                i = con.element - 1
                for s, t in itertools.combinations(range(self.n), 2):
                    self.pairs_ne.add(((i, s), (i, t)))
            elif isinstance(con, NotEqual):
                a = (con.first[0] - 1, con.first[1] - 1)
                b = (con.second[0] - 1, con.second[1] - 1)
                if a == b:
                    dom[a] = set()
                self.pairs_ne.add(tuple(sorted([a, b])))
            elif isinstance(con, PairwiseDisjointElements):
                self.disjoint = True
        self.dom = {p: sorted(v) for p, v in dom.items()}
        self.ordered = element_symmetric(task.pattern, self.c)
        # constraints checked when the later position of a pair is filled
        idx = {p: k for k, p in enumerate(self.pos)}
        self.back = {p: [] for p in self.pos}
        for a, b in self.pairs_ne:
            first, last = sorted([a, b], key=idx.get)
            self.back[last].append(first)

    def run(self) -> Iterator[tuple[Element, ...]]:
        assign = {}
        n, c = self.n, self.c

        def ok(p, v):
            for q in self.back[p]:
                if assign[q] == v:
                    return False
            i, s = p
            if self.disjoint:
                for e in range(i):
                    for t in range(n):
                        if assign[(e, t)] == v:
                            return False
            if self.ordered and i > 0 and s == n - 1:
                prev = tuple(assign[(i - 1, t)] for t in range(n))
                cur = tuple(assign[(i, t)] for t in range(n - 1)) + (v,)
                if cur < prev:
                    return False
            return True

        def rec(k):
            if k == len(self.pos):
                yield tuple(tuple(assign[(i, s)] for s in range(n)) for i in range(c))
                return
            p = self.pos[k]
            for v in self.dom[p]:
                if ok(p, v):
                    assign[p] = v
                    yield from rec(k + 1)
                    del assign[p]

        yield from rec(0)


def _canonical(raw):
    return tuple(sorted(raw))


def enumerate_groups(task: Task | SyncTask, fleet: Fleet,
                     max_groups: int = DEFAULT_MAX_GROUPS) -> GroupSet:
    search = _Search(task, fleet)
    seen = set()
    for raw in search.run():
        seen.add(_canonical(raw))
        if len(seen) > max_groups:
            raise ExplosionGuard(
                f"{task.name or 'task'}: more than {max_groups} agent groups")
    if not seen:
        raise EmptyGroupSet(f"no agent group satisfies the pattern of {task.name or 'task'}")
    return GroupSet(tuple(sorted(seen)), task)


def group_count(task: Task | SyncTask, fleet: Fleet,
                max_groups: int = DEFAULT_MAX_GROUPS) -> int:
    """Number of canonical groups; 0 when the pattern is infeasible.

    For element-symmetric patterns the search only visits sorted element
    sequences, so nothing is stored.
    """
    search = _Search(task, fleet)
    if search.ordered:
        count = 0
        for _ in search.run():
            count += 1
            if count > max_groups:
                raise ExplosionGuard(
                    f"{task.name or 'task'}: more than {max_groups} agent groups")
        return count
    try:
        return len(enumerate_groups(task, fleet, max_groups))
    except EmptyGroupSet:
        return 0


def satisfies_pattern(group: AgentGroup, task: Task | SyncTask, fleet: Fleet) -> bool:
    """Whether some ordering of ``group``'s elements meets every constraint."""
    return any(_check_ordered(perm, task, fleet)
               for perm in itertools.permutations(group))


def _check_ordered(group, task, fleet):
    for con in task.pattern:
        if isinstance(con, Capability):
            p = group[con.element - 1][con.slot - 1]
            if con.name not in fleet.agent(p).capabilities:
                return False
        elif isinstance(con, Assign):
            if group[con.element - 1][con.slot - 1] != con.agent:
                return False
        elif isinstance(con, AllDifferentWithinElement):
            e = group[con.element - 1]
            if len(set(e)) != len(e):
                return False
        elif isinstance(con, NotEqual):
            (i1, n1), (i2, n2) = con.first, con.second
            if group[i1 - 1][n1 - 1] == group[i2 - 1][n2 - 1]:
                return False
        elif isinstance(con, PairwiseDisjointElements):
            for e, f in itertools.combinations(group, 2):
                if set(e) & set(f):
                    return False
    return True
