"""Specification language: linear predicates over agent slots, STL inner
formulas, tasks, synchronous tasks, agent-selection patterns and fleets.

Slots and elements are 1-based, state components are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

DEFAULT_EPSILON = 1e-4


class SpecError(ValueError):
    """Malformed specification object."""


class NegatedUntil(SpecError):
    """Until appearing under an odd number of negations."""


# ---------------------------------------------------------------------------
# predicates and inner formulas


@dataclass(frozen=True)
class LinearPredicate:
    """``sum(coef * x[slot][comp]) + offset >= 0``."""

    coeffs: tuple[tuple[tuple[int, int], float], ...]
    offset: float = 0.0

    def __post_init__(self):
        coeffs = tuple(sorted((
            ((int(s), int(c)), float(v)) for (s, c), v in self.coeffs)))
        keys = [k for k, _ in coeffs]
        if len(set(keys)) != len(keys):
            raise SpecError(f"duplicate predicate terms {keys}")
        if not any(v != 0.0 for _, v in coeffs):
            raise SpecError("predicate needs at least one nonzero coefficient")
        for (slot, comp), _ in coeffs:
            if slot < 1 or comp < 0:
                raise SpecError(f"bad predicate term (slot={slot}, comp={comp})")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_terms(cls, terms: Mapping[tuple[int, int], float], offset: float = 0.0):
        return cls(tuple(terms.items()), offset)

    @property
    def n_slots(self) -> int:
        return max(s for (s, _), _ in self.coeffs)

    def negated(self, epsilon: float = DEFAULT_EPSILON) -> "LinearPredicate":
        """Predicate for ``alpha < 0`` realised as ``-alpha - epsilon >= 0``."""
        return LinearPredicate(
            tuple((k, -v) for k, v in self.coeffs), -self.offset - epsilon)


@dataclass(frozen=True)
class Pred:
    pred: LinearPredicate


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise SpecError("empty conjunction")


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if not self.children:
            raise SpecError("empty disjunction")


def _check_interval(a, b):
    if int(a) != a or int(b) != b:
        raise SpecError(f"interval bounds must be integers, got [{a},{b}]")
    if a < 0 or a >= b:
        raise SpecError(f"interval [{a},{b}] must satisfy 0 <= a < b")


@dataclass(frozen=True)
class Globally:
    a: int
    b: int
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Finally:
    a: int
    b: int
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Until:
    a: int
    b: int
    left: "Formula"
    right: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


Formula = Union[Pred, Not, And, Or, Globally, Finally, Until]


def conj(*fs: Formula) -> Formula:
    return fs[0] if len(fs) == 1 else And(tuple(fs))


def disj(*fs: Formula) -> Formula:
    return fs[0] if len(fs) == 1 else Or(tuple(fs))


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, Pred):
        return ()
    if isinstance(f, (Not, Globally, Finally)):
        return (f.child,)
    if isinstance(f, (And, Or)):
        return f.children
    if isinstance(f, Until):
        return (f.left, f.right)
    raise TypeError(f"not a formula: {f!r}")


def predicates(f: Formula) -> Iterable[LinearPredicate]:
    if isinstance(f, Pred):
        yield f.pred
    for c in children(f):
        yield from predicates(c)


def slot_count(f: Formula) -> int:
    """Number of agents N^phi the formula talks about."""
    return max(p.n_slots for p in predicates(f))


def depth(f: Formula) -> int:
    cs = children(f)
    return 0 if not cs else 1 + max(depth(c) for c in cs)


# ---------------------------------------------------------------------------
# agent selection patterns


@dataclass(frozen=True)
class Capability:
    """Slot ``slot`` of element ``element`` needs capability ``name``."""

    element: int
    slot: int
    name: str


@dataclass(frozen=True)
class AllDifferentWithinElement:
    element: int


@dataclass(frozen=True)
class PairwiseDisjointElements:
    pass


@dataclass(frozen=True)
class NotEqual:
    first: tuple[int, int]
    second: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "first", tuple(self.first))
        object.__setattr__(self, "second", tuple(self.second))


@dataclass(frozen=True)
class Assign:
    """Pin slot ``slot`` of element ``element`` to a specific agent."""

    element: int
    slot: int
    agent: int


PatternConstraint = Union[Capability, AllDifferentWithinElement,
                          PairwiseDisjointElements, NotEqual, Assign]


def _pattern_refs(c: PatternConstraint) -> list[tuple[int, int | None]]:
    if isinstance(c, (Capability, Assign)):
        return [(c.element, c.slot)]
    if isinstance(c, AllDifferentWithinElement):
        return [(c.element, None)]
    if isinstance(c, NotEqual):
        return [c.first, c.second]
    return []


def _check_pattern(pattern, count, n_slots, name):
    for c in pattern:
        for i, n in _pattern_refs(c):
            if not 1 <= i <= count:
                raise SpecError(f"{name}: pattern element {i} outside [1,{count}]")
            if n is not None and not 1 <= n <= n_slots:
                raise SpecError(f"{name}: pattern slot {n} outside [1,{n_slots}]")


# ---------------------------------------------------------------------------
# tasks


@dataclass(frozen=True)
class Task:
    """``<inner, count, pattern>``: inner holds for ``count`` pattern-respecting
    agent selections."""

    inner: Formula
    count: int = 1
    pattern: tuple[PatternConstraint, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pattern", tuple(self.pattern))
        if self.count < 1:
            raise SpecError(f"{self.name}: count must be >= 1")
        _check_pattern(self.pattern, self.count, self.n_slots, self.name)

    @property
    def n_slots(self) -> int:
        return slot_count(self.inner)


@dataclass(frozen=True)
class SyncTask:
    """``F[a,b] <G[0,hold] inner, count, pattern>`` with ``inner`` the body of
    the globally."""

    a: int
    b: int
    hold: int
    inner: Formula
    count: int = 1
    pattern: tuple[PatternConstraint, ...] = ()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pattern", tuple(self.pattern))
        _check_interval(self.a, self.b)
        if self.hold < 0 or int(self.hold) != self.hold:
            raise SpecError(f"{self.name}: hold must be a non-negative integer")
        if self.count < 1:
            raise SpecError(f"{self.name}: count must be >= 1")
        _check_pattern(self.pattern, self.count, self.n_slots, self.name)

    @classmethod
    def from_window(cls, a: int, b: int, body: Formula, **kw) -> "SyncTask":
        """Build from ``F[a,b] <G[e,d+e] phi, ...>``, shifting to ``G[0,d]``."""
        if not isinstance(body, Globally):
            raise SpecError("synchronous task body must be a globally formula")
        e = body.a
        return cls(a + e, b + e, body.b - e, body.child, **kw)

    @property
    def n_slots(self) -> int:
        return slot_count(self.inner)


@dataclass(frozen=True)
class GlobalSpec:
    tasks: tuple[Task, ...] = ()
    sync_tasks: tuple[SyncTask, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "sync_tasks", tuple(self.sync_tasks))
        names = [t.name for t in self.all_tasks if t.name]
        if len(set(names)) != len(names):
            raise SpecError(f"duplicate task names in {names}")

    @property
    def all_tasks(self) -> tuple[Task | SyncTask, ...]:
        return self.tasks + self.sync_tasks


# ---------------------------------------------------------------------------
# fleet


@dataclass(frozen=True)
class Agent:
    id: int
    capabilities: frozenset[str]
    model: str
    x0: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))


@dataclass(frozen=True)
class Fleet:
    agents: tuple[Agent, ...]
    capabilities: frozenset[str] = field(default=None)

    def __post_init__(self):
        agents = tuple(sorted(self.agents, key=lambda a: a.id))
        object.__setattr__(self, "agents", agents)
        ids = [a.id for a in agents]
        if ids != list(range(1, len(ids) + 1)):
            raise SpecError(f"agent ids must be unique and contiguous from 1, got {ids}")
        used = frozenset().union(*(a.capabilities for a in agents)) if agents else frozenset()
        caps = used if self.capabilities is None else frozenset(self.capabilities)
        if not used <= caps:
            raise SpecError(f"capabilities {sorted(used - caps)} not in the fleet universe")
        object.__setattr__(self, "capabilities", caps)

    @property
    def ids(self) -> list[int]:
        return [a.id for a in self.agents]

    def agent(self, p: int) -> Agent:
        return self.agents[p - 1]

    def with_capability(self, name: str) -> list[int]:
        return [a.id for a in self.agents if name in a.capabilities]


# ---------------------------------------------------------------------------
# horizon and normal form


def formula_horizon(f) -> int:
    """Future steps needed to evaluate ``f`` at time 0."""
    if isinstance(f, GlobalSpec):
        return max((formula_horizon(t) for t in f.all_tasks), default=0)
    if isinstance(f, Task):
        return formula_horizon(f.inner)
    if isinstance(f, SyncTask):
        return f.b + f.hold + formula_horizon(f.inner)
    if isinstance(f, Pred):
        return 0
    if isinstance(f, (Not, And, Or)):
        return max(formula_horizon(c) for c in children(f))
    if isinstance(f, (Globally, Finally)):
        return f.b + formula_horizon(f.child)
    if isinstance(f, Until):
        return f.b + max(formula_horizon(f.left), formula_horizon(f.right))
    raise TypeError(f"cannot take the horizon of {f!r}")


def to_nnf(f: Formula, epsilon: float = DEFAULT_EPSILON) -> Formula:
    """Push negations onto predicates and absorb them there.

    The result contains no ``Not`` node: a negated predicate ``alpha >= 0``
    becomes ``-alpha - epsilon >= 0``.
    """
    return _nnf(f, False, epsilon)


def _nnf(f, neg, eps):
    if isinstance(f, Pred):
        return Pred(f.pred.negated(eps)) if neg else f
    if isinstance(f, Not):
        return _nnf(f.child, not neg, eps)
    if isinstance(f, (And, Or)):
        cs = tuple(_nnf(c, neg, eps) for c in f.children)
        flip = isinstance(f, And) == neg
        return Or(cs) if flip else And(cs)
    if isinstance(f, (Globally, Finally)):
        c = _nnf(f.child, neg, eps)
        flip = isinstance(f, Globally) == neg
        return Finally(f.a, f.b, c) if flip else Globally(f.a, f.b, c)
    if isinstance(f, Until):
        if neg:
            raise NegatedUntil("Until under negation is not supported")
        return Until(f.a, f.b, _nnf(f.left, False, eps), _nnf(f.right, False, eps))
    raise TypeError(f"not a formula: {f!r}")


def is_nnf(f: Formula) -> bool:
    return not isinstance(f, Not) and all(is_nnf(c) for c in children(f))


def normalize(spec: GlobalSpec, epsilon: float = DEFAULT_EPSILON) -> GlobalSpec:
    """Spec with every inner formula in negation normal form."""
    from dataclasses import replace
    return GlobalSpec(
        tuple(replace(t, inner=to_nnf(t.inner, epsilon)) for t in spec.tasks),
        tuple(replace(t, inner=to_nnf(t.inner, epsilon)) for t in spec.sync_tasks))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    task: str
    message: str

    def __str__(self):
        return self.message


def validate(spec: GlobalSpec, fleet: Fleet, horizon: int) -> list[Diagnostic]:
    from .groups import group_count

    out = []
    for i, t in enumerate(spec.all_tasks):
        name = t.name or f"task#{i + 1}"
        need = formula_horizon(t)
        if need > horizon:
            out.append(Diagnostic(name, f"horizon exceeded by {name} (needs {need})"))
        empty = sorted({c.name for c in t.pattern if isinstance(c, Capability)
                        and not fleet.with_capability(c.name)})
        for cap in empty:
            out.append(Diagnostic(name, f"{name}: capability {cap} has no agents"))
        bad = sorted({c.agent for c in t.pattern if isinstance(c, Assign)
                      and c.agent not in fleet.ids})
        for p in bad:
            out.append(Diagnostic(name, f"{name}: agent {p} is not in the fleet"))
        if not empty and not bad and group_count(t, fleet) == 0:
            out.append(Diagnostic(name, f"no feasible group for {name}"))
    return out


def all_agents_pattern(ids: Sequence[int]) -> tuple[int, tuple[Assign, ...]]:
    """Count and pattern binding element i to agent ids[i] (single-slot)."""
    return len(ids), tuple(Assign(i + 1, 1, p) for i, p in enumerate(ids))


def all_pairs_pattern(ids: Sequence[int]) -> tuple[int, tuple[Assign, ...]]:
    """Count and pattern binding one element per unordered agent pair."""
    pairs = [(p, q) for i, p in enumerate(ids) for q in ids[i + 1:]]
    pattern = []
    for i, (p, q) in enumerate(pairs):
        pattern += [Assign(i + 1, 1, p), Assign(i + 1, 2, q)]
    return len(pairs), tuple(pattern)
