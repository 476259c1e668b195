"""Compilation of a global specification into a solver-agnostic MILP.

Indicator variables ``h`` are continuous in [0, 1]; ``h = 1`` enforces the
formula node they stand for. Binaries appear only where a choice is made:
disjunctions (log-encoded SOS1), the synchronous satisfaction flags ``q``
and the selectors of exact max/min linearizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dynamics import AgentModel
from .groups import GroupSet, enumerate_groups
from .spec import (DEFAULT_EPSILON, And, Finally, Fleet, GlobalSpec, Globally,
                   LinearPredicate, Not, Or, Pred, SyncTask, Task, Until,
                   formula_horizon, is_nnf, normalize)

CONTINUOUS, BINARY, INTEGER = "continuous", "binary", "integer"


class EncodingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# expressions


class LinExpr:
    """Sparse affine expression ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | None = None, const: float = 0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    @staticmethod
    def of(x) -> "LinExpr":
        if isinstance(x, LinExpr):
            return x
        return LinExpr({}, float(x))

    def __add__(self, other):
        other = LinExpr.of(other)
        t = dict(self.terms)
        for i, v in other.terms.items():
            t[i] = t.get(i, 0.0) + v
        return LinExpr(t, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({i: -v for i, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-LinExpr.of(other))

    def __rsub__(self, other):
        return LinExpr.of(other) - self

    def __mul__(self, s):
        s = float(s)
        return LinExpr({i: v * s for i, v in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LinExpr({self.terms}, {self.const})"


class Var(LinExpr):
    __slots__ = ("index",)

    def __init__(self, index: int):
        super().__init__({index: 1.0})
        self.index = index


def lsum(items: Iterable) -> LinExpr:
    out = LinExpr()
    for it in items:
        out = out + it
    return out


# ---------------------------------------------------------------------------
# model container


@dataclass
class Constraint:
    terms: dict[int, float]
    sense: str  # "<=", ">=", "="
    rhs: float
    name: str


@dataclass
class Site:
    """A disjunction/selector site and its binaries, kept for reporting."""

    name: str
    kind: str
    width: int
    binaries: list[int]
    labels: list = field(default_factory=list)
    task: str | None = None


@dataclass
class MilpModel:
    names: list[str] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_const: float = 0.0
    quadratic: dict[tuple[int, int], float] = field(default_factory=dict)
    sense: str = "maximize"
    registry: dict[str, int] = field(default_factory=dict)
    sites: list[Site] = field(default_factory=list)
    big_m: dict[str, tuple[float, float]] = field(default_factory=dict)
    current_task: str | None = None

    # -- variables
    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0,
                ub: float = math.inf) -> Var:
        if name in self.registry:
            raise EncodingError(f"duplicate variable name {name!r}")
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        idx = len(self.names)
        self.names.append(name)
        self.kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.registry[name] = idx
        return Var(idx)

    def var(self, name: str) -> Var:
        return Var(self.registry[name])

    def fix(self, v: Var | int | str, value: float):
        i = self._idx(v)
        self.lb[i] = self.ub[i] = float(value)

    def set_bounds(self, v, lb=None, ub=None):
        i = self._idx(v)
        if lb is not None:
            self.lb[i] = float(lb)
        if ub is not None:
            self.ub[i] = float(ub)

    def _idx(self, v):
        if isinstance(v, Var):
            return v.index
        if isinstance(v, str):
            return self.registry[v]
        return int(v)

    # -- constraints
    def add_constr(self, lhs, sense: str, rhs=0.0, name: str | None = None):
        e = LinExpr.of(lhs) - LinExpr.of(rhs)
        terms = {i: v for i, v in e.terms.items() if v != 0.0}
        if sense not in ("<=", ">=", "="):
            raise EncodingError(f"bad sense {sense!r}")
        for v in list(terms.values()) + [e.const]:
            if not math.isfinite(v):
                raise EncodingError("non-finite coefficient")
        c = Constraint(terms, sense, -e.const, name or f"c{len(self.constraints)}")
        self.constraints.append(c)
        return c

    def set_objective(self, expr, sense: str = "maximize"):
        e = LinExpr.of(expr)
        self.objective = {i: v for i, v in e.terms.items() if v != 0.0}
        self.objective_const = e.const
        self.sense = sense

    # -- introspection
    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def num_binaries(self) -> int:
        return sum(k == BINARY for k in self.kinds)

    def bounds(self, e: LinExpr) -> tuple[float, float]:
        """Interval bounds of an affine expression from variable bounds."""
        lo = hi = e.const
        for i, v in e.terms.items():
            a, b = v * self.lb[i], v * self.ub[i]
            lo += min(a, b)
            hi += max(a, b)
        return lo, hi

    def value(self, e: LinExpr, values: Sequence[float]) -> float:
        return e.const + sum(v * values[i] for i, v in e.terms.items())

    def stats(self) -> dict:
        by_kind = {}
        for s in self.sites:
            by_kind.setdefault(s.kind, 0)
            by_kind[s.kind] += len(s.binaries)
        return {
            "variables": self.num_vars,
            "constraints": self.num_constraints,
            "binaries": self.num_binaries,
            "continuous": sum(k == CONTINUOUS for k in self.kinds),
            "binaries_by_site_kind": by_kind,
        }


def sos1_binary_count(width: int) -> int:
    """ceil(log2(width)) for width >= 1."""
    if width < 1:
        raise EncodingError("SOS1 needs at least one entry")
    return (width - 1).bit_length()


def encode_sos1(model: MilpModel, entries: Sequence[LinExpr], name: str,
                kind: str = "sos1", labels: Sequence | None = None) -> list[Var]:
    """Force ``entries`` (each in [0, 1]) to be a unit vector.

    Entry j carries the binary code j. For each bit t, entries whose code has
    bit t set sum to at most y_t and the others to at most 1 - y_t, so only
    the entry whose code equals y can be nonzero; ``sum(entries) = 1`` then
    pins it to one.
    """
    n = len(entries)
    m = sos1_binary_count(n)
    ys = [model.add_var(f"{name}_y{t}", BINARY) for t in range(m)]
    model.add_constr(lsum(entries), "=", 1.0, f"{name}_sum")
    for t, y in enumerate(ys):
        on = [e for j, e in enumerate(entries) if (j >> t) & 1]
        off = [e for j, e in enumerate(entries) if not (j >> t) & 1]
        model.add_constr(lsum(on), "<=", y, f"{name}_b{t}on")
        model.add_constr(lsum(off), "<=", 1 - y, f"{name}_b{t}off")
    model.sites.append(Site(name, kind, n, [y.index for y in ys], list(labels or []),
                            model.current_task))
    return ys


def decode_sos1(site: Site, values: Sequence[float]) -> int:
    """Index of the active entry given solved binary values."""
    return sum(int(round(values[b])) << t for t, b in enumerate(site.binaries))


def linearize_product(model: MilpModel, x: LinExpr, upper: float, q: Var,
                      name: str) -> Var:
    """``z = x * q`` for binary q and 0 <= x <= upper."""
    if not math.isfinite(upper):
        raise EncodingError("product linearization needs a finite upper bound")
    lo, hi = model.bounds(LinExpr.of(x))
    if lo < 0 or hi > upper:
        raise EncodingError(f"{name}: factor range [{lo}, {hi}] not within [0, {upper}]")
    z = model.add_var(name, CONTINUOUS, 0.0, hi)
    model.add_constr(z, "<=", upper * q, f"{name}_q")
    model.add_constr(z, "<=", x, f"{name}_x")
    model.add_constr(z, ">=", x - upper * (1 - q), f"{name}_lo")
    return z


def _extremum(model, vals, name, is_max):
    vals = [LinExpr.of(v) for v in vals]
    if not vals:
        raise EncodingError(f"{name}: empty max/min")
    bnds = [model.bounds(v) for v in vals]
    if not all(math.isfinite(b) for lh in bnds for b in lh):
        raise EncodingError(f"{name}: unbounded operand")
    R = max(h for _, h in bnds) - min(l for l, _ in bnds)
    if is_max:
        r = model.add_var(name, CONTINUOUS, max(l for l, _ in bnds), max(h for _, h in bnds))
    else:
        r = model.add_var(name, CONTINUOUS, min(l for l, _ in bnds), min(h for _, h in bnds))
    deltas = [model.add_var(f"{name}_d{i}", CONTINUOUS, 0.0, 1.0) for i in range(len(vals))]
    for i, (v, d) in enumerate(zip(vals, deltas)):
        if is_max:
            model.add_constr(r, ">=", v, f"{name}_ge{i}")
            model.add_constr(r, "<=", v + R * (1 - d), f"{name}_le{i}")
        else:
            model.add_constr(r, "<=", v, f"{name}_le{i}")
            model.add_constr(r, ">=", v - R * (1 - d), f"{name}_ge{i}")
    encode_sos1(model, deltas, f"{name}_sel", "max" if is_max else "min")
    return r


def linearize_max(model: MilpModel, vals: Sequence, name: str) -> Var:
    """Exact ``r = max(vals)`` with log-encoded selector binaries."""
    return _extremum(model, vals, name, True)


def linearize_min(model: MilpModel, vals: Sequence, name: str) -> Var:
    return _extremum(model, vals, name, False)


def encode_counting_chain(model: MilpModel, qs: Mapping[int, Var], upper: float,
                          name: str) -> dict[int, Var]:
    """Suffix run lengths ``c(k) = (c(k+1) + 1) * q(k)``, ``c(last+1) = 0``."""
    ks = sorted(qs)
    if ks != list(range(ks[0], ks[-1] + 1)):
        raise EncodingError("counting chain needs consecutive steps")
    out = {}
    nxt = LinExpr()
    for k in reversed(ks):
        out[k] = linearize_product(model, nxt + 1, upper, qs[k], f"{name}_c{k}")
        nxt = out[k]
    return out


# ---------------------------------------------------------------------------
# encoder


@dataclass(frozen=True)
class EncodingContext:
    horizon: int
    epsilon: float = DEFAULT_EPSILON
    beta: float = 0.0
    gamma: Mapping[str, float] = field(default_factory=dict)
    effort_norm: str = "l1"
    margin: float = 1e-5  # enforced predicates hold with alpha >= margin

    def __post_init__(self):
        if self.epsilon <= 0:
            raise EncodingError("strictness margin epsilon must be positive")
        if self.beta < 0:
            raise EncodingError("beta must be non-negative")
        if self.margin < 0:
            raise EncodingError("predicate margin must be non-negative")
        if self.effort_norm not in ("l1", "l2"):
            raise EncodingError(f"unknown effort norm {self.effort_norm!r}")


def _ename(element) -> str:
    return "x".join(str(p) for p in element)


class Encoder:
    """Appends the encodings of one problem to a single MilpModel."""

    def __init__(self, model: MilpModel, fleet: Fleet, models: Mapping[str, AgentModel],
                 ctx: EncodingContext):
        self.model = model
        self.fleet = fleet
        self.models = {a.id: models[a.model] for a in fleet.agents}
        self.ctx = ctx
        self.H = ctx.horizon
        self.x: dict[int, list[list[Var]]] = {}
        self.u: dict[int, list[list[Var]]] = {}
        self._h: dict = {}
        self._node_ids: dict = {}
        self._pred_m: dict = {}
        self.task_h: dict[str, Var] = {}
        self.rho: dict[str, Var] = {}
        self.rho_global: Var | None = None
        self.effort: dict[int, Var] = {}
        self.groups: dict = {}

    # -- states and dynamics
    def add_agents(self, with_dynamics: bool = True):
        m = self.model
        for a in self.fleet.agents:
            am = self.models[a.id]
            xs, us = [], []
            for k in range(self.H + 1):
                xs.append([m.add_var(f"x_p{a.id}_k{k}_{i}", CONTINUOUS, *am.x_bounds[i])
                           for i in range(am.nx)])
            for k in range(self.H):
                us.append([m.add_var(f"u_p{a.id}_k{k}_{i}", CONTINUOUS, *am.u_bounds[i])
                           for i in range(am.nu)])
            for i, v in enumerate(a.x0):
                m.fix(xs[0][i], v)
            if with_dynamics:
                for k in range(self.H):
                    for i in range(am.nx):
                        rhs = lsum(am.A[i, j] * xs[k][j] for j in range(am.nx) if am.A[i, j]) + \
                            lsum(am.B[i, j] * us[k][j] for j in range(am.nu) if am.B[i, j])
                        m.add_constr(xs[k + 1][i], "=", rhs, f"dyn_p{a.id}_k{k}_{i}")
            self.x[a.id], self.u[a.id] = xs, us

    # -- inner logic
    def _node(self, f) -> int:
        if f not in self._node_ids:
            self._node_ids[f] = len(self._node_ids)
        return self._node_ids[f]

    def big_m(self, pred: LinearPredicate, element) -> float:
        key = (pred, element)
        if key not in self._pred_m:
            center = pred.offset
            spread = 0.0
            for (slot, comp), coef in pred.coeffs:
                lo, hi = self.models[element[slot - 1]].x_bounds[comp]
                center += coef * (lo + hi) / 2
                spread += abs(coef) * (hi - lo) / 2
            M = spread + abs(center) + self.ctx.epsilon + self.ctx.margin
            sup = max(abs(center + spread), abs(center - spread))
            if sup + self.ctx.margin > M:
                raise EncodingError("big-M audit failed")
            self._pred_m[key] = M
            self.model.big_m[f"n{self._node(Pred(pred))}_e{_ename(element)}"] = (M, sup)
        return self._pred_m[key]

    def alpha(self, pred: LinearPredicate, element, k: int) -> LinExpr:
        e = LinExpr({}, pred.offset)
        for (slot, comp), coef in pred.coeffs:
            p = element[slot - 1]
            if comp >= len(self.x[p][k]):
                raise EncodingError(f"agent {p} has no state component {comp}")
            e = e + coef * self.x[p][k][comp]
        return e

    def encode_inner(self, f, element, k: int) -> Var:
        element = tuple(element)
        key = (f, element, k)
        if key in self._h:
            return self._h[key]
        if k + formula_horizon(f) > self.H:
            raise EncodingError(f"formula at k={k} needs {formula_horizon(f)} steps past H={self.H}")
        m = self.model
        name = f"h_n{self._node(f)}_e{_ename(element)}_k{k}"
        h = m.add_var(name, CONTINUOUS, 0.0, 1.0)
        if isinstance(f, Pred):
            M = self.big_m(f.pred, element)
            m.add_constr(self.alpha(f.pred, element, k), ">=",
                         M * (h - 1) + self.ctx.margin * h, name)
        elif isinstance(f, And):
            for i, c in enumerate(f.children):
                m.add_constr(h, "<=", self.encode_inner(c, element, k), f"{name}_and{i}")
        elif isinstance(f, Or):
            hs = [self.encode_inner(c, element, k) for c in f.children]
            self._choose(h, hs, f"{name}_or", "or")
        elif isinstance(f, Globally):
            for t in range(k + f.a, k + f.b + 1):
                m.add_constr(h, "<=", self.encode_inner(f.child, element, t), f"{name}_g{t}")
        elif isinstance(f, Finally):
            hs = [self.encode_inner(f.child, element, t) for t in range(k + f.a, k + f.b + 1)]
            self._choose(h, hs, f"{name}_f", "finally")
        elif isinstance(f, Until):
            ws = []
            for t in range(k + f.a, k + f.b + 1):
                w = m.add_var(f"{name}_w{t}", CONTINUOUS, 0.0, 1.0)
                m.add_constr(w, "<=", self.encode_inner(f.right, element, t), f"{name}_w{t}r")
                for s in range(k, t + 1):
                    m.add_constr(w, "<=", self.encode_inner(f.left, element, s), f"{name}_w{t}l{s}")
                ws.append(w)
            encode_sos1(m, [1 - h] + ws, f"{name}_u", "until")
        elif isinstance(f, Not):
            raise EncodingError("formula must be in negation normal form")
        else:
            raise TypeError(f"not a formula: {f!r}")
        self._h[key] = h
        return h

    def _choose(self, h, children, name, kind):
        """h = 1 selects one child and enforces it.

        Children are shared with other parents through the cache, so the SOS1
        sits on private selectors s_i <= h_i rather than on the children: an
        unselected child stays free for whoever else needs it.
        """
        m = self.model
        sel = []
        for i, c in enumerate(children):
            s = m.add_var(f"{name}_s{i}", CONTINUOUS, 0.0, 1.0)
            m.add_constr(s, "<=", c, f"{name}_s{i}")
            sel.append(s)
        encode_sos1(m, [1 - h] + sel, name, kind)

    # -- tasks
    def _groups_for(self, task, groups):
        if groups is None:
            groups = enumerate_groups(task, self.fleet)
        self.groups[task] = groups
        return groups

    def encode_task(self, task: Task, groups: GroupSet | None = None, k: int = 0) -> Var:
        groups = self._groups_for(task, groups)
        m = self.model
        tag = task.name or f"T{len(self.task_h)}"
        m.current_task = tag
        h = m.add_var(f"h_task_{tag}_k{k}", CONTINUOUS, 0.0, 1.0)
        hj = []
        for j, g in enumerate(groups):
            v = m.add_var(f"h_task_{tag}_g{j}_k{k}", CONTINUOUS, 0.0, 1.0)
            for i, e in enumerate(g):
                m.add_constr(self.encode_inner(task.inner, e, k), ">=", v,
                             f"task_{tag}_g{j}_e{i}_k{k}")
            hj.append(v)
        encode_sos1(m, [1 - h] + hj, f"task_{tag}_k{k}", "task",
                    labels=[None] + list(range(len(groups))))
        self.task_h[tag] = h
        m.current_task = None
        return h

    def encode_sync_task(self, ts: SyncTask, groups: GroupSet | None = None,
                         k: int = 0) -> Var:
        groups = self._groups_for(ts, groups)
        m = self.model
        tag = ts.name or f"S{len(self.rho)}"
        m.current_task = tag
        hor = formula_horizon(ts.inner)
        kmax = self.H - hor
        if k + ts.b + ts.hold + hor > self.H:
            raise EncodingError(f"{tag}: needs horizon {k + ts.b + ts.hold + hor} > {self.H}")
        upper = self.H + 1
        durations = []
        for j, g in enumerate(groups):
            qs = {}
            for t in range(k + ts.a, kmax + 1):
                q = m.add_var(f"q_{tag}_g{j}_k{t}", BINARY)
                for i, e in enumerate(g):
                    m.add_constr(self.encode_inner(ts.inner, e, t), ">=", q,
                                 f"sync_{tag}_g{j}_e{i}_k{t}")
                qs[t] = q
            m.sites.append(Site(f"q_{tag}_g{j}", "sync_flag", len(qs),
                                [q.index for q in qs.values()], task=tag))
            chain = encode_counting_chain(m, qs, upper, f"cnt_{tag}_g{j}")
            window = [chain[t] for t in range(k + ts.a, k + ts.b + 1)]
            durations.append(linearize_max(m, window, f"dur_{tag}_g{j}"))
        best = linearize_max(m, durations, f"best_{tag}")
        lo, hi = m.bounds(best)
        rho = m.add_var(f"rho_{tag}", CONTINUOUS, lo - ts.hold, hi - ts.hold)
        m.add_constr(rho, "=", best - ts.hold, f"rho_{tag}_def")
        self.rho[tag] = rho
        m.current_task = None
        return rho

    # -- control effort
    def add_effort(self):
        m = self.model
        for p, us in self.u.items():
            if self.ctx.effort_norm == "l2":
                continue
            absu = []
            for k, row in enumerate(us):
                for i, u in enumerate(row):
                    bound = max(abs(m.lb[u.index]), abs(m.ub[u.index]))
                    a = m.add_var(f"absu_p{p}_k{k}_{i}", CONTINUOUS, 0.0, bound)
                    m.add_constr(a, ">=", u, f"absu_p{p}_k{k}_{i}_pos")
                    m.add_constr(a, ">=", -1 * u, f"absu_p{p}_k{k}_{i}_neg")
                    absu.append(a)
            t = m.add_var(f"effort_p{p}", CONTINUOUS, 0.0, m.bounds(lsum(absu))[1])
            m.add_constr(t, ">=", lsum(absu), f"effort_p{p}")
            self.effort[p] = t


@dataclass
class Problem:
    """A built model together with the encoder bookkeeping needed to read it."""

    model: MilpModel
    encoder: Encoder
    spec: GlobalSpec
    groups: dict

    @property
    def rho(self):
        return self.encoder.rho

    def control_var(self, p, k, i) -> Var:
        return self.encoder.u[p][k][i]


def assemble_problem(spec: GlobalSpec, fleet: Fleet, models: Mapping[str, AgentModel],
                     ctx: EncodingContext, groups: Mapping | None = None,
                     with_dynamics: bool = True) -> Problem:
    """Problem 1 as a MILP: max rho - beta * effort subject to the dynamics,
    every general task and 0 <= rho_l <= gamma_l for every synchronous task."""
    spec = normalize(spec, ctx.epsilon)
    model = MilpModel()
    enc = Encoder(model, fleet, models, ctx)
    enc.add_agents(with_dynamics)
    # groups may be keyed by the pre-normalization tasks; match by name/index
    for t in spec.tasks:
        h = enc.encode_task(t, _lookup(groups, t))
        model.fix(h, 1.0)
    for ts in spec.sync_tasks:
        rho = enc.encode_sync_task(ts, _lookup(groups, ts))
        lo, hi = model.lb[rho.index], model.ub[rho.index]
        gamma = ctx.gamma.get(ts.name)
        if gamma is not None:
            hi = min(hi, float(gamma))
        if hi >= 0:
            model.set_bounds(rho, lb=max(lo, 0.0), ub=hi)
        else:
            # infeasible by construction; keep the bounds consistent
            model.set_bounds(rho, ub=hi)
            model.add_constr(rho, ">=", 0.0, f"rho_{rho.index}_nonneg")
    objective = LinExpr()
    if enc.rho:
        enc.rho_global = linearize_min(model, list(enc.rho.values()), "rho_global")
        objective = objective + enc.rho_global
    enc.add_effort()
    if ctx.beta:
        if ctx.effort_norm == "l1":
            objective = objective - ctx.beta * lsum(enc.effort.values())
        else:
            for us in enc.u.values():
                for row in us:
                    for u in row:
                        model.quadratic[(u.index, u.index)] = -ctx.beta
    model.set_objective(objective, "maximize")
    return Problem(model, enc, spec, enc.groups)


def _lookup(groups, task):
    if not groups:
        return None
    if task in groups:
        return groups[task]
    for key, g in groups.items():
        if getattr(key, "name", None) == task.name and task.name:
            return g
    return None
