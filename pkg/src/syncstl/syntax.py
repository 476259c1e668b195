"""YAML surface syntax for specifications.

Formula nodes are single-key mappings::

    pred:       {terms: [[slot, component, coef], ...], offset: c}
    not:        <formula>
    and / or:   [<formula>, ...]
    always / eventually: {interval: [a, b], formula: <formula>}
    until:      {interval: [a, b], left: <formula>, right: <formula>}
    in / out:   REGION  or  {region: REGION, slot: n}
    near/apart: {slots: [n1, n2], r: radius}     # inf-norm distance <= r / >= r

Region and distance nodes are expanded to predicates on the position
components at parse time; the printer emits the expanded form.
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .spec import (AllDifferentWithinElement, And, Assign, Capability, Finally,
                   GlobalSpec, Globally, LinearPredicate, Not, NotEqual, Or,
                   PairwiseDisjointElements, Pred, SpecError, SyncTask, Task,
                   Until, all_agents_pattern, all_pairs_pattern)


class SpecSyntaxError(ValueError):
    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class _MarkedDict(dict):
    mark = None


class _MarkedList(list):
    mark = None


class _Loader(yaml.SafeLoader):
    pass


def _map(loader, node):
    d = _MarkedDict(loader.construct_mapping(node, deep=True))
    d.mark = node.start_mark
    return d


def _seq(loader, node):
    s = _MarkedList(loader.construct_sequence(node, deep=True))
    s.mark = node.start_mark
    return s


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _seq)


def load_yaml(text: str):
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        raise SpecSyntaxError(e.problem or str(e),
                              mark.line + 1 if mark else None,
                              mark.column + 1 if mark else None) from None


def _fail(node, msg):
    mark = getattr(node, "mark", None)
    if mark is None:
        raise SpecSyntaxError(msg)
    raise SpecSyntaxError(msg, mark.line + 1, mark.column + 1)


@dataclass(frozen=True)
class Box:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    @property
    def center(self):
        return ((self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2)


def parse_regions(node) -> dict[str, Box]:
    out = {}
    for name, r in (node or {}).items():
        try:
            box = Box(*(float(r[k]) for k in ("xmin", "xmax", "ymin", "ymax")))
        except (KeyError, TypeError, ValueError):
            _fail(node, f"region {name!r} needs numeric xmin, xmax, ymin, ymax")
        if box.xmin > box.xmax or box.ymin > box.ymax:
            _fail(r, f"region {name!r} has reversed bounds")
        out[str(name)] = box
    return out


class _Context:
    def __init__(self, regions=None, position=(0, 1), capabilities=None, agent_ids=None):
        self.regions = regions or {}
        self.position = tuple(position)
        self.capabilities = capabilities
        self.agent_ids = agent_ids


def _interval(node, where):
    iv = node.get("interval") if isinstance(node, dict) else None
    if not isinstance(iv, list) or len(iv) != 2 or not all(isinstance(v, int) for v in iv):
        _fail(node, f"{where} needs interval: [a, b] with integer bounds")
    a, b = iv
    if a < 0 or b < 0:
        _fail(node, f"{where}: negative interval [{a}, {b}]")
    if a >= b:
        _fail(node, f"{where}: reversed or empty interval [{a}, {b}]")
    return a, b


def _box_preds(box: Box, slot: int, ctx: _Context):
    px, py = ctx.position
    P = lambda terms, off: Pred(LinearPredicate.from_terms(terms, off))
    return (P({(slot, px): 1.0}, -box.xmin), P({(slot, px): -1.0}, box.xmax),
            P({(slot, py): 1.0}, -box.ymin), P({(slot, py): -1.0}, box.ymax))


def _dist_preds(s1, s2, r, ctx, near):
    px, py = ctx.position
    out = []
    for c in (px, py):
        for sign in (1.0, -1.0):
            terms = {(s1, c): sign, (s2, c): -sign}
            if near:
                # r - sign*(z1 - z2) >= 0
                out.append(Pred(LinearPredicate.from_terms({k: -v for k, v in terms.items()}, r)))
            else:
                out.append(Pred(LinearPredicate.from_terms(terms, -r)))
    return out


def parse_formula(node, ctx: _Context):
    if not isinstance(node, dict) or not node:
        _fail(node, f"formula must be a mapping with one operator, got {node!r}")
    ops = [k for k in node if k in _OPS]
    if len(ops) != 1:
        _fail(node, f"formula needs exactly one operator among {sorted(_OPS)}, got {list(node)}")
    op = ops[0]
    extra = set(node) - {op} - ({"slot"} if op in ("in", "out") else set())
    if extra:
        _fail(node, f"unexpected keys {sorted(extra)} in {op!r} node")
    try:
        return _OPS[op](node, node[op], ctx)
    except SpecError as e:
        _fail(node, str(e))


def _p_pred(node, arg, ctx):
    if not isinstance(arg, dict) or "terms" not in arg:
        _fail(node, "pred needs terms: [[slot, component, coef], ...]")
    terms = {}
    for t in arg["terms"]:
        if not isinstance(t, list) or len(t) != 3:
            _fail(arg, f"bad predicate term {t!r}")
        terms[(int(t[0]), int(t[1]))] = float(t[2])
    return Pred(LinearPredicate.from_terms(terms, float(arg.get("offset", 0.0))))


def _p_not(node, arg, ctx):
    return Not(parse_formula(arg, ctx))


def _p_nary(cls):
    def f(node, arg, ctx):
        if not isinstance(arg, list) or not arg:
            _fail(node, f"{cls.__name__.lower()} needs a nonempty list")
        return cls(tuple(parse_formula(c, ctx) for c in arg))
    return f


def _p_temporal(cls, word):
    def f(node, arg, ctx):
        a, b = _interval(arg, word)
        if "formula" not in arg:
            _fail(arg, f"{word} needs formula:")
        return cls(a, b, parse_formula(arg["formula"], ctx))
    return f


def _p_until(node, arg, ctx):
    a, b = _interval(arg, "until")
    if "left" not in arg or "right" not in arg:
        _fail(arg, "until needs left: and right:")
    return Until(a, b, parse_formula(arg["left"], ctx), parse_formula(arg["right"], ctx))


def _region_arg(node, arg, ctx):
    if isinstance(arg, dict):
        name, slot = arg.get("region"), int(arg.get("slot", 1))
    else:
        name, slot = arg, int(node.get("slot", 1))
    if name not in ctx.regions:
        _fail(node, f"unknown region {name!r}")
    return ctx.regions[name], slot


def _p_in(node, arg, ctx):
    box, slot = _region_arg(node, arg, ctx)
    return And(_box_preds(box, slot, ctx))


def _p_out(node, arg, ctx):
    box, slot = _region_arg(node, arg, ctx)
    return Not(And(_box_preds(box, slot, ctx)))


def _p_dist(near):
    def f(node, arg, ctx):
        if not isinstance(arg, dict) or "r" not in arg:
            _fail(node, "distance node needs slots: [n1, n2] and r:")
        s1, s2 = arg.get("slots", [1, 2])
        preds = _dist_preds(int(s1), int(s2), float(arg["r"]), ctx, near)
        return And(tuple(preds)) if near else Or(tuple(preds))
    return f


_OPS = {
    "pred": _p_pred, "not": _p_not, "and": _p_nary(And), "or": _p_nary(Or),
    "always": _p_temporal(Globally, "always"), "eventually": _p_temporal(Finally, "eventually"),
    "until": _p_until, "in": _p_in, "out": _p_out, "near": _p_dist(True), "apart": _p_dist(False),
}


def parse_pattern(node, ctx: _Context):
    out = []
    for c in node or []:
        if not isinstance(c, dict):
            _fail(node, f"pattern constraint must be a mapping, got {c!r}")
        if "capability" in c:
            cap = str(c["capability"])
            if ctx.capabilities is not None and cap not in ctx.capabilities:
                _fail(c, f"unknown capability {cap!r}")
            out.append(Capability(int(c.get("element", 1)), int(c.get("slot", 1)), cap))
        elif "all_different" in c:
            out.append(AllDifferentWithinElement(int(c["all_different"])))
        elif "disjoint" in c:
            if c["disjoint"]:
                out.append(PairwiseDisjointElements())
        elif "not_equal" in c:
            a, b = c["not_equal"]
            out.append(NotEqual(tuple(int(v) for v in a), tuple(int(v) for v in b)))
        elif "agent" in c:
            p = int(c["agent"])
            if ctx.agent_ids is not None and p not in ctx.agent_ids:
                _fail(c, f"unknown agent {p}")
            out.append(Assign(int(c.get("element", 1)), int(c.get("slot", 1)), p))
        else:
            _fail(c, f"unknown pattern constraint {dict(c)}")
    return tuple(out)


def parse_task(node, ctx: _Context, index: int):
    if not isinstance(node, dict):
        _fail(node, "task must be a mapping")
    kind = node.get("kind", "sync" if "window" in node else "task")
    name = str(node.get("name", f"{'S' if kind == 'sync' else 'T'}{index + 1}"))
    if "formula" not in node:
        _fail(node, f"task {name!r} needs formula:")
    inner = parse_formula(node["formula"], ctx)
    count = node.get("count", 1)
    pattern = parse_pattern(node.get("pattern"), ctx)
    bind = node.get("bind")
    if bind is not None:
        if ctx.agent_ids is None:
            _fail(node, "bind: needs a fleet in the same document")
        if bind == "each":
            count, extra = all_agents_pattern(ctx.agent_ids)
        elif bind == "pairs":
            count, extra = all_pairs_pattern(ctx.agent_ids)
        else:
            _fail(node, f"bind must be 'each' or 'pairs', got {bind!r}")
        if count == 0:
            _fail(node, f"bind: {bind} yields no agents")
        pattern = pattern + extra
    if not isinstance(count, int) or count < 1:
        _fail(node, f"task {name!r}: count must be a positive integer")
    try:
        if kind == "task":
            return Task(inner, count, pattern, name)
        if kind == "sync":
            win = node.get("window")
            if not isinstance(win, list) or len(win) != 2 or not all(isinstance(v, int) for v in win):
                _fail(node, f"sync task {name!r} needs window: [a, b]")
            a, b = win
            if a < 0 or b < 0 or a >= b:
                _fail(node, f"sync task {name!r}: negative or reversed window [{a}, {b}]")
            if "hold" in node:
                hold = node["hold"]
                if not isinstance(hold, int) or hold < 0:
                    _fail(node, f"sync task {name!r}: hold must be a non-negative integer")
                return SyncTask(a, b, hold, inner, count, pattern, name)
            return SyncTask.from_window(a, b, inner, count=count, pattern=pattern, name=name)
    except SpecError as e:
        _fail(node, str(e))
    _fail(node, f"unknown task kind {kind!r}")


def parse_tasks(doc, ctx: _Context) -> GlobalSpec:
    tasks = doc.get("tasks") if isinstance(doc, dict) else None
    if tasks is None:
        tasks = []
    if not isinstance(tasks, list):
        _fail(doc, "tasks must be a list")
    parsed = [parse_task(t, ctx, i) for i, t in enumerate(tasks)]
    try:
        return GlobalSpec(tuple(t for t in parsed if isinstance(t, Task)),
                          tuple(t for t in parsed if isinstance(t, SyncTask)))
    except SpecError as e:
        _fail(doc, str(e))


def context_from(doc) -> _Context:
    regions = parse_regions(doc.get("regions")) if isinstance(doc, dict) else {}
    position = doc.get("position", [0, 1]) if isinstance(doc, dict) else [0, 1]
    caps = ids = None
    fleet = doc.get("fleet") if isinstance(doc, dict) else None
    if isinstance(fleet, dict):
        agents = fleet.get("agents") or []
        caps = set(fleet.get("capabilities") or [])
        for a in agents:
            caps |= set(a.get("capabilities") or [])
        ids = sorted(int(a["id"]) for a in agents if "id" in a)
    return _Context(regions, position, caps, ids)


def parse_spec(text: str) -> GlobalSpec:
    """Parse the ``tasks`` of a document (regions/fleet in it are used for
    expansion and name checks)."""
    doc = load_yaml(text) or {}
    if not isinstance(doc, dict):
        raise SpecSyntaxError("document must be a mapping")
    return parse_tasks(doc, context_from(doc))


# ---------------------------------------------------------------------------
# printing


def formula_to_data(f):
    if isinstance(f, Pred):
        return {"pred": {"terms": [[s, c, v] for (s, c), v in f.pred.coeffs],
                         "offset": f.pred.offset}}
    if isinstance(f, Not):
        return {"not": formula_to_data(f.child)}
    if isinstance(f, And):
        return {"and": [formula_to_data(c) for c in f.children]}
    if isinstance(f, Or):
        return {"or": [formula_to_data(c) for c in f.children]}
    if isinstance(f, Globally):
        return {"always": {"interval": [f.a, f.b], "formula": formula_to_data(f.child)}}
    if isinstance(f, Finally):
        return {"eventually": {"interval": [f.a, f.b], "formula": formula_to_data(f.child)}}
    if isinstance(f, Until):
        return {"until": {"interval": [f.a, f.b], "left": formula_to_data(f.left),
                          "right": formula_to_data(f.right)}}
    raise TypeError(f"not a formula: {f!r}")


def pattern_to_data(pattern):
    out = []
    for c in pattern:
        if isinstance(c, Capability):
            out.append({"capability": c.name, "element": c.element, "slot": c.slot})
        elif isinstance(c, AllDifferentWithinElement):
            out.append({"all_different": c.element})
        elif isinstance(c, PairwiseDisjointElements):
            out.append({"disjoint": True})
        elif isinstance(c, NotEqual):
            out.append({"not_equal": [list(c.first), list(c.second)]})
        elif isinstance(c, Assign):
            out.append({"agent": c.agent, "element": c.element, "slot": c.slot})
    return out


def task_to_data(t):
    d = {"name": t.name}
    if isinstance(t, SyncTask):
        d.update(kind="sync", window=[t.a, t.b], hold=t.hold)
    else:
        d["kind"] = "task"
    d["count"] = t.count
    d["formula"] = formula_to_data(t.inner)
    d["pattern"] = pattern_to_data(t.pattern)
    return d


def print_spec(spec: GlobalSpec) -> str:
    data = {"tasks": [task_to_data(t) for t in spec.all_tasks]}
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=100)
