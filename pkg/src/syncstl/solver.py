"""MILP interchange (CPLEX-LP / free MPS), solver invocation and plan extraction."""

from __future__ import annotations

import logging
import math
import os
import re
import shlex
import subprocess
import sys
import tempfile
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .milp import BINARY, CONTINUOUS, INTEGER, LinExpr, MilpModel, Problem, decode_sos1

log = logging.getLogger(__name__)

OPTIMAL, FEASIBLE, INFEASIBLE, UNBOUNDED, TIMEOUT, ERROR = (
    "optimal", "feasible", "infeasible", "unbounded", "timeout", "error")

INT_TOL = 1e-5
# HiGHS 1.15.1 presolve rule 15 cut off the true optimum of small fixed-state
# sync models (reported optimal rho 1 where 2 is feasible); skip it by default.
HIGHS_PRESOLVE_RULE_OFF = 1 << 15
SOLVER_CMD_ENV = "SYNCSTL_SOLVER_CMD"


class SolverError(RuntimeError):
    pass


class SolverNotFound(SolverError):
    pass


class VerificationFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# export


def _num(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"non-finite coefficient {v}")
    s = format(v, ".12g")
    return "0" if s == "-0" else s


def _bound(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return _num(v)


def _linear(terms: Mapping[int, float], names) -> str:
    parts = []
    for i in sorted(terms):
        v = terms[i]
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        coef = "" if mag == 1 else _num(mag) + " "
        if not parts:
            parts.append(("- " if v < 0 else "") + coef + names[i])
        else:
            parts.append(f"{sign} {coef}{names[i]}")
    return " ".join(parts)


def _check_names(model: MilpModel):
    for names in (model.names, [c.name for c in model.constraints]):
        seen = set()
        for n in names:
            if n in seen:
                raise ValueError(f"name collision: {n!r}")
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.]*", n):
                raise ValueError(f"name {n!r} is not LP-safe")
            seen.add(n)


def export_lp(model: MilpModel) -> str:
    """Deterministic CPLEX-LP text; variables appear in registry order."""
    _check_names(model)
    names = model.names
    out = ["Maximize" if model.sense == "maximize" else "Minimize"]
    obj = _linear(model.objective, names)
    if not obj and model.num_vars:
        obj = f"0 {names[0]}"
    if model.objective_const:
        obj += f" {'-' if model.objective_const < 0 else '+'} {_num(abs(model.objective_const))}"
    if model.quadratic:
        quad = []
        for (i, j), v in sorted(model.quadratic.items()):
            term = f"{names[i]} ^2" if i == j else f"{names[i]} * {names[j]}"
            q = 2 * v
            quad.append(f"{'-' if q < 0 else '+'} {_num(abs(q))} {term}")
        obj += " + [ " + " ".join(quad) + " ] / 2"
    out.append(f" obj: {obj}")
    out.append("Subject To")
    for c in model.constraints:
        lhs = _linear(c.terms, names) or f"0 {names[0]}"
        out.append(f" {c.name}: {lhs} {c.sense} {_num(c.rhs)}")
    bounds = []
    for i, n in enumerate(names):
        if model.kinds[i] == BINARY:
            continue
        lo, hi = model.lb[i], model.ub[i]
        if lo == hi:
            bounds.append(f" {n} = {_num(lo)}")
        elif lo == -math.inf and hi == math.inf:
            bounds.append(f" {n} free")
        elif lo != 0 or hi != math.inf:
            bounds.append(f" {_bound(lo)} <= {n} <= {_bound(hi)}")
    if bounds:
        out.append("Bounds")
        out += bounds
    gens = [n for n, k in zip(names, model.kinds) if k == INTEGER]
    if gens:
        out.append("Generals")
        out += [f" {n}" for n in gens]
    bins = [n for n, k in zip(names, model.kinds) if k == BINARY]
    if bins:
        out.append("Binaries")
        out += [f" {n}" for n in bins]
    out.append("End")
    return "\n".join(out) + "\n"


def export_mps(model: MilpModel) -> str:
    """Free-format MPS text."""
    _check_names(model)
    if model.quadratic:
        raise ValueError("MPS export of quadratic objectives is not supported")
    names = model.names
    out = ["NAME syncstl", "OBJSENSE", "    MAX" if model.sense == "maximize" else "    MIN",
           "ROWS", " N obj"]
    code = {"<=": "L", ">=": "G", "=": "E"}
    cols: dict[int, list[tuple[str, float]]] = {i: [] for i in range(len(names))}
    for i, v in sorted(model.objective.items()):
        cols[i].append(("obj", v))
    for c in model.constraints:
        out.append(f" {code[c.sense]} {c.name}")
        for i, v in sorted(c.terms.items()):
            cols[i].append((c.name, v))
    out.append("COLUMNS")
    in_int = False
    for i, n in enumerate(names):
        is_int = model.kinds[i] == INTEGER
        if is_int != in_int:
            out.append(f"    MARKER 'MARKER' '{'INTORG' if is_int else 'INTEND'}'")
            in_int = is_int
        entries = cols[i] or [("obj", 0.0)]
        for row, v in entries:
            out.append(f"    {n} {row} {_num(v)}")
    if in_int:
        out.append("    MARKER 'MARKER' 'INTEND'")
    out.append("RHS")
    for c in model.constraints:
        if c.rhs:
            out.append(f"    RHS {c.name} {_num(c.rhs)}")
    if model.objective_const:
        out.append(f"    RHS obj {_num(-model.objective_const)}")
    out.append("BOUNDS")
    for i, n in enumerate(names):
        lo, hi = model.lb[i], model.ub[i]
        if model.kinds[i] == BINARY:
            out.append(f" BV BND {n}")
        elif lo == hi:
            out.append(f" FX BND {n} {_num(lo)}")
        elif lo == -math.inf and hi == math.inf:
            out.append(f" FR BND {n}")
        else:
            if lo == -math.inf:
                out.append(f" MI BND {n}")
            elif lo != 0:
                out.append(f" LO BND {n} {_num(lo)}")
            if hi != math.inf:
                out.append(f" UP BND {n} {_num(hi)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def export_model(model: MilpModel, fmt: str = "lp") -> bytes:
    fmt = fmt.lower()
    if fmt in ("lp", "lp-text"):
        return export_lp(model).encode()
    if fmt in ("mps", "mps-text"):
        return export_mps(model).encode()
    raise ValueError(f"unknown export format {fmt!r}")


# ---------------------------------------------------------------------------
# LP re-import (own dialect plus common variations)

_SECTIONS = {
    "maximize": "max", "maximise": "max", "maximum": "max", "max": "max",
    "minimize": "min", "minimise": "min", "minimum": "min", "min": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen",
    "end": "end",
}
_TERM = re.compile(r"([+-]?)\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)?\s*"
                   r"([A-Za-z_][A-Za-z0-9_.]*)?")


def _parse_linear(text: str, model: MilpModel) -> tuple[dict[int, float], float]:
    terms: dict[int, float] = {}
    const = 0.0
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse expression near {text[pos:pos + 20]!r}")
        sign, num, name = m.groups()
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
        s = -1.0 if sign == "-" else 1.0
        if name is None:
            const += s * float(num)
            continue
        if name not in model.registry:
            model.add_var(name, CONTINUOUS)
        i = model.registry[name]
        terms[i] = terms.get(i, 0.0) + s * (float(num) if num else 1.0)
    return terms, const


def _parse_value(tok: str) -> float:
    t = tok.lower().lstrip("+")
    if t in ("inf", "infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


def parse_lp(text: str) -> MilpModel:
    """Read a CPLEX-LP document into a MilpModel (linear objective only)."""
    model = MilpModel()
    section = None
    pending = ""
    bounds_seen = set()
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section in ("max", "min"):
                model.sense = "maximize" if section == "max" else "minimize"
            continue
        if section in ("max", "min"):
            body = line.split(":", 1)[1] if ":" in line else line
            if "[" in body:
                raise ValueError("quadratic objectives are not supported by the reader")
            terms, const = _parse_linear(body, model)
            for i, v in terms.items():
                model.objective[i] = model.objective.get(i, 0.0) + v
            model.objective_const += const
        elif section == "st":
            pending = f"{pending} {line}".strip()
            m = re.search(r"(<=|>=|=<|=>|<|>|=)\s*([-+]?\S+)\s*$", pending)
            if not m:
                continue
            head = pending[:m.start()]
            name = None
            if ":" in head:
                name, head = head.split(":", 1)
                name = name.strip()
            terms, const = _parse_linear(head, model)
            sense = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(m.group(1), m.group(1))
            model.add_constr(LinExpr(terms, const), sense, float(m.group(2)), name)
            pending = ""
        elif section == "bounds":
            toks = line.split()
            if len(toks) == 2 and toks[1].lower() == "free":
                i = _ensure(model, toks[0])
                model.lb[i], model.ub[i] = -math.inf, math.inf
            elif len(toks) == 5:
                i = _ensure(model, toks[2])
                model.lb[i], model.ub[i] = _parse_value(toks[0]), _parse_value(toks[4])
            elif len(toks) == 3:
                a, op, b = toks
                if re.match(r"^[A-Za-z_]", a) and a.lower() not in ("inf", "infinity"):
                    i, v = _ensure(model, a), _parse_value(b)
                    if op == "=":
                        model.lb[i] = model.ub[i] = v
                    elif op in ("<=", "=<", "<"):
                        model.ub[i] = v
                    else:
                        model.lb[i] = v
                else:
                    i, v = _ensure(model, b), _parse_value(a)
                    if op in ("<=", "=<", "<"):
                        model.lb[i] = v
                    else:
                        model.ub[i] = v
            else:
                raise ValueError(f"cannot parse bound {line!r}")
            bounds_seen.add(line)
        elif section in ("bin", "gen"):
            for n in line.split():
                i = _ensure(model, n)
                if section == "bin":
                    model.kinds[i] = BINARY
                    model.lb[i], model.ub[i] = 0.0, 1.0
                else:
                    model.kinds[i] = INTEGER
        elif section == "end":
            break
    return model


def _ensure(model, name):
    if name not in model.registry:
        model.add_var(name, CONTINUOUS)
    return model.registry[name]


# ---------------------------------------------------------------------------
# solutions


@dataclass(frozen=True)
class Solution:
    status: str
    values: Mapping[str, float] = field(default_factory=dict)
    objective: float = math.nan
    gap: float = math.nan
    solve_time: float = 0.0

    @property
    def has_values(self) -> bool:
        """Optimal, feasible, or a timeout that kept an incumbent."""
        return bool(self.values) and self.status in (OPTIMAL, FEASIBLE, TIMEOUT)


@dataclass(frozen=True)
class SolveOptions:
    """``presolve_rule_off`` is passed to HiGHS as is (a bitmask of presolve
    rules to skip)."""

    time_limit: float = 600.0
    gap: float = 1e-4
    threads: int = 1
    seed: int = 0
    solver: str = "highs"
    command: str | None = None
    presolve_rule_off: int = HIGHS_PRESOLVE_RULE_OFF


def _round_binaries(model, values):
    out = dict(values)
    for i, n in enumerate(model.names):
        if model.kinds[i] in (BINARY, INTEGER) and n in out:
            v = out[n]
            r = round(v)
            if abs(v - r) > INT_TOL:
                log.warning("integer variable %s = %g outside integrality tolerance", n, v)
            out[n] = float(r)
    return out


class HighsBackend:
    """In-process HiGHS via highspy."""

    def solve(self, model: MilpModel, options: SolveOptions) -> Solution:
        try:
            import highspy
        except ImportError as e:
            raise SolverNotFound("highspy is not installed") from e
        if model.quadratic and any(k != CONTINUOUS for k in model.kinds):
            raise SolverError("HiGHS cannot solve mixed-integer quadratic objectives; use --effort-norm l1")
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        inf = highspy.kHighsInf
        n = model.num_vars
        lp = highspy.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = len(model.constraints)
        cost = np.zeros(n)
        for i, v in model.objective.items():
            cost[i] = v
        lp.col_cost_ = cost
        lp.offset_ = model.objective_const
        lp.col_lower_ = np.array([max(v, -inf) for v in model.lb], float)
        lp.col_upper_ = np.array([min(v, inf) for v in model.ub], float)
        rl, ru = [], []
        cols: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for r, c in enumerate(model.constraints):
            rl.append(c.rhs if c.sense in (">=", "=") else -inf)
            ru.append(c.rhs if c.sense in ("<=", "=") else inf)
            for i, v in c.terms.items():
                cols[i].append((r, v))
        lp.row_lower_ = np.array(rl, float)
        lp.row_upper_ = np.array(ru, float)
        start, index, value = [0], [], []
        for col in cols:
            for r, v in col:
                index.append(r)
                value.append(v)
            start.append(len(index))
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = np.array(start, dtype=np.int32)
        lp.a_matrix_.index_ = np.array(index, dtype=np.int32)
        lp.a_matrix_.value_ = np.array(value, float)
        lp.sense_ = highspy.ObjSense.kMaximize if model.sense == "maximize" else highspy.ObjSense.kMinimize
        kinds = {CONTINUOUS: highspy.HighsVarType.kContinuous,
                 BINARY: highspy.HighsVarType.kInteger,
                 INTEGER: highspy.HighsVarType.kInteger}
        if any(k != CONTINUOUS for k in model.kinds):
            lp.integrality_ = [kinds[k] for k in model.kinds]
        h.passModel(lp)
        if model.quadratic:
            _pass_hessian(h, model, highspy)
        h.setOptionValue("time_limit", float(options.time_limit))
        h.setOptionValue("mip_rel_gap", float(options.gap))
        h.setOptionValue("threads", int(options.threads))
        h.setOptionValue("random_seed", int(options.seed))
        h.setOptionValue("presolve_rule_off", int(options.presolve_rule_off))
        t0 = time.perf_counter()
        h.run()
        elapsed = time.perf_counter() - t0
        ms = h.getModelStatus()
        S = highspy.HighsModelStatus
        info = h.getInfo()
        sol = h.getSolution()
        has_x = info.primal_solution_status == 2  # kSolutionStatusFeasible
        if ms == S.kOptimal:
            status = OPTIMAL
        elif ms == S.kInfeasible:
            status = INFEASIBLE
        elif ms in (S.kUnbounded, S.kUnboundedOrInfeasible):
            status = UNBOUNDED if ms == S.kUnbounded else INFEASIBLE
        elif ms in (S.kTimeLimit, S.kIterationLimit, S.kSolutionLimit, S.kInterrupt):
            status = TIMEOUT
        else:
            status = ERROR
        values = {}
        if has_x and status in (OPTIMAL, FEASIBLE, TIMEOUT):
            values = _round_binaries(model, dict(zip(model.names, sol.col_value)))
        gap = float(info.mip_gap) if any(k != CONTINUOUS for k in model.kinds) else 0.0
        obj = float(info.objective_function_value) if values else math.nan
        return Solution(status, values, obj, gap, elapsed)


def _pass_hessian(h, model, highspy):
    n = model.num_vars
    cols: dict[int, list[tuple[int, float]]] = {}
    sign = -1.0 if model.sense == "maximize" else 1.0
    for (i, j), v in model.quadratic.items():
        a, b = min(i, j), max(i, j)
        cols.setdefault(a, []).append((b, sign * 2 * v))
    start, index, value = [0], [], []
    for c in range(n):
        for r, v in sorted(cols.get(c, [])):
            index.append(r)
            value.append(v)
        start.append(len(index))
    hs = highspy.HighsHessian()
    hs.dim_ = n
    hs.format_ = highspy.HessianFormat.kTriangular
    hs.start_ = np.array(start, dtype=np.int32)
    hs.index_ = np.array(index, dtype=np.int32)
    hs.value_ = np.array(value, float)
    h.passHessian(hs)


# -- solution files


def parse_solution(text: str, fmt: str = "auto") -> Solution:
    """Parse a solver solution file (plain, HiGHS, CBC, Gurobi .sol or XML)."""
    stripped = text.lstrip()
    if fmt == "auto":
        if stripped.startswith("<"):
            fmt = "xml"
        elif stripped.startswith("Model status"):
            fmt = "highs"
        elif re.match(r"^(Optimal|Infeasible|Stopped|Integer infeasible|Unbounded)", stripped):
            fmt = "cbc"
        else:
            fmt = "plain"
    return {"plain": _parse_plain, "highs": _parse_highs, "cbc": _parse_cbc,
            "xml": _parse_xml}[fmt](text)


def _status_word(s: str) -> str:
    s = s.strip().lower()
    if "optimal" in s:
        return OPTIMAL
    if "infeasible" in s:
        return INFEASIBLE
    if "unbounded" in s:
        return UNBOUNDED
    if "time" in s or "limit" in s or "stopped" in s:
        return TIMEOUT
    if "feasible" in s:
        return FEASIBLE
    return ERROR


def _parse_plain(text):
    status, obj, gap, t = None, math.nan, math.nan, 0.0
    values = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, _, rest = body.partition(" ")
            rest = rest.lstrip("= ").strip()
            kl = key.lower()
            if kl == "status":
                status = _status_word(rest)
            elif kl == "objective":
                obj = float(rest.split()[-1])
            elif kl == "gap":
                gap = float(rest)
            elif kl == "time":
                t = float(rest)
            continue
        toks = line.split()
        if len(toks) != 2:
            raise SolverError(f"malformed solution line {line!r}")
        values[toks[0]] = float(toks[1])
    if status is None:
        status = FEASIBLE if values else ERROR
    return Solution(status, values if status in (OPTIMAL, FEASIBLE, TIMEOUT) else {}, obj, gap, t)


def _parse_highs(text):
    lines = [l.strip() for l in text.splitlines()]
    status, obj, values = ERROR, math.nan, {}
    i = 0
    while i < len(lines):
        l = lines[i]
        if l == "Model status" and i + 1 < len(lines):
            status = _status_word(lines[i + 1])
            i += 2
            continue
        if l.startswith("Objective"):
            obj = float(l.split()[-1])
        m = re.match(r"# Columns (\d+)", l)
        if m and not values:
            n = int(m.group(1))
            for row in lines[i + 1:i + 1 + n]:
                name, val = row.split()[:2]
                values[name] = float(val)
            i += n
        i += 1
    return Solution(status, values if status in (OPTIMAL, FEASIBLE, TIMEOUT) else {}, obj)


def _parse_cbc(text):
    lines = text.splitlines()
    head = lines[0] if lines else ""
    status = _status_word(head.split("-")[0]) if head else ERROR
    m = re.search(r"objective value\s+([-+\d.eE]+)", head)
    obj = float(m.group(1)) if m else math.nan
    values = {}
    for l in lines[1:]:
        toks = l.replace("**", "").split()
        if len(toks) >= 3:
            values[toks[1]] = float(toks[2])
    return Solution(status, values if status in (OPTIMAL, FEASIBLE, TIMEOUT) else {}, obj)


def _parse_xml(text):
    root = ET.fromstring(text)
    header = root.find("header")
    status, obj = ERROR, math.nan
    if header is not None:
        status = _status_word(header.get("solutionStatusString", ""))
        if header.get("objectiveValue") is not None:
            obj = float(header.get("objectiveValue"))
    values = {v.get("name"): float(v.get("value")) for v in root.iter("variable")}
    return Solution(status, values if status in (OPTIMAL, FEASIBLE, TIMEOUT) else {}, obj)


class CommandBackend:
    """External solver invoked through a command template.

    The template may use ``{model_path}``, ``{solution_path}`` and
    ``{time_limit}``; the model is written as CPLEX-LP.
    """

    def __init__(self, template: str, fmt: str = "auto"):
        self.template = template
        self.fmt = fmt

    def solve(self, model: MilpModel, options: SolveOptions) -> Solution:
        with tempfile.TemporaryDirectory(prefix="syncstl-") as tmp:
            mp, sp = Path(tmp) / "model.lp", Path(tmp) / "solution.txt"
            mp.write_bytes(export_model(model, "lp"))
            cmd = self.template.format(model_path=shlex.quote(str(mp)),
                                       solution_path=shlex.quote(str(sp)),
                                       time_limit=options.time_limit)
            t0 = time.perf_counter()
            try:
                proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True,
                                      timeout=options.time_limit + 60)
            except FileNotFoundError as e:
                raise SolverNotFound(f"solver executable not found: {cmd.split()[0]}") from e
            except subprocess.TimeoutExpired:
                return Solution(TIMEOUT, solve_time=time.perf_counter() - t0)
            elapsed = time.perf_counter() - t0
            if not sp.exists():
                raise SolverError(f"solver wrote no solution (exit {proc.returncode}): "
                                  f"{proc.stderr.strip()[-500:]}")
            sol = parse_solution(sp.read_text(), self.fmt)
        values = _round_binaries(model, sol.values) if sol.values else {}
        missing = [n for n in model.names if values and n not in values]
        if missing:
            raise SolverError(f"solution misses {len(missing)} variables, e.g. {missing[0]}")
        return Solution(sol.status, values, sol.objective, sol.gap, sol.solve_time or elapsed)


def runner_template() -> str:
    return f"{shlex.quote(sys.executable)} -m syncstl.highs_runner {{model_path}} {{solution_path}} {{time_limit}}"


def backend_for(options: SolveOptions):
    if options.solver == "highs":
        return HighsBackend()
    if options.solver == "highs-cli":
        return CommandBackend(runner_template())
    if options.solver == "command":
        template = options.command or os.environ.get(SOLVER_CMD_ENV)
        if not template:
            raise SolverNotFound(f"no solver command configured (set {SOLVER_CMD_ENV})")
        return CommandBackend(template)
    raise SolverNotFound(f"unknown solver id {options.solver!r}")


def solve(model: MilpModel, options: SolveOptions | None = None) -> Solution:
    options = options or SolveOptions()
    return backend_for(options).solve(model, options)
