"""Scenario files: fleet, models, regions, tasks, weights and solver options."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .dynamics import AgentModel, preset
from .milp import EncodingContext
from .solver import SolveOptions
from .spec import DEFAULT_EPSILON, Agent, Fleet, GlobalSpec, SpecError, validate
from .syntax import Box, SpecSyntaxError, _fail, context_from, load_yaml, parse_tasks

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class Scenario:
    spec: GlobalSpec
    fleet: Fleet
    models: Mapping[str, AgentModel]
    horizon: int
    regions: Mapping[str, Box] = field(default_factory=dict)
    beta: float = 0.0
    gamma: Mapping[str, float] = field(default_factory=dict)
    epsilon: float = DEFAULT_EPSILON
    solve: SolveOptions = field(default_factory=SolveOptions)
    name: str = "scenario"
    out_dir: str | None = None

    def context(self, effort_norm: str = "l1") -> EncodingContext:
        return EncodingContext(self.horizon, self.epsilon, self.beta, dict(self.gamma), effort_norm)

    def model_of(self, p: int) -> AgentModel:
        return self.models[self.fleet.agent(p).model]

    def diagnostics(self):
        return validate(self.spec, self.fleet, self.horizon)

    def with_horizon(self, horizon: int) -> "Scenario":
        return replace(self, horizon=horizon)


def _model(name, node):
    if not isinstance(node, dict):
        _fail(node, f"model {name!r} must be a mapping")
    kw = {k: np.array(node[k], float) for k in ("x_bounds", "u_bounds") if k in node}
    try:
        if "preset" in node:
            m = preset(node["preset"], **kw)
        else:
            m = AgentModel(np.array(node["A"], float), np.array(node["B"], float),
                           kw["x_bounds"], kw["u_bounds"], tuple(node.get("position", (0, 1))), name)
    except (KeyError, ValueError, TypeError) as e:
        _fail(node, f"model {name!r}: {e}")
    return m


def _fleet(node, models):
    if not isinstance(node, dict) or "agents" not in node:
        _fail(node, "fleet needs agents:")
    agents = []
    for a in node["agents"]:
        model = a.get("model")
        if model not in models:
            _fail(a, f"agent {a.get('id')}: unknown model {model!r}")
        x0 = a.get("x0")
        if x0 is None or len(x0) != models[model].nx:
            _fail(a, f"agent {a.get('id')}: x0 must have {models[model].nx} components")
        agents.append(Agent(int(a["id"]), frozenset(a.get("capabilities") or []), model, tuple(x0)))
    caps = node.get("capabilities")
    try:
        return Fleet(tuple(agents), frozenset(caps) if caps is not None else None)
    except SpecError as e:
        _fail(node, str(e))


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    doc = load_yaml(text)
    if not isinstance(doc, dict):
        raise SpecSyntaxError("scenario must be a mapping")
    models = {str(k): _model(k, v) for k, v in (doc.get("models") or {}).items()}
    if not models:
        models = {"double_integrator_2d": preset("double_integrator_2d")}
    fleet = _fleet(doc.get("fleet"), models)
    ctx = context_from(doc)
    spec = parse_tasks(doc, ctx)
    for t in spec.all_tasks:
        if not _NAME.fullmatch(t.name):
            _fail(doc, f"task name {t.name!r} must be an identifier")
    horizon = doc.get("horizon")
    if not isinstance(horizon, int) or horizon < 1:
        _fail(doc, "horizon must be a positive integer")
    weights = doc.get("weights") or {}
    beta = float(weights.get("beta", 0.0))
    if beta < 0:
        _fail(weights, "beta must be non-negative")
    gamma = {}
    for k, v in (weights.get("gamma") or {}).items():
        if not isinstance(v, int) or v < 0:
            _fail(weights, f"gamma for {k!r} must be a non-negative integer")
        if k not in {t.name for t in spec.sync_tasks}:
            _fail(weights, f"gamma given for unknown synchronous task {k!r}")
        gamma[str(k)] = v
    s = doc.get("solver") or {}
    opts = SolveOptions(time_limit=float(s.get("time_limit", 600.0)),
                        gap=float(s.get("gap", 1e-4)), threads=int(s.get("threads", 1)),
                        seed=int(s.get("seed", 0)), solver=str(s.get("id", "highs")),
                        command=s.get("command"))
    return Scenario(spec, fleet, models, horizon, ctx.regions, beta, gamma,
                    float(doc.get("epsilon", DEFAULT_EPSILON)), opts,
                    str(doc.get("name", name)), doc.get("out"))


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), path.stem)
