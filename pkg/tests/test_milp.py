import copy
import itertools
import math

import numpy as np
import pytest

from syncstl.dynamics import double_integrator_2d, single_integrator
from syncstl.milp import (BINARY, EncodingContext, EncodingError, Encoder, MilpModel,
                          assemble_problem, decode_sos1, encode_counting_chain, encode_sos1,
                          linearize_max, linearize_min, linearize_product, sos1_binary_count)
from syncstl.solver import INFEASIBLE, OPTIMAL, SolveOptions, solve
from syncstl.spec import (Agent, Fleet, GlobalSpec, Globally, LinearPredicate, Pred, SyncTask,
                          Task)

from harness import compare, valid_instances


def extremes(model, var):
    """(min, max) of one variable over the (MI)LP, or None if infeasible."""
    out = []
    for sense in ("minimize", "maximize"):
        m = copy.deepcopy(model)
        m.set_objective(var, sense)
        sol = solve(m, SolveOptions(time_limit=30))
        if sol.status == INFEASIBLE:
            return None
        assert sol.status == OPTIMAL
        out.append(sol.values[m.names[var.index]])
    return tuple(out)


@pytest.mark.parametrize("n", range(1, 10))
def test_sos1_integral_points_are_unit_vectors(n):
    m = MilpModel()
    lam = [m.add_var(f"l{i}", "continuous", 0, 1) for i in range(n)]
    ys = encode_sos1(m, lam, "s")
    assert len(ys) == sos1_binary_count(n) == math.ceil(math.log2(n))
    rows = [(c.terms, c.sense, c.rhs) for c in m.constraints]
    for point in itertools.product((0, 1), repeat=n + len(ys)):
        ok = True
        for terms, sense, rhs in rows:
            lhs = sum(v * point[i] for i, v in terms.items())
            ok &= (lhs <= rhs + 1e-12) if sense == "<=" else \
                (lhs >= rhs - 1e-12) if sense == ">=" else abs(lhs - rhs) < 1e-12
        assert ok == (sum(point[:n]) == 1 and
                      sum(b << t for t, b in enumerate(point[n:])) == point.index(1))


def test_sos1_decode():
    m = MilpModel()
    lam = [m.add_var(f"l{i}", "continuous", 0, 1) for i in range(5)]
    encode_sos1(m, lam, "s", labels=list("abcde"))
    m.fix(lam[3], 1.0)
    m.set_objective(lam[0], "maximize")
    sol = solve(m)
    site = m.sites[0]
    assert site.labels[decode_sos1(site, [sol.values[n] for n in m.names])] == "d"


def test_product_exhaustive():
    for upper in (1, 4):
        for q, x in itertools.product((0, 1), range(upper + 1)):
            m = MilpModel()
            xv = m.add_var("x", lb=x, ub=x)
            qv = m.add_var("q", BINARY)
            m.fix(qv, q)
            z = linearize_product(m, xv, upper, qv, "z")
            assert extremes(m, z) == (x * q, x * q)


def test_product_bound_audit():
    m = MilpModel()
    x = m.add_var("x", lb=0, ub=5)
    with pytest.raises(EncodingError):
        linearize_product(m, x, 4, m.add_var("q", BINARY), "z")


@pytest.mark.parametrize("seed", range(5))
def test_exact_max_min(seed):
    rng = np.random.default_rng(seed)
    vals = rng.integers(-5, 6, size=rng.integers(1, 6))
    m = MilpModel()
    vs = []
    for i, v in enumerate(vals):
        x = m.add_var(f"v{i}", lb=-5, ub=5)
        m.fix(x, float(v))
        vs.append(x)
    hi, lo = linearize_max(m, vs, "mx"), linearize_min(m, vs, "mn")
    assert extremes(m, hi) == (vals.max(), vals.max())
    assert extremes(m, lo) == (vals.min(), vals.min())


def test_counting_chain_fixed():
    bits = [1, 1, 0, 1, 1, 1, 0, 1]
    m = MilpModel()
    qs = {k: m.add_var(f"q{k}", BINARY) for k in range(len(bits))}
    for k, b in enumerate(bits):
        m.fix(qs[k], b)
    cs = encode_counting_chain(m, qs, len(bits) + 1, "c")
    sol = solve(m)
    assert [round(sol.values[f"c_c{k}"]) for k in range(len(bits))] == [2, 1, 0, 3, 2, 1, 0, 1]


def _one_agent(model):
    return Fleet((Agent(1, frozenset(["a"]), "m", tuple([0.0] * model.nx)),)), {"m": model}


def test_big_m_of_box_predicate():
    fleet, models = _one_agent(double_integrator_2d())
    enc = Encoder(MilpModel(), fleet, models, EncodingContext(1, 1e-4, margin=1e-5))
    enc.add_agents()
    pred = LinearPredicate.from_terms({(1, 0): 1.0}, -2.0)  # x >= 2 on [0, 7]
    assert enc.big_m(pred, (1,)) == pytest.approx(3.5 + 1.5 + 1e-4 + 1e-5)


def test_hand_counted_model():
    """One double integrator, H = 2, task G[0,1] (x >= 2), no sync task.

    states 4*3, controls 2*2, h: two predicate nodes, one G node, the task
    and its single group (5), |u| 4, one effort total and one binary for the
    width-2 SOS1 over {1 - h, h_g0}: 27 columns.
    """
    fleet, models = _one_agent(double_integrator_2d())
    t = Task(Globally(0, 1, Pred(LinearPredicate.from_terms({(1, 0): 1.0}, -2.0))), 1, (), "T")
    pr = assemble_problem(GlobalSpec((t,)), fleet, models, EncodingContext(2, beta=0.1))
    st = pr.model.stats()
    assert st["variables"] == 12 + 4 + 5 + 4 + 1 + 1
    assert st["binaries"] == 1 and st["binaries_by_site_kind"] == {"task": 1}
    sol = solve(pr.model)
    # the task is evaluated at k = 0 where x is pinned to 0 < 2
    assert sol.status == INFEASIBLE


def test_simple_plan_effort():
    fleet, models = _one_agent(single_integrator(1, [(0, 5)], [(-1, 1)]))
    t = Task(Globally(2, 3, Pred(LinearPredicate.from_terms({(1, 0): 1.0}, -1.5))), 1, (), "T")
    pr = assemble_problem(GlobalSpec((t,)), fleet, models, EncodingContext(3, beta=1.0))
    sol = solve(pr.model)
    assert sol.status == OPTIMAL
    # reach 1.5 plus the predicate margin with the least total |u|
    assert sol.objective == pytest.approx(-1.5 - 1e-5, abs=1e-7)


def test_margin_excludes_exact_boundary():
    fleet, models = _one_agent(single_integrator(1, [(0, 5)], [(-1, 1)]))
    t = Task(Globally(2, 3, Pred(LinearPredicate.from_terms({(1, 0): 1.0}, -2.0))), 1, (), "T")
    tight = assemble_problem(GlobalSpec((t,)), fleet, models, EncodingContext(3))
    assert solve(tight.model).status == INFEASIBLE
    loose = assemble_problem(GlobalSpec((t,)), fleet, models, EncodingContext(3, margin=0.0))
    assert solve(loose.model).status == OPTIMAL


def test_horizon_checked():
    fleet, models = _one_agent(single_integrator(1))
    ts = SyncTask(1, 3, 1, Pred(LinearPredicate.from_terms({(1, 0): 1.0}, -2.0)), 1, (), "S")
    with pytest.raises(EncodingError):
        assemble_problem(GlobalSpec((), (ts,)), fleet, models, EncodingContext(3))


def test_gamma_caps_rho(toy):
    ctx = EncodingContext(toy.horizon, beta=0.0, gamma={"band": 1})
    pr = assemble_problem(toy.spec, toy.fleet, toy.models, ctx)
    sol = solve(pr.model)
    assert sol.values["rho_band"] == pytest.approx(1.0)


def test_fixed_state_soundness_small():
    for inst in valid_instances(11, 60):
        assert compare(inst)
