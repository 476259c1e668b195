import copy
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from syncstl.milp import BINARY, INTEGER, EncodingError, EncodingContext, MilpModel, assemble_problem
from syncstl.solver import (ERROR, FEASIBLE, INFEASIBLE, OPTIMAL, TIMEOUT, CommandBackend,
                            SolveOptions, SolverError, SolverNotFound, export_lp, export_model,
                            export_mps, parse_lp, parse_solution, solve)

GOLDEN = Path(__file__).parent / "golden"


def max_x():
    m = MilpModel()
    x = m.add_var("x")
    m.add_constr(x, "<=", 3)
    m.set_objective(x, "maximize")
    return m


def test_golden_lp():
    text = export_lp(max_x())
    assert text == (GOLDEN / "max_x.lp").read_text()
    assert len(text.splitlines()) == 5


def test_max_x():
    sol = solve(max_x())
    assert sol.status == OPTIMAL and sol.values["x"] == 3


def test_infeasible_toy():
    m = MilpModel()
    x = m.add_var("x", lb=-10, ub=10)
    m.add_constr(x, ">=", 1)
    m.add_constr(x, "<=", 0)
    sol = solve(m)
    assert sol.status == INFEASIBLE and not sol.has_values


def test_integer_program():
    m = MilpModel()
    x, y = m.add_var("x", INTEGER, 0, 10), m.add_var("y", BINARY)
    m.add_constr(2 * x + 3 * y, "<=", 7.5)
    m.set_objective(x + 2 * y, "maximize")
    sol = solve(m)
    assert sol.status == OPTIMAL and (sol.values["x"], sol.values["y"]) == (2, 1)


def test_export_is_deterministic(desk):
    a = assemble_problem(desk.spec, desk.fleet, desk.models, desk.context()).model
    b = assemble_problem(desk.spec, desk.fleet, desk.models, desk.context()).model
    assert export_model(a, "lp") == export_model(b, "lp")
    assert export_model(a, "mps") == export_model(b, "mps")


def test_round_trip_case1(case1):
    m = assemble_problem(case1.spec, case1.fleet, case1.models, case1.context()).model
    back = parse_lp(export_lp(m))
    assert (back.num_vars, back.num_constraints, back.num_binaries) == \
        (m.num_vars, m.num_constraints, m.num_binaries)
    order = {n: i for i, n in enumerate(back.names)}
    for c, d in zip(m.constraints, back.constraints):
        assert c.sense == d.sense and float(f"{c.rhs:.12g}") == d.rhs
        assert {m.names[i]: float(f"{v:.12g}") for i, v in c.terms.items()} == \
            {back.names[i]: v for i, v in d.terms.items()}
    assert set(order) == set(m.names)


def test_lp_numbers_have_12_digits():
    m = MilpModel()
    x = m.add_var("x")
    m.add_constr(x * (1 / 3), "<=", math.pi)
    text = export_lp(m)
    assert "0.333333333333 x" in text and "3.14159265359" in text


def test_export_rejects_bad_input():
    m = MilpModel()
    x = m.add_var("x y")
    m.add_constr(x, "<=", 1)
    with pytest.raises(ValueError):
        export_lp(m)
    m = MilpModel()
    x = m.add_var("x")
    with pytest.raises(EncodingError):
        m.add_constr(x * float("nan"), "<=", 1)


def test_mps_is_readable_by_highs(tmp_path, toy):
    import highspy
    m = assemble_problem(toy.spec, toy.fleet, toy.models, toy.context()).model
    ref = solve(m)
    for fmt in ("lp", "mps"):
        path = tmp_path / f"m.{fmt}"
        path.write_bytes(export_model(m, fmt))
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.readModel(str(path))
        h.run()
        assert h.getInfo().objective_function_value == pytest.approx(ref.objective, abs=1e-6)


def test_same_seed_same_answer(toy):
    m = assemble_problem(toy.spec, toy.fleet, toy.models, toy.context()).model
    a, b = solve(m, SolveOptions(seed=3)), solve(m, SolveOptions(seed=3))
    assert a.values == b.values


# -- solution files


def test_parse_plain():
    sol = parse_solution("# status optimal\n# objective 2.5\n# gap 0\nx 1\ny 1.5\n")
    assert sol.status == OPTIMAL and sol.values == {"x": 1.0, "y": 1.5} and sol.objective == 2.5
    assert parse_solution("# status infeasible\n").status == INFEASIBLE
    with pytest.raises(SolverError):
        parse_solution("x 1 2\n", "plain")


def test_parse_highs_format():
    text = """Model status
Optimal

# Primal solution values
Feasible
Objective 3
# Columns 2
x 3
y 0
# Rows 1
c0 3
"""
    sol = parse_solution(text)
    assert sol.status == OPTIMAL and sol.values == {"x": 3.0, "y": 0.0} and sol.objective == 3


def test_parse_cbc_format():
    text = ("Optimal - objective value 4.00000000\n"
            "      0 x                      2                       0\n"
            "      1 y                      1                       0\n")
    sol = parse_solution(text)
    assert sol.status == OPTIMAL and sol.values == {"x": 2.0, "y": 1.0} and sol.objective == 4
    stopped = parse_solution("Stopped on time - objective value 1.0\n      0 x 1 0\n")
    assert stopped.status == TIMEOUT and stopped.values == {"x": 1.0}


def test_parse_xml_format():
    text = """<?xml version="1.0"?>
<CPLEXSolution version="1.2">
 <header objectiveValue="7" solutionStatusString="integer optimal solution"/>
 <variables>
  <variable name="x" index="0" value="7"/>
 </variables>
</CPLEXSolution>"""
    sol = parse_solution(text)
    assert sol.status == OPTIMAL and sol.values == {"x": 7.0}


def test_command_backend_round_trip(toy):
    m = assemble_problem(toy.spec, toy.fleet, toy.models, toy.context()).model
    ref = solve(m)
    cli = solve(m, SolveOptions(solver="highs-cli"))
    assert cli.status == OPTIMAL
    assert cli.objective == pytest.approx(ref.objective, abs=1e-6)


def test_command_from_environment(monkeypatch):
    monkeypatch.delenv("SYNCSTL_SOLVER_CMD", raising=False)
    with pytest.raises(SolverNotFound):
        solve(max_x(), SolveOptions(solver="command"))
    monkeypatch.setenv("SYNCSTL_SOLVER_CMD",
                       f"{sys.executable} -m syncstl.highs_runner {{model_path}} {{solution_path}}")
    assert solve(max_x(), SolveOptions(solver="command")).values["x"] == 3


def test_missing_executable():
    with pytest.raises(SolverNotFound):
        CommandBackend("no-such-solver-xyz {model_path}").solve(max_x(), SolveOptions())


def test_time_limit_keeps_incumbent(case1):
    m = assemble_problem(case1.spec, case1.fleet, case1.models, case1.context()).model
    sol = solve(m, SolveOptions(time_limit=2.0))
    assert sol.status in (TIMEOUT, OPTIMAL)
    if sol.status == TIMEOUT and sol.values:
        assert sol.has_values and math.isfinite(sol.objective)
